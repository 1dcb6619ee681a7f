#pragma once

// Linear heads over frozen features, the three softmax losses used by the
// pipeline, and the mini-batch SGD trainer.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ppa/dataset.hpp"
#include "ppa/error.hpp"
#include "ppa/linalg.hpp"
#include "ppa/prior.hpp"
#include "ppa/random.hpp"

namespace ppa {

enum class TargetSpace { kClass, kGroup };

inline std::string_view to_string(TargetSpace t) { return t == TargetSpace::kClass ? "class" : "group"; }

class LinearScorer {
 public:
  LinearScorer() = default;

  LinearScorer(Matrix weights, TargetSpace space, std::optional<Vector> bias = std::nullopt)
      : weights_(std::move(weights)), bias_(std::move(bias)), space_(space) {
    if (weights_.rows() < 2) throw ValidationError("a scorer needs at least two outputs");
    if (bias_ && bias_->size() != weights_.rows()) throw ValidationError("bias length differs from output count");
    for (double v : weights_.data())
      if (!std::isfinite(v)) throw ValidationError("scorer weight is not finite");
    if (bias_)
      for (double v : *bias_)
        if (!std::isfinite(v)) throw ValidationError("scorer bias is not finite");
  }

  std::size_t outputs() const noexcept { return weights_.rows(); }
  std::size_t dim() const noexcept { return weights_.cols(); }
  TargetSpace target_space() const noexcept { return space_; }
  const Matrix& weights() const noexcept { return weights_; }
  Matrix& weights() noexcept { return weights_; }
  const std::optional<Vector>& bias() const noexcept { return bias_; }
  std::optional<Vector>& bias() noexcept { return bias_; }

  void logits(std::span<const double> x, std::span<double> out) const {
    for (std::size_t c = 0; c < outputs(); ++c) out[c] = dot(weights_.row(c), x) + (bias_ ? (*bias_)[c] : 0.0);
  }

  Vector logits(std::span<const double> x) const {
    if (x.size() != dim()) throw ValidationError("input dimension differs from scorer dimension");
    Vector out(outputs());
    logits(x, out);
    return out;
  }

  // N×C logits for every row of x.
  Matrix logits(const Matrix& x) const {
    if (x.cols() != dim()) throw ValidationError("input dimension differs from scorer dimension");
    Matrix out(x.rows(), outputs());
    for (std::size_t i = 0; i < x.rows(); ++i) logits(x.row(i), out.row(i));
    return out;
  }

  std::uint32_t predict(std::span<const double> x) const;

  std::vector<std::uint32_t> predict(const Matrix& x) const {
    if (x.cols() != dim()) throw ValidationError("input dimension differs from scorer dimension");
    std::vector<std::uint32_t> out(x.rows());
    Vector buf(outputs());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      logits(x.row(i), buf);
      out[i] = argmax(buf);
    }
    return out;
  }

  // Ties resolve to the lowest index.
  static std::uint32_t argmax(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
      if (v[i] > v[best]) best = i;
    return static_cast<std::uint32_t>(best);
  }

  friend bool operator==(const LinearScorer&, const LinearScorer&) = default;

 private:
  Matrix weights_;
  std::optional<Vector> bias_;
  TargetSpace space_ = TargetSpace::kClass;
};

inline std::uint32_t LinearScorer::predict(std::span<const double> x) const { return argmax(logits(x)); }

// Class head initialized from the proxy rows scaled to unit norm.
inline LinearScorer zero_shot_class_head(const ClassProxyMatrix& z, bool with_bias = false) {
  Matrix w = z.proxies;
  for (std::size_t k = 0; k < w.rows(); ++k) {
    auto r = w.row(k);
    const double n = norm2(r);
    for (double& v : r) v /= n;
  }
  std::optional<Vector> b;
  if (with_bias) b.emplace(w.rows(), 0.0);
  return LinearScorer(std::move(w), TargetSpace::kClass, std::move(b));
}

// Group head g = y·A + a; every group of class y starts from class y's unit proxy.
inline LinearScorer zero_shot_group_head(const ClassProxyMatrix& z, std::size_t attribute_count = 2,
                                         bool with_bias = false) {
  const LinearScorer cls = zero_shot_class_head(z);
  Matrix w(z.class_count() * attribute_count, z.dim());
  for (std::size_t y = 0; y < z.class_count(); ++y)
    for (std::size_t a = 0; a < attribute_count; ++a) {
      auto src = cls.weights().row(y);
      std::copy(src.begin(), src.end(), w.row(y * attribute_count + a).begin());
    }
  std::optional<Vector> b;
  if (with_bias) b.emplace(w.rows(), 0.0);
  return LinearScorer(std::move(w), TargetSpace::kGroup, std::move(b));
}

// ---------------------------------------------------------------------------
// Losses

struct LossGradient {
  double loss = 0.0;
  Matrix grad;     // ∂loss/∂W, C×d
  Vector bias_grad;  // empty when the scorer has no bias
};

namespace detail {

// −log softmax(z + offset)_target with z = Wx (+ b). The offset is a constant.
// Writes softmax − onehot into `residual` and returns the loss.
inline double shifted_ce_residual(const LinearScorer& s, std::span<const double> x, std::uint32_t target,
                                  std::span<const double> offset, std::span<double> residual) {
  s.logits(x, residual);
  if (!offset.empty())
    for (std::size_t c = 0; c < residual.size(); ++c) residual[c] += offset[c];
  std::size_t arg = 0;
  for (std::size_t c = 1; c < residual.size(); ++c)
    if (residual[c] > residual[arg]) arg = c;
  const double zmax = residual[arg];
  const double target_logit_minus_max = residual[target] - zmax;
  // The max term contributes exactly 1; log1p of the remainder keeps
  // saturated losses accurate to full relative precision.
  double rest = 0.0;
  for (std::size_t c = 0; c < residual.size(); ++c) {
    residual[c] = c == arg ? 1.0 : std::exp(residual[c] - zmax);
    if (c != arg) rest += residual[c];
  }
  const double sum = 1.0 + rest;
  for (double& v : residual) v /= sum;
  residual[target] -= 1.0;
  return std::log1p(rest) - target_logit_minus_max;
}

inline LossGradient shifted_ce(const LinearScorer& s, std::span<const double> x, std::uint32_t target,
                               std::span<const double> offset) {
  if (target >= s.outputs()) throw ValidationError("target index out of range");
  if (x.size() != s.dim()) throw ValidationError("input dimension differs from scorer dimension");
  if (!offset.empty() && offset.size() != s.outputs()) throw ValidationError("offset length differs from output count");
  Vector r(s.outputs());
  LossGradient out;
  out.loss = shifted_ce_residual(s, x, target, offset, r);
  out.grad = Matrix(s.outputs(), s.dim());
  for (std::size_t c = 0; c < s.outputs(); ++c) {
    auto g = out.grad.row(c);
    for (std::size_t j = 0; j < x.size(); ++j) g[j] = r[c] * x[j];
  }
  if (s.bias()) out.bias_grad = r;
  return out;
}

}  // namespace detail

inline LossGradient ce_loss(const LinearScorer& s, std::span<const double> x, std::uint32_t target) {
  return detail::shifted_ce(s, x, target, {});
}

// Class-prior logit adjustment: offset ln π with unit scale.
inline LossGradient la_loss(const LinearScorer& s, std::span<const double> x, std::uint32_t y, const GroupPrior& prior) {
  if (prior.size() != s.outputs()) throw ValidationError("prior length differs from class count");
  return detail::shifted_ce(s, x, y, prior.with_tau(1.0).log_offset());
}

// Group logit adjustment: offset τ·ln β̂.
inline LossGradient gla_loss(const LinearScorer& s, std::span<const double> x, std::uint32_t g,
                             const GroupPrior& prior) {
  if (prior.size() != s.outputs()) throw ValidationError("prior length differs from group count");
  return detail::shifted_ce(s, x, g, prior.log_offset());
}

// ---------------------------------------------------------------------------
// Training

enum class LossKind { kCe, kLa, kGla };

inline std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::kCe: return "ce";
    case LossKind::kLa: return "la";
    case LossKind::kGla: return "gla";
  }
  return "?";
}

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  double learning_rate = 2e-4;
  double weight_decay = 5e-5;
  double momentum = 0.9;
  double warmup_lr = 1e-5;
  std::size_t warmup_epochs = 1;
  std::uint64_t seed = 0;
  bool shuffle = true;
  bool bias = false;

  void validate() const {
    if (epochs < 1) throw ValidationError("epochs must be >= 1");
    if (batch_size < 1) throw ValidationError("batch size must be >= 1");
    for (double r : {learning_rate, weight_decay, momentum, warmup_lr})
      if (!(r >= 0.0) || !std::isfinite(r)) throw ValidationError("rates must be finite and >= 0");
  }

  // Step size used throughout epoch `epoch` (0-based).
  double epoch_learning_rate(std::size_t epoch) const {
    if (epoch < warmup_epochs) return warmup_lr;
    return learning_rate * 0.5 *
           (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(epochs)));
  }

  nlohmann::ordered_json to_json() const {
    return {{"epochs", epochs},       {"batch_size", batch_size}, {"learning_rate", learning_rate},
            {"weight_decay", weight_decay}, {"momentum", momentum},     {"warmup_lr", warmup_lr},
            {"warmup_epochs", warmup_epochs}, {"seed", seed},           {"shuffle", shuffle},
            {"bias", bias}};
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// 64-bit FNV-1a, used to name run directories and stamp provenance.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[i] = kDigits[v & 0xF];
  return s;
}

inline std::string config_hash(const TrainConfig& cfg) { return hex64(fnv1a(cfg.to_json().dump())); }

// Features plus per-sample targets (and optional per-sample loss weights).
// Deliberately carries no attribute information.
struct TrainView {
  const Matrix& features;
  std::span<const std::uint32_t> targets;
  std::span<const double> sample_weights = {};
};

struct TrainResult {
  LinearScorer scorer;
  std::vector<LinearScorer> snapshots;  // weights after each epoch
  std::vector<double> epoch_loss;       // mean training loss per epoch
};

inline TrainResult train(const TrainView& view, LossKind kind, const std::optional<GroupPrior>& prior,
                         const TrainConfig& cfg, LinearScorer init) {
  cfg.validate();
  const std::size_t n = view.features.rows();
  const std::size_t d = view.features.cols();
  const std::size_t c = init.outputs();
  if (n == 0) throw ValidationError("train: no samples");
  if (view.targets.size() != n) throw ValidationError("train: target count differs from sample count");
  if (!view.sample_weights.empty() && view.sample_weights.size() != n)
    throw ValidationError("train: sample weight count differs from sample count");
  if (init.dim() != d) throw ValidationError("train: initial scorer dimension differs from features");
  for (std::uint32_t t : view.targets)
    if (t >= c) throw ValidationError("train: target " + std::to_string(t) + " out of range");
  if (cfg.bias && !init.bias()) init.bias().emplace(c, 0.0);

  Vector offset;
  switch (kind) {
    case LossKind::kCe:
      break;
    case LossKind::kLa:
      if (!prior) throw ValidationError("train: logit-adjusted loss needs a class prior");
      if (prior->size() != c) throw ValidationError("train: prior length differs from output count");
      offset = prior->with_tau(1.0).log_offset();
      break;
    case LossKind::kGla:
      if (!prior) throw ValidationError("train: group logit-adjusted loss needs a group prior");
      if (prior->size() != c) throw ValidationError("train: prior length differs from output count");
      offset = prior->log_offset();
      break;
  }

  LinearScorer s = std::move(init);
  Matrix velocity(c, d);
  Vector bias_velocity(s.bias() ? c : 0, 0.0);
  Matrix grad(c, d);
  Vector bias_grad(bias_velocity.size());
  Vector residual(c);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(cfg.seed, 0x7472616e));

  TrainResult out;
  out.snapshots.reserve(cfg.epochs);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.epoch_learning_rate(epoch);
    if (cfg.shuffle) rng.shuffle(std::span(order));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(stop - start);
      std::fill(grad.data().begin(), grad.data().end(), 0.0);
      std::fill(bias_grad.begin(), bias_grad.end(), 0.0);
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t i = order[b];
        const double w = view.sample_weights.empty() ? 1.0 : view.sample_weights[i];
        auto x = view.features.row(i);
        const double loss = detail::shifted_ce_residual(s, x, view.targets[i], offset, residual);
        if (!std::isfinite(loss)) {
          throw DivergenceError("training diverged: non-finite loss in epoch " + std::to_string(epoch + 1));
        }
        loss_sum += w * loss;
        for (std::size_t k = 0; k < c; ++k) {
          const double r = w * residual[k] * inv_batch;
          auto g = grad.row(k);
          for (std::size_t j = 0; j < d; ++j) g[j] += r * x[j];
          if (!bias_grad.empty()) bias_grad[k] += r;
        }
      }
      auto& wdata = s.weights().data();
      auto& gdata = grad.data();
      auto& vdata = velocity.data();
      for (std::size_t k = 0; k < wdata.size(); ++k) {
        vdata[k] = cfg.momentum * vdata[k] + gdata[k] + cfg.weight_decay * wdata[k];
        wdata[k] -= lr * vdata[k];
      }
      if (s.bias()) {
        auto& bdata = *s.bias();
        for (std::size_t k = 0; k < c; ++k) {
          bias_velocity[k] = cfg.momentum * bias_velocity[k] + bias_grad[k];
          bdata[k] -= lr * bias_velocity[k];
        }
      }
    }
    for (double v : s.weights().data())
      if (!std::isfinite(v)) throw DivergenceError("training diverged: non-finite weight in epoch " + std::to_string(epoch + 1));
    out.epoch_loss.push_back(loss_sum / static_cast<double>(n));
    out.snapshots.push_back(s);
  }
  out.scorer = std::move(s);
  return out;
}

// ---------------------------------------------------------------------------
// Model files

struct ModelProvenance {
  std::string method;
  std::string loss_kind;
  std::optional<double> tau;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::optional<std::size_t> selected_epoch;  // 1-based
};

inline nlohmann::ordered_json model_to_json(const LinearScorer& s, const ModelProvenance& p) {
  nlohmann::ordered_json j;
  j["target_space"] = to_string(s.target_space());
  j["C"] = s.outputs();
  j["d"] = s.dim();
  j["weights"] = s.weights().data();
  if (s.bias()) j["bias"] = *s.bias();
  nlohmann::ordered_json prov;
  prov["method"] = p.method;
  prov["loss_kind"] = p.loss_kind;
  prov["tau"] = p.tau ? nlohmann::ordered_json(*p.tau) : nlohmann::ordered_json(nullptr);
  prov["seed"] = p.seed;
  prov["config_hash"] = p.config_hash;
  prov["selected_epoch"] = p.selected_epoch ? nlohmann::ordered_json(*p.selected_epoch) : nlohmann::ordered_json(nullptr);
  j["provenance"] = prov;
  return j;
}

inline LinearScorer model_from_json(const nlohmann::json& j) {
  try {
    const auto space = j.at("target_space").get<std::string>();
    if (space != "class" && space != "group") throw ValidationError("model: unknown target_space '" + space + "'");
    const auto c = j.at("C").get<std::size_t>();
    const auto d = j.at("d").get<std::size_t>();
    auto w = j.at("weights").get<std::vector<double>>();
    std::optional<Vector> b;
    if (j.contains("bias")) b = j.at("bias").get<std::vector<double>>();
    return LinearScorer(Matrix(c, d, std::move(w)), space == "class" ? TargetSpace::kClass : TargetSpace::kGroup,
                        std::move(b));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model JSON: ") + e.what());
  }
}

}  // namespace ppa
