#pragma once

// Randomized certificate suites shared by the `verify` command and the
// acceptance run. Each suite is deterministic given its base seed and
// returns one pass/fail record with the worst observed error.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ppa/dataset.hpp"
#include "ppa/linalg.hpp"
#include "ppa/pipeline.hpp"
#include "ppa/prior.hpp"
#include "ppa/probe.hpp"
#include "ppa/projection.hpp"
#include "ppa/random.hpp"
#include "ppa/theory.hpp"

namespace ppa::certify {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
};

inline std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Projection operator

struct ProjectionOptions {
  std::size_t trials = 100;
  std::size_t max_dim = 32;
  double tol = 1e-9;
  double trace_tol = 1e-8;
  std::uint64_t seed = 0;
};

// Random proxy matrices with K ≤ d ≤ max_dim; one in four trials duplicates a
// row as a combination of the others so rank deficiency is exercised.
inline CheckResult projection(const ProjectionOptions& o = {}) {
  Rng rng(derive_seed(o.seed, 0x70726f6a));
  double worst_sym = 0.0, worst_idem = 0.0, worst_annih = 0.0, worst_trace = 0.0;
  std::size_t deficient = 0;
  for (std::size_t t = 0; t < o.trials; ++t) {
    const std::size_t d = 2 + rng.below(o.max_dim - 1);
    const std::size_t k = 1 + rng.below(d);
    Matrix z(k, d);
    for (double& v : z.data()) v = rng.normal();
    if (k >= 2 && t % 4 == 3) {
      const double a = rng.normal(), b = rng.normal();
      for (std::size_t j = 0; j < d; ++j) z(k - 1, j) = a * z(0, j) + b * z(1, j);
      ++deficient;
    }
    const auto op = build_projection(z);
    const Matrix& pi = op.pi;
    worst_sym = std::max(worst_sym, max_abs_diff(pi, transpose(pi)));
    worst_idem = std::max(worst_idem, max_abs_diff(matmul(pi, pi), pi));
    worst_annih = std::max(worst_annih, max_abs(matmul_transposed(z, pi)));
    const double expected = static_cast<double>(d - numerical_rank(z));
    worst_trace = std::max(worst_trace, std::abs(trace(pi) - expected));
  }
  CheckResult r;
  r.name = "projection";
  r.passed = worst_sym <= o.tol && worst_idem <= o.tol && worst_annih <= o.tol && worst_trace <= o.trace_tol;
  r.detail = std::to_string(o.trials) + " proxy matrices (" + std::to_string(deficient) +
             " rank-deficient): max |Π−Πᵀ| " + fmt(worst_sym) + ", |Π²−Π| " + fmt(worst_idem) + ", |ZΠ| " +
             fmt(worst_annih) + ", |tr Π − (d − rank Z)| " + fmt(worst_trace);
  r.metrics = {{"trials", o.trials},       {"symmetry", worst_sym}, {"idempotence", worst_idem},
               {"annihilation", worst_annih}, {"trace", worst_trace}};
  return r;
}

// ---------------------------------------------------------------------------
// Projected regression identity

struct Prop1Options {
  std::size_t scenarios = 100;
  std::size_t n = 50;
  std::size_t d = 3;
  double tol = 1e-8;
  std::vector<std::size_t> noisy_sizes{100, 1000, 10000};
  std::size_t noisy_seeds = 20;
  double noise_sigma = 0.1;
  std::uint64_t seed = 0;
};

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline CheckResult prop1_exact(const Prop1Options& o = {}) {
  Rng rng(derive_seed(o.seed, 0x70317a));
  double worst = 0.0;
  std::size_t rejected = 0;
  for (std::size_t t = 0; t < o.scenarios; ++t) {
    const auto sc = theory::random_regression_scenario(rng, o.n, o.d, 1, 0.0);
    try {
      worst = std::max(worst, theory::verify_prop1(sc).residual);
    } catch (const ValidationError&) {
      ++rejected;
    }
  }
  CheckResult r;
  r.name = "prop1";
  r.passed = rejected == 0 && worst <= o.tol;
  r.detail = std::to_string(o.scenarios) + " noise-free scenarios (n=" + std::to_string(o.n) +
             ", d=" + std::to_string(o.d) + "): max residual " + fmt(worst) +
             (rejected ? ", " + std::to_string(rejected) + " rejected" : "");
  r.metrics = {{"scenarios", o.scenarios}, {"max_residual", worst}, {"rejected", rejected}};
  return r;
}

// Median population residual per sample size; must fall strictly with n.
inline CheckResult prop1_noisy(const Prop1Options& o = {}) {
  std::vector<double> medians;
  for (std::size_t n : o.noisy_sizes) {
    std::vector<double> res;
    for (std::size_t s = 0; s < o.noisy_seeds; ++s) {
      Rng rng(derive_seed(o.seed ^ (n * 0x9e37ULL), s));
      res.push_back(theory::verify_prop1(theory::random_regression_scenario(rng, n, o.d, 1, o.noise_sigma))
                        .population_residual);
    }
    medians.push_back(median(res));
  }
  CheckResult r;
  r.name = "prop1-noisy";
  r.passed = true;
  for (std::size_t i = 1; i < medians.size(); ++i) r.passed = r.passed && medians[i] < medians[i - 1];
  r.detail = "median residual under σ=" + fmt(o.noise_sigma) + " over " + std::to_string(o.noisy_seeds) + " seeds:";
  for (std::size_t i = 0; i < medians.size(); ++i)
    r.detail += " n=" + std::to_string(o.noisy_sizes[i]) + " " + fmt(medians[i]);
  r.metrics = {{"sizes", o.noisy_sizes}, {"medians", medians}};
  return r;
}

// ---------------------------------------------------------------------------
// Balanced group error

struct WorldOptions {
  std::size_t worlds = 50;
  std::size_t max_points = 8;
  std::size_t classifiers_per_world = 8;
  double tol = 1e-12;
  std::uint64_t seed = 0;
};

inline CheckResult lemma1(const WorldOptions& o = {}) {
  Rng rng(derive_seed(o.seed, 0x6c656d));
  double worst = 0.0;
  for (std::size_t w = 0; w < o.worlds; ++w) {
    const auto world = theory::random_world(rng, 1 + rng.below(o.max_points));
    for (std::size_t c = 0; c < o.classifiers_per_world; ++c) {
      theory::ClassifierTable f(world.points());
      for (auto& v : f) v = static_cast<std::uint32_t>(rng.below(2));
      worst = std::max(worst, theory::verify_lemma1(world, f));
    }
  }
  CheckResult r;
  r.name = "lemma1";
  r.passed = worst <= o.tol;
  r.detail = std::to_string(o.worlds) + " worlds × " + std::to_string(o.classifiers_per_world) +
             " classifiers: max |direct − expectation| " + fmt(worst);
  r.metrics = {{"worlds", o.worlds}, {"max_residual", worst}};
  return r;
}

struct Prop2Options {
  std::size_t worlds = 10;     // random worlds; 0 checks only the default world
  std::size_t points = 4;
  bool include_default_world = true;
  std::vector<double> tau_grid{0.0, 0.5, 1.0, 1.5, 2.0};
  theory::AggregationRule rule = theory::AggregationRule::kLogitSum;
  double tol = 1e-12;
  std::uint64_t seed = 0;
};

inline CheckResult prop2(const Prop2Options& o = {}) {
  Rng rng(derive_seed(o.seed, 0x703261));
  std::vector<theory::DiscreteGroupWorld> worlds;
  if (o.include_default_world) worlds.push_back(theory::default_prop2_world());
  for (std::size_t w = 0; w < o.worlds; ++w) worlds.push_back(theory::random_world(rng, o.points));

  std::size_t optimal = 0, tau_one = 0;
  double worst_gap = 0.0;
  nlohmann::ordered_json per_world = nlohmann::ordered_json::array();
  for (const auto& world : worlds) {
    const auto rep = theory::verify_prop2(world, o.tau_grid, o.rule, o.tol);
    optimal += rep.rule_optimal;
    tau_one += rep.tau_one_minimal;
    worst_gap = std::max(worst_gap, rep.rule_bge - rep.enumerated_min);
    per_world.push_back({{"enumerated_min", rep.enumerated_min},
                         {"rule_bge", rep.rule_bge},
                         {"tau_bge", rep.tau_bge},
                         {"optimal", rep.rule_optimal},
                         {"tau_one_minimal", rep.tau_one_minimal}});
  }
  CheckResult r;
  r.name = "prop2";
  r.passed = optimal == worlds.size() && tau_one == worlds.size();
  r.detail = std::string(theory::to_string(o.rule)) + " rule optimal in " + std::to_string(optimal) + "/" +
             std::to_string(worlds.size()) + " worlds, τ=1 minimal on grid in " + std::to_string(tau_one) + "/" +
             std::to_string(worlds.size()) + ", worst BGE excess " + fmt(worst_gap);
  r.metrics = {{"rule", theory::to_string(o.rule)}, {"worlds", worlds.size()}, {"optimal", optimal},
               {"tau_one_minimal", tau_one},        {"worst_excess", worst_gap}, {"per_world", per_world}};
  return r;
}

// ---------------------------------------------------------------------------
// Loss gradients

struct GradientOptions {
  std::size_t instances = 50;
  double step = 1e-6;
  double tol = 1e-5;
  std::uint64_t seed = 0;
};

// Relative error ‖g − ĝ‖ / max(‖g‖, ‖ĝ‖) of analytic against central
// differences over every weight and bias entry.
inline CheckResult gradients(const GradientOptions& o = {}) {
  Rng rng(derive_seed(o.seed, 0x67726164));
  nlohmann::ordered_json per_loss;
  bool ok = true;
  std::string detail;
  for (LossKind kind : {LossKind::kCe, LossKind::kLa, LossKind::kGla}) {
    double worst = 0.0;
    for (std::size_t t = 0; t < o.instances; ++t) {
      const std::size_t c = 2 + rng.below(5), d = 1 + rng.below(12);
      const bool with_bias = rng.below(2) == 1;
      Matrix w(c, d);
      for (double& v : w.data()) v = rng.normal();
      std::optional<Vector> b;
      if (with_bias) {
        b.emplace(c);
        for (double& v : *b) v = rng.normal();
      }
      LinearScorer s(std::move(w), kind == LossKind::kGla ? TargetSpace::kGroup : TargetSpace::kClass, b);
      Vector x(d);
      for (double& v : x) v = rng.normal();
      const auto target = static_cast<std::uint32_t>(rng.below(c));
      std::vector<double> p(c);
      double ps = 0.0;
      for (double& v : p) ps += (v = 0.05 + rng.uniform());
      for (double& v : p) v /= ps;
      const GroupPrior prior(p, kind == LossKind::kGla ? 0.5 + rng.uniform() : 1.0);

      auto eval = [&](const LinearScorer& sc) {
        switch (kind) {
          case LossKind::kCe: return ce_loss(sc, x, target);
          case LossKind::kLa: return la_loss(sc, x, target, prior);
          case LossKind::kGla: return gla_loss(sc, x, target, prior);
        }
        return ce_loss(sc, x, target);
      };
      const LossGradient g = eval(s);
      double num = 0.0, na = 0.0, nf = 0.0;
      auto accumulate = [&](double analytic, double fd) {
        num += (analytic - fd) * (analytic - fd);
        na += analytic * analytic;
        nf += fd * fd;
      };
      for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < d; ++j) {
          LinearScorer plus = s, minus = s;
          plus.weights()(i, j) += o.step;
          minus.weights()(i, j) -= o.step;
          accumulate(g.grad(i, j), (eval(plus).loss - eval(minus).loss) / (2.0 * o.step));
        }
      if (with_bias)
        for (std::size_t i = 0; i < c; ++i) {
          LinearScorer plus = s, minus = s;
          (*plus.bias())[i] += o.step;
          (*minus.bias())[i] -= o.step;
          accumulate(g.bias_grad[i], (eval(plus).loss - eval(minus).loss) / (2.0 * o.step));
        }
      const double scale = std::max({std::sqrt(na), std::sqrt(nf), 1e-12});
      worst = std::max(worst, std::sqrt(num) / scale);
    }
    ok = ok && worst <= o.tol;
    per_loss[std::string(to_string(kind))] = worst;
    detail += std::string(detail.empty() ? "" : ", ") + std::string(to_string(kind)) + " " + fmt(worst);
  }
  CheckResult r;
  r.name = "gradients";
  r.passed = ok;
  r.detail = std::to_string(o.instances) + " instances per loss, max relative error: " + detail;
  r.metrics = {{"instances", o.instances}, {"max_relative_error", per_loss}};
  return r;
}

// ---------------------------------------------------------------------------
// Weight aggregation

struct AggregationOptions {
  std::size_t heads = 3;
  std::size_t inputs = 1000;
  double tol = 1e-9;
  std::uint64_t seed = 0;
};

// Group heads are trained briefly on small generator draws (one with a bias
// term), then Σ_{a} logit_{y·2+a}(x) is compared with the aggregated head.
inline CheckResult aggregation(const AggregationOptions& o = {}) {
  double worst = 0.0;
  for (std::size_t h = 0; h < o.heads; ++h) {
    SyntheticSpec spec;
    spec.train = {{300, 100}, 0.9};
    spec.val = {{100, 100}, 0.5};
    spec.test = {{10, 10}, 0.5};
    spec.seed = derive_seed(o.seed, h);
    const auto data = generate_synthetic(spec);
    PipelineOptions opt = synthetic_recipe();
    opt.train.epochs = 5;
    opt.train.seed = spec.seed;
    opt.train.bias = h % 2 == 1;
    const auto gt = eval::ground_truth_attributes(data.dataset);
    const auto idx = data.dataset.indices(Split::kTrain);
    std::vector<std::uint32_t> groups(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) groups[k] = data.dataset.labels()[idx[k]] * 2 + gt[idx[k]];
    const auto clf = train_debiased(data.dataset, with_group_index(groups, 2), data.proxies, 1.0, opt);
    const LinearScorer& head = clf.group_head;
    const LinearScorer agg = aggregate_group_head(head, 2);

    Rng rng(derive_seed(o.seed, 0x61676700 + h));
    Vector x(head.dim());
    for (std::size_t i = 0; i < o.inputs; ++i) {
      for (double& v : x) v = rng.normal(0.0, 3.0);
      const Vector gl = head.logits(x);
      const Vector cl = agg.logits(x);
      for (std::size_t y = 0; y < 2; ++y) worst = std::max(worst, std::abs(gl[2 * y] + gl[2 * y + 1] - cl[y]));
    }
  }
  CheckResult r;
  r.name = "aggregation";
  r.passed = worst <= o.tol;
  r.detail = std::to_string(o.heads) + " trained heads × " + std::to_string(o.inputs) +
             " inputs: max |Σ group logits − aggregated logit| " + fmt(worst);
  r.metrics = {{"heads", o.heads}, {"inputs", o.inputs}, {"max_abs_error", worst}};
  return r;
}

}  // namespace ppa::certify
