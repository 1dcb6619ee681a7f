#pragma once

// Numerical certificates for the projected-regression identity and for the
// Bayes-optimal balanced-group-error rule, each checked against a brute-force
// computation that does not share code with the claim being tested.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ppa/error.hpp"
#include "ppa/linalg.hpp"
#include "ppa/projection.hpp"
#include "ppa/random.hpp"

namespace ppa::theory {

// ---------------------------------------------------------------------------
// Projected regression

// y = Cβ* + γ*s + ε. The proxy rows define Π; an empty proxy matrix means Π = I.
struct RegressionScenario {
  Matrix c;  // n×d core features
  Vector s;  // spurious feature
  Vector beta_star;
  double gamma_star = 0.0;
  Vector noise;
  Matrix proxy_z;  // k×d, possibly 0×0

  std::size_t samples() const noexcept { return c.rows(); }
  std::size_t dim() const noexcept { return c.cols(); }

  void validate() const {
    const std::size_t n = samples(), d = dim();
    if (n <= d + 1) throw ValidationError("regression scenario needs n > d + 1");
    if (s.size() != n || noise.size() != n) throw ValidationError("regression scenario: vector length differs from n");
    if (beta_star.size() != d) throw ValidationError("regression scenario: beta has wrong length");
    if (!proxy_z.empty() && proxy_z.cols() != d) throw ValidationError("regression scenario: proxy width differs from d");
  }

  Vector response() const {
    Vector y = matvec(c, beta_star);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += gamma_star * s[i] + noise[i];
    return y;
  }

  Matrix projector() const { return proxy_z.empty() ? Matrix::identity(dim()) : build_projection(proxy_z).pi; }
};

// Random scenario with one proxy direction. s mixes the projected-out
// direction of C with fresh noise so both r_s and the correction are nonzero.
inline RegressionScenario random_regression_scenario(Rng& rng, std::size_t n, std::size_t d, std::size_t proxies = 1,
                                                     double noise_sigma = 0.0) {
  RegressionScenario sc;
  sc.c = Matrix(n, d);
  for (double& v : sc.c.data()) v = rng.normal();
  sc.proxy_z = Matrix(proxies, d);
  for (double& v : sc.proxy_z.data()) v = rng.normal();
  Vector mix(d);
  for (double& v : mix) v = rng.normal();
  sc.s = matvec(sc.c, mix);
  for (double& v : sc.s) v = 0.5 * v + rng.normal();
  sc.beta_star.resize(d);
  for (double& v : sc.beta_star) v = rng.normal();
  sc.gamma_star = rng.normal();
  sc.noise.resize(n);
  for (double& v : sc.noise) v = rng.normal(0.0, noise_sigma);
  return sc;
}

struct Prop1Result {
  double gamma_full = 0.0;       // γ from the fit on [C | s]
  double gamma_projected = 0.0;  // γ' from the fit on [CΠ | s]
  double correction = 0.0;       // r_sᵀr_{y_o} / r_sᵀr_s with y_o = C_o β̂
  double residual = 0.0;         // |γ' − (γ + correction)|, fitted coefficients
  // The same identity with the generating β*, γ* in place of the fitted ones.
  // Equal to `residual` when ε = 0; under noise it is the quantity that
  // shrinks with n.
  double population_residual = 0.0;
};

namespace detail {

inline Matrix append_column(const Matrix& a, std::span<const double> col) {
  Matrix out(a.rows(), a.cols() + 1);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(i, j);
    out(i, a.cols()) = col[i];
  }
  return out;
}

// Mv = v − C̃(C̃⁺v): the annihilator of col(C̃) without forming the n×n matrix.
inline Vector annihilate(const Matrix& ct, const Matrix& ct_pinv, std::span<const double> v) {
  const Vector coef = matvec(ct_pinv, v);
  const Vector fit = matvec(ct, coef);
  Vector out(v.begin(), v.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= fit[i];
  return out;
}

}  // namespace detail

inline Prop1Result verify_prop1(const RegressionScenario& sc) {
  sc.validate();
  const std::size_t d = sc.dim();
  const Vector y = sc.response();
  const Matrix pi = sc.projector();

  const Vector full = ols_fit(detail::append_column(sc.c, sc.s), y);
  const Vector beta_hat(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(d));

  const Matrix ct = matmul(sc.c, pi);      // C̃ = CΠ
  const Matrix co = subtract(sc.c, ct);    // C_o = C(I − Π)
  const Vector proj = ols_fit(detail::append_column(ct, sc.s), y);

  const Matrix ct_pinv = pseudo_inverse(ct);
  const Vector r_s = detail::annihilate(ct, ct_pinv, sc.s);
  const double rss = dot(r_s, r_s);
  if (std::sqrt(rss) < 1e-10) throw ValidationError("scenario rejected: s lies in the column space of CΠ");

  auto correction_for = [&](std::span<const double> beta) {
    const Vector r_yo = detail::annihilate(ct, ct_pinv, matvec(co, beta));
    return dot(r_s, r_yo) / rss;
  };

  Prop1Result r;
  r.gamma_full = full[d];
  r.gamma_projected = proj[d];
  r.correction = correction_for(beta_hat);
  r.residual = std::abs(r.gamma_projected - (r.gamma_full + r.correction));
  r.population_residual = std::abs(r.gamma_projected - (sc.gamma_star + correction_for(sc.beta_star)));
  return r;
}

// ---------------------------------------------------------------------------
// Discrete worlds for the balanced group error

// Finite input set with a joint table P(x, y, a). Group index g = y·A + a.
class DiscreteGroupWorld {
 public:
  DiscreteGroupWorld(std::size_t points, std::size_t classes, std::size_t attributes, std::vector<double> joint)
      : points_(points), classes_(classes), attributes_(attributes), joint_(std::move(joint)) {
    if (points_ == 0 || classes_ < 2 || attributes_ < 1) throw ValidationError("world: empty dimension");
    if (joint_.size() != points_ * classes_ * attributes_) throw ValidationError("world: joint table has wrong size");
    double total = 0.0;
    for (double p : joint_) {
      if (!(p >= 0.0) || !std::isfinite(p)) throw ValidationError("world: probabilities must be finite and >= 0");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-12) throw ValidationError("world: joint does not sum to 1");
    for (std::size_t g = 0; g < groups(); ++g)
      if (!(group_prior(g) > 0.0)) throw ValidationError("world: group " + std::to_string(g) + " has zero mass");
    for (std::size_t x = 0; x < points_; ++x)
      if (!(marginal(x) > 0.0)) throw ValidationError("world: point " + std::to_string(x) + " has zero mass");
  }

  // Normalizes nonnegative weights into a joint table.
  static DiscreteGroupWorld from_weights(std::size_t points, std::size_t classes, std::size_t attributes,
                                         std::vector<double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw ValidationError("world: weights sum to zero");
    for (double& w : weights) w /= total;
    return {points, classes, attributes, std::move(weights)};
  }

  std::size_t points() const noexcept { return points_; }
  std::size_t classes() const noexcept { return classes_; }
  std::size_t attributes() const noexcept { return attributes_; }
  std::size_t groups() const noexcept { return classes_ * attributes_; }
  std::size_t group_class(std::size_t g) const noexcept { return g / attributes_; }

  double joint(std::size_t x, std::size_t g) const { return joint_[x * groups() + g]; }

  double marginal(std::size_t x) const {
    double p = 0.0;
    for (std::size_t g = 0; g < groups(); ++g) p += joint(x, g);
    return p;
  }

  double group_prior(std::size_t g) const {
    double p = 0.0;
    for (std::size_t x = 0; x < points_; ++x) p += joint(x, g);
    return p;
  }

  double group_posterior(std::size_t g, std::size_t x) const { return joint(x, g) / marginal(x); }

 private:
  std::size_t points_, classes_, attributes_;
  std::vector<double> joint_;  // [x][g]
};

// Binary classes and attributes, every cell drawn uniformly on (0, 1].
inline DiscreteGroupWorld random_world(Rng& rng, std::size_t points) {
  std::vector<double> w(points * 4);
  for (double& v : w) v = 1.0 - rng.uniform();
  return DiscreteGroupWorld::from_weights(points, 2, 2, std::move(w));
}

// The 4-point world used as the default certificate: a 0.95-style majority in
// groups (0, 0) and (1, 1) with mixed minority points.
inline DiscreteGroupWorld default_prop2_world() {
  return DiscreteGroupWorld::from_weights(4, 2, 2,
                                          {39, 4, 2, 3,  //
                                           7, 1, 9, 38,  //
                                           6, 5, 7, 5,   //
                                           5, 3, 5, 7});
}

using ClassifierTable = std::vector<std::uint32_t>;  // prediction per point

// Σ_g P(ŷ ≠ y | g) / |G|, each conditional error summed over the points of g.
inline double bge_direct(const DiscreteGroupWorld& w, std::span<const std::uint32_t> f) {
  if (f.size() != w.points()) throw ValidationError("classifier table has wrong length");
  double total = 0.0;
  for (std::size_t g = 0; g < w.groups(); ++g) {
    double err = 0.0;
    for (std::size_t x = 0; x < w.points(); ++x)
      if (f[x] != w.group_class(g)) err += w.joint(x, g);
    total += err / w.group_prior(g);
  }
  return total / static_cast<double>(w.groups());
}

// E_x[Σ_g P(g|x)/P(g) · 1[y_g ≠ ŷ(x)]] / |G|, the expectation form.
inline double bge_expectation(const DiscreteGroupWorld& w, std::span<const std::uint32_t> f) {
  if (f.size() != w.points()) throw ValidationError("classifier table has wrong length");
  double total = 0.0;
  for (std::size_t x = 0; x < w.points(); ++x) {
    double inner = 0.0;
    for (std::size_t g = 0; g < w.groups(); ++g)
      if (f[x] != w.group_class(g)) inner += w.group_posterior(g, x) / w.group_prior(g);
    total += w.marginal(x) * inner;
  }
  return total / static_cast<double>(w.groups());
}

inline double verify_lemma1(const DiscreteGroupWorld& w, std::span<const std::uint32_t> f) {
  return std::abs(bge_direct(w, f) - bge_expectation(w, f));
}

// How the group scores are combined into class scores.
enum class AggregationRule {
  kLogitSum,  // Σ_{g∈G(y)} (ln P(g|x) − τ ln β_g)
  kRatioSum,  // Σ_{g∈G(y)} P(g|x) / β_g^τ
};

inline std::string_view to_string(AggregationRule r) {
  return r == AggregationRule::kLogitSum ? "logit-sum" : "ratio-sum";
}

inline ClassifierTable bayes_rule_classifier(const DiscreteGroupWorld& w, double tau, AggregationRule rule) {
  ClassifierTable f(w.points());
  Vector score(w.classes());
  for (std::size_t x = 0; x < w.points(); ++x) {
    std::fill(score.begin(), score.end(), 0.0);
    for (std::size_t g = 0; g < w.groups(); ++g) {
      const double post = w.group_posterior(g, x);
      const double beta = w.group_prior(g);
      score[w.group_class(g)] += rule == AggregationRule::kLogitSum ? std::log(post) - tau * std::log(beta)
                                                                     : post * std::pow(beta, -tau);
    }
    std::size_t best = 0;
    for (std::size_t y = 1; y < score.size(); ++y)
      if (score[y] > score[best]) best = y;
    f[x] = static_cast<std::uint32_t>(best);
  }
  return f;
}

// Class scores from unadjusted group scores, written out on its own so the
// τ = 0 case can be compared against an independent computation.
inline ClassifierTable plain_aggregation_classifier(const DiscreteGroupWorld& w, AggregationRule rule) {
  ClassifierTable f(w.points());
  for (std::size_t x = 0; x < w.points(); ++x) {
    double s0 = 0.0, s1 = 0.0;
    for (std::size_t g = 0; g < w.groups(); ++g) {
      const double h = rule == AggregationRule::kLogitSum ? std::log(w.joint(x, g)) - std::log(w.marginal(x))
                                                           : w.joint(x, g) / w.marginal(x);
      (w.group_class(g) == 0 ? s0 : s1) += h;
    }
    f[x] = s1 > s0 ? 1u : 0u;
  }
  return f;
}

inline constexpr std::size_t kMaxEnumerationPoints = 12;

struct Enumeration {
  double min_bge = std::numeric_limits<double>::infinity();
  ClassifierTable argmin;
};

// Every deterministic binary classifier over the points.
inline Enumeration enumerate_min_bge(const DiscreteGroupWorld& w) {
  if (w.classes() != 2) throw ValidationError("enumeration supports binary classification only");
  if (w.points() > kMaxEnumerationPoints)
    throw ValidationError("enumeration domain too large: " + std::to_string(w.points()) + " points");
  Enumeration e;
  ClassifierTable f(w.points());
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << w.points()); ++mask) {
    for (std::size_t x = 0; x < w.points(); ++x) f[x] = static_cast<std::uint32_t>((mask >> x) & 1u);
    const double b = bge_direct(w, f);
    if (b < e.min_bge) {
      e.min_bge = b;
      e.argmin = f;
    }
  }
  return e;
}

struct Prop2Report {
  AggregationRule rule = AggregationRule::kLogitSum;
  double enumerated_min = 0.0;
  double rule_bge = 0.0;     // τ = 1
  bool rule_optimal = false; // within tolerance of the enumerated minimum
  std::vector<double> tau_grid;
  std::vector<double> tau_bge;
  bool tau_one_in_grid = false;
  bool tau_one_minimal = false;  // BGE(τ=1) ≤ every other grid value
  bool tau_zero_matches_plain = true;  // only meaningful when 0 is in the grid
};

inline Prop2Report verify_prop2(const DiscreteGroupWorld& w, std::span<const double> tau_grid,
                                AggregationRule rule = AggregationRule::kLogitSum, double tol = 1e-12) {
  const Enumeration e = enumerate_min_bge(w);
  Prop2Report r;
  r.rule = rule;
  r.enumerated_min = e.min_bge;
  r.rule_bge = bge_direct(w, bayes_rule_classifier(w, 1.0, rule));
  r.rule_optimal = std::abs(r.rule_bge - e.min_bge) <= tol;
  double at_one = r.rule_bge;
  double grid_min = std::numeric_limits<double>::infinity();
  for (double tau : tau_grid) {
    const double b = bge_direct(w, bayes_rule_classifier(w, tau, rule));
    r.tau_grid.push_back(tau);
    r.tau_bge.push_back(b);
    grid_min = std::min(grid_min, b);
    if (tau == 1.0) {
      r.tau_one_in_grid = true;
      at_one = b;
    }
    if (tau == 0.0) r.tau_zero_matches_plain = b == bge_direct(w, plain_aggregation_classifier(w, rule));
  }
  r.tau_one_minimal = r.tau_one_in_grid && at_one <= grid_min + tol;
  return r;
}

}  // namespace ppa::theory
