#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ppa/error.hpp"

namespace ppa {

// Probability vector over classes (π) or pseudo-groups (β̂), plus the scale τ
// applied to its log when used as a logit offset.
class GroupPrior {
 public:
  GroupPrior() = default;

  explicit GroupPrior(std::vector<double> prior, double tau = 1.0) : prior_(std::move(prior)), tau_(tau) {
    if (prior_.size() < 2) throw ValidationError("prior needs at least two entries");
    if (!(tau_ >= 0.0) || !std::isfinite(tau_)) throw ValidationError("prior scale tau must be finite and >= 0");
    double sum = 0.0;
    for (double p : prior_) {
      if (!(p > 0.0) || !std::isfinite(p)) throw ValidationError("prior entries must be strictly positive");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw ValidationError("prior does not sum to one (sum = " + std::to_string(sum) + ")");
  }

  // counts[i] + smoothing, normalized.
  static GroupPrior from_counts(std::span<const std::size_t> counts, double smoothing = 1.0, double tau = 1.0) {
    if (smoothing < 0.0) throw ValidationError("smoothing must be >= 0");
    std::vector<double> p(counts.size());
    double total = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
      p[i] = static_cast<double>(counts[i]) + smoothing;
      total += p[i];
    }
    if (total <= 0.0) throw ValidationError("cannot build a prior from empty counts");
    for (double& v : p) v /= total;
    // Renormalize once more so the sum is 1 to the last ulp the division allows.
    double s = 0.0;
    for (double v : p) s += v;
    for (double& v : p) v /= s;
    return GroupPrior(std::move(p), tau);
  }

  static GroupPrior uniform(std::size_t n, double tau = 1.0) { return GroupPrior(std::vector<double>(n, 1.0 / n), tau); }

  std::size_t size() const noexcept { return prior_.size(); }
  const std::vector<double>& values() const noexcept { return prior_; }
  double tau() const noexcept { return tau_; }

  GroupPrior with_tau(double tau) const { return GroupPrior(prior_, tau); }

  // τ · ln(prior), the additive logit offset.
  std::vector<double> log_offset() const {
    std::vector<double> out(prior_.size());
    for (std::size_t i = 0; i < prior_.size(); ++i) out[i] = tau_ * std::log(prior_[i]);
    return out;
  }

 private:
  std::vector<double> prior_;
  double tau_ = 1.0;
};

}  // namespace ppa
