#pragma once

// From retrieval counts to diversity estimates: IRS at the observed sampling
// ratio, the maximum-likelihood extrapolated support, tail-inversion
// confidence bounds, the real-reference adjustment and rejection thresholds.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "irs/combinatorics.hpp"
#include "irs/errors.hpp"

namespace irs {

inline constexpr double kDefaultAlphaE = 0.05;

struct IrsObservation {
  std::int64_t n_train = 0;
  std::int64_t n_sample = 0;
  std::int64_t n_learned = 0;

  double alpha() const { return static_cast<double>(n_sample) / static_cast<double>(n_train); }

  void validate() const {
    detail::require(n_train >= 1, "n_train must be positive");
    detail::require(n_learned >= 1, "n_learned must be positive");
    detail::require(n_learned <= std::min(n_sample, n_train),
                    "n_learned=" + std::to_string(n_learned) + " exceeds min(n_sample=" +
                        std::to_string(n_sample) + ", n_train=" + std::to_string(n_train) + ")");
  }

  friend bool operator==(const IrsObservation&, const IrsObservation&) = default;
};

struct ConfidenceInterval {
  double lower = 0.0;
  double upper = 1.0;
};

struct IrsReport {
  IrsObservation observation;
  double irs_alpha = 0.0;
  double irs_inf = 0.0;
  double irs_inf_lower = 0.0;
  double irs_inf_upper = 1.0;
  double alpha_e = kDefaultAlphaE;
  std::optional<double> irs_adjusted;
  int folds = 1;
};

struct RejectionPlan {
  double irs_target = 0.0;
  double alpha_e = kDefaultAlphaE;
  std::int64_t n_train = 0;
  std::int64_t n_sample = 0;
  std::int64_t k_min = 1;
};

/// N_learned / N_train. An empty query set (n_sample = 0) scores 0.
inline double irs_alpha(const IrsObservation& obs) {
  detail::require(obs.n_train >= 1, "n_train must be positive");
  if (obs.n_sample == 0 && obs.n_learned == 0) return 0.0;
  obs.validate();
  return static_cast<double>(obs.n_learned) / static_cast<double>(obs.n_train);
}

namespace detail {

// Log-likelihood of support s up to the s-independent Stirling factor.
inline double support_log_likelihood(const IrsObservation& obs, std::int64_t s) {
  return log_falling_over_power(s, obs.n_learned, obs.n_sample);
}

// f(s + 1) - f(s), evaluated without cancellation.
inline double support_likelihood_step(const IrsObservation& obs, std::int64_t s) {
  const double sd = static_cast<double>(s);
  const double k = static_cast<double>(obs.n_learned);
  return std::log1p(k / (sd + 1.0 - k)) - static_cast<double>(obs.n_sample) * std::log1p(1.0 / sd);
}

inline std::vector<std::int64_t> geometric_grid(std::int64_t lo, std::int64_t hi, int points) {
  std::vector<std::int64_t> grid;
  grid.reserve(static_cast<std::size_t>(points) + 2);
  const double ratio = std::log(static_cast<double>(hi) / static_cast<double>(lo));
  for (int i = 0; i < points; ++i) {
    const double t = static_cast<double>(i) / (points - 1);
    auto s = static_cast<std::int64_t>(std::llround(static_cast<double>(lo) * std::exp(ratio * t)));
    s = std::clamp(s, lo, hi);
    if (grid.empty() || s > grid.back()) grid.push_back(s);
  }
  if (grid.back() != hi) grid.push_back(hi);
  return grid;
}

}  // namespace detail

/// Support size maximizing P(n_learned, n_sample, s) over s in
/// [n_learned, n_train]; ties go to the smaller s.
///
/// The likelihood in s is unimodal, so a 200-point geometric grid locates the
/// peak's neighbourhood and a bisection on the sign of the forward difference
/// pins the integer argmax inside it.
inline std::int64_t mle_support_count(const IrsObservation& obs) {
  obs.validate();
  const std::int64_t lo = obs.n_learned;
  const std::int64_t hi = obs.n_train;
  if (lo == hi) return hi;
  // No duplicates: the likelihood is nondecreasing in s (flat when n = 1).
  if (obs.n_learned == obs.n_sample) return hi;
  const auto grid = detail::geometric_grid(lo, hi, 200);
  std::size_t best = 0;
  double best_value = detail::support_log_likelihood(obs, grid[0]);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double value = detail::support_log_likelihood(obs, grid[i]);
    if (value > best_value) {
      best_value = value;
      best = i;
    }
  }
  std::int64_t left = grid[best == 0 ? 0 : best - 1];
  std::int64_t right = grid[std::min(best + 1, grid.size() - 1)];
  // First s in [left, right) whose step is non-positive; right if none.
  while (left < right) {
    const std::int64_t mid = left + (right - left) / 2;
    if (detail::support_likelihood_step(obs, mid) <= 0.0) {
      right = mid;
    } else {
      left = mid + 1;
    }
  }
  return left;
}

/// Maximum-likelihood IRS extrapolated to unlimited sampling.
inline double mle_support(const IrsObservation& obs) {
  return static_cast<double>(mle_support_count(obs)) / static_cast<double>(obs.n_train);
}

/// Tail-inversion interval for the support fraction at error alpha_e per side.
///
/// lower: smallest s for which observing at least n_learned distinct items
/// still has probability above alpha_e; upper: largest s for which observing
/// at most n_learned has probability above alpha_e. When the lower tail never
/// rises above alpha_e the interval degenerates to [n_learned/n_train, 1].
inline ConfidenceInterval confidence_bounds(const IrsObservation& obs, double alpha_e = kDefaultAlphaE) {
  obs.validate();
  detail::require(alpha_e > 0.0 && alpha_e < 0.5, "alpha_e must lie in (0, 0.5)");
  const OccupancyModel model(obs.n_sample);
  const double log_alpha = std::log(alpha_e);
  const std::int64_t k = obs.n_learned;
  const double n_train = static_cast<double>(obs.n_train);

  auto lower_ok = [&](std::int64_t s) { return model.log_tail_at_least(k, s) > log_alpha; };
  auto upper_ok = [&](std::int64_t s) { return model.log_tail_at_most(k, s) > log_alpha; };

  if (!lower_ok(obs.n_train)) return {static_cast<double>(k) / n_train, 1.0};

  // P(K >= k | s) grows with s.
  std::int64_t lo = k, hi = obs.n_train;
  while (lo < hi) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    lower_ok(mid) ? hi = mid : lo = mid + 1;
  }
  const std::int64_t lower = lo;

  // P(K <= k | s) shrinks with s; it is 1 at s = k.
  lo = k;
  hi = obs.n_train;
  while (lo < hi) {
    const std::int64_t mid = lo + (hi - lo + 1) / 2;
    upper_ok(mid) ? lo = mid : hi = mid - 1;
  }
  const std::int64_t upper = lo;
  return {static_cast<double>(lower) / n_train, static_cast<double>(upper) / n_train};
}

/// Full report for one observation (no adjustment).
inline IrsReport estimate_irs(const IrsObservation& obs, double alpha_e = kDefaultAlphaE) {
  IrsReport report;
  report.observation = obs;
  report.alpha_e = alpha_e;
  report.irs_alpha = irs_alpha(obs);
  report.irs_inf = mle_support(obs);
  const auto ci = confidence_bounds(obs, alpha_e);
  report.irs_inf_lower = ci.lower;
  report.irs_inf_upper = ci.upper;
  return report;
}

/// Synthetic IRS_inf normalized by the real-reference IRS_inf; may exceed 1.
inline double adjusted_irs(const IrsReport& synthetic, const IrsReport& reference) {
  detail::require(reference.irs_inf > 0.0, "reference IRS_inf is zero; cannot adjust");
  return synthetic.irs_inf / reference.irs_inf;
}

/// Minimum distinct count k_min such that a model with true diversity
/// irs_target yields fewer than k_min distinct retrievals after n_sample
/// draws with probability at most alpha_e.
inline RejectionPlan rejection_threshold(double irs_target, std::int64_t n_train, std::int64_t n_sample,
                                         double alpha_e = kDefaultAlphaE) {
  detail::require(irs_target > 0.0 && irs_target <= 1.0, "irs_target must lie in (0, 1]");
  detail::require(alpha_e > 0.0 && alpha_e < 1.0, "alpha_e must lie in (0, 1)");
  detail::require(n_train >= 1 && n_sample >= 1, "n_train and n_sample must be positive");
  const std::int64_t support =
      std::clamp<std::int64_t>(std::llround(irs_target * static_cast<double>(n_train)), 1, n_train);
  const OccupancyModel model(n_sample);
  const auto dist = model.log_distribution(support);
  const double log_alpha = std::log(alpha_e);

  // below = ln P(K < k); grows with k.
  std::int64_t k_min = 1;
  double below = kNegInf;
  const auto top = static_cast<std::int64_t>(dist.size()) - 1;
  for (std::int64_t k = 1; k <= top; ++k) {
    if (below > log_alpha) break;
    k_min = k;
    below = detail::log_add(below, dist[k]);
  }
  if (!std::isfinite(below) && below != kNegInf) throw NumericalError("rejection threshold is not finite");
  return {irs_target, alpha_e, n_train, n_sample, k_min};
}

enum class Verdict { kPending, kPass, kReject };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::kPass: return "PASS";
    case Verdict::kReject: return "REJECT";
    default: return "INCONCLUSIVE";
  }
}

struct RejectionDecision {
  Verdict verdict = Verdict::kPending;
  std::int64_t index = -1;   // 0-based stream position at decision time
  std::int64_t distinct = 0;
  std::vector<std::int64_t> trajectory;  // distinct count after each item
};

/// Incremental rejection test over a stream of retrieved training indices.
/// One instance per stream.
class EarlyRejector {
 public:
  explicit EarlyRejector(RejectionPlan plan)
      : plan_(plan), seen_(static_cast<std::size_t>(plan.n_train), false) {
    detail::require(plan.n_train >= 1 && plan.n_sample >= 1, "plan needs positive sizes");
  }

  /// Feeds one index; returns true once a verdict is reached.
  bool push(std::int64_t index) {
    if (decision_.verdict != Verdict::kPending) return true;
    detail::require(consumed_ < plan_.n_sample,
                    "stream is longer than n_sample=" + std::to_string(plan_.n_sample));
    detail::require(index >= 0 && index < plan_.n_train,
                    "retrieved index " + std::to_string(index) + " outside [0, n_train)");
    if (!seen_[index]) {
      seen_[index] = true;
      ++decision_.distinct;
    }
    ++consumed_;
    decision_.trajectory.push_back(decision_.distinct);
    if (decision_.distinct + (plan_.n_sample - consumed_) < plan_.k_min) {
      decision_.verdict = Verdict::kReject;
      decision_.index = consumed_ - 1;
    } else if (consumed_ == plan_.n_sample) {
      decision_.verdict = Verdict::kPass;
      decision_.index = consumed_ - 1;
    }
    return decision_.verdict != Verdict::kPending;
  }

  /// Closes the stream. A short stream that already holds k_min distinct
  /// items passes; otherwise it stays inconclusive.
  const RejectionDecision& finish() {
    if (decision_.verdict == Verdict::kPending && consumed_ > 0 && decision_.distinct >= plan_.k_min) {
      decision_.verdict = Verdict::kPass;
      decision_.index = consumed_ - 1;
    }
    return decision_;
  }

  const RejectionDecision& decision() const { return decision_; }
  std::int64_t consumed() const { return consumed_; }

 private:
  RejectionPlan plan_;
  std::vector<bool> seen_;
  std::int64_t consumed_ = 0;
  RejectionDecision decision_;
};

/// Runs an EarlyRejector over a whole stream, stopping at the first verdict.
inline RejectionDecision early_reject(std::span<const std::int64_t> stream, const RejectionPlan& plan) {
  detail::require(static_cast<std::int64_t>(stream.size()) <= plan.n_sample,
                  "stream of length " + std::to_string(stream.size()) + " is longer than n_sample=" +
                      std::to_string(plan.n_sample));
  EarlyRejector rejector(plan);
  for (const auto index : stream) {
    if (rejector.push(index)) break;
  }
  return rejector.finish();
}

}  // namespace irs
