#pragma once

// Log-space occupancy statistics: Stirling numbers of the second kind, the
// distribution of the number of distinct urns hit by n uniform draws from s
// urns, and the closed-form expected coverage.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "irs/errors.hpp"

namespace irs {

/// Largest n for which Stirling numbers come from the exact recurrence.
inline constexpr std::int64_t kExactStirlingCap = 2000;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Natural-log probability; -inf encodes an impossible event.
struct LogProb {
  double value = kNegInf;

  double prob() const { return std::exp(value); }
  bool impossible() const { return value == kNegInf; }
};

/// k distinct items observed after n draws from a support of size s.
struct OccupancyParams {
  std::int64_t k = 0;
  std::int64_t n = 0;
  std::int64_t s = 0;
};

namespace detail {

inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(-std::abs(a - b)));
}

inline double log_choose(std::int64_t n, std::int64_t k) {
  return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

// x - log(1 + x), accurate near zero.
inline double excess_log1p(double x) {
  if (std::abs(x) < 1e-2) {
    double term = x * x;
    double sum = 0.0;
    for (int j = 2; j <= 14; ++j) {
      sum += ((j % 2 == 0) ? 1.0 : -1.0) * term / j;
      term *= x;
    }
    return sum;
  }
  return x - std::log1p(x);
}

struct TemmeRoot {
  double g;            // G
  double one_minus_g;  // 1 - G, kept separately to avoid cancellation near v = 1
};

// Root of G = v e^{G - v} for v = 1 + excess, excess > 0.
inline TemmeRoot temme_root(double excess) {
  constexpr int kMaxIter = 200;
  const double v = 1.0 + excess;
  if (excess >= 1.0) {
    // f(G) = G - v e^{G-v} is increasing and concave on (0, 1); Newton from
    // the left approaches the root monotonically.
    double g = 0.0;
    for (int it = 0; it < kMaxIter; ++it) {
      const double e = v * std::exp(g - v);
      const double step = (g - e) / (1.0 - e);
      const double next = g - step;
      if (!std::isfinite(next) || next < 0.0 || next >= 1.0) break;
      if (std::abs(next - g) <= 1e-16 * next || next == g) return {next, 1.0 - next};
      g = next;
    }
    // Bisection fallback on [1e-15, 1 - 1e-15].
    double lo = 0.0, hi = 1.0 - 1e-15;
    for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
      const double mid = 0.5 * (lo + hi);
      (mid - v * std::exp(mid - v) < 0.0 ? lo : hi) = mid;
    }
    const double g_b = 0.5 * (lo + hi);
    return {g_b, 1.0 - g_b};
  }
  // Near v = 1 solve for u = 1 - G through h(-u) = h(excess) with
  // h(x) = x - log1p(x); h(-u) is increasing and convex in u, and the root
  // lies below u = excess, so Newton from the right converges monotonically.
  const double target = excess_log1p(excess);
  double u = excess;
  for (int it = 0; it < kMaxIter; ++it) {
    const double phi = excess_log1p(-u) - target;
    const double slope = u / (1.0 - u);
    const double next = u - phi / slope;
    if (!std::isfinite(next) || next <= 0.0 || next >= 1.0) break;
    if (std::abs(next - u) <= 1e-16 * u || next == u) return {1.0 - next, next};
    u = next;
  }
  double lo = 0.0, hi = std::min(excess, 1.0 - 1e-15);
  for (int it = 0; it < 400 && hi - lo > 1e-18 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (excess_log1p(-mid) < target ? lo : hi) = mid;
  }
  const double u_b = 0.5 * (lo + hi);
  return {1.0 - u_b, u_b};
}

inline void check_stirling_args(std::int64_t n, std::int64_t k) {
  require(n >= 0 && k >= 0, "Stirling arguments must be non-negative, got n=" + std::to_string(n) +
                                " k=" + std::to_string(k));
  require(k <= n, "Stirling part count k=" + std::to_string(k) + " exceeds n=" + std::to_string(n));
}

// ln Stir(n, k) for k = 0..n via Stir(m,k) = k Stir(m-1,k) + Stir(m-1,k-1).
inline std::vector<double> exact_stirling_row(std::int64_t n) {
  std::vector<double> row(static_cast<std::size_t>(n) + 1, kNegInf);
  std::vector<double> log_k(static_cast<std::size_t>(n) + 1, kNegInf);
  for (std::int64_t k = 1; k <= n; ++k) log_k[k] = std::log(static_cast<double>(k));
  row[0] = 0.0;
  for (std::int64_t m = 1; m <= n; ++m) {
    for (std::int64_t k = m; k >= 1; --k) row[k] = log_add(log_k[k] + row[k], row[k - 1]);
    row[0] = kNegInf;
  }
  return row;
}

}  // namespace detail

/// Unique G in (0, 1) with G = v e^{G - v}; requires v > 1.
inline double solve_temme_g(double v) {
  detail::require(std::isfinite(v) && v > 1.0,
                  "Temme root needs v > 1 (more draws than parts), got v=" + std::to_string(v));
  return detail::temme_root(v - 1.0).g;
}

/// ln Stir(n, k) from the exact recurrence; n may not exceed `cap`.
inline double log_stirling2_exact(std::int64_t n, std::int64_t k,
                                  std::int64_t cap = kExactStirlingCap) {
  detail::check_stirling_args(n, k);
  detail::require(n <= cap, "exact Stirling path is capped at n=" + std::to_string(cap) +
                                ", got n=" + std::to_string(n) + "; use the asymptotic path");
  if (k == n) return 0.0;
  if (k == 0) return kNegInf;
  return detail::exact_stirling_row(n)[k];
}

/// Temme's uniform asymptotic estimate of ln Stir(n, k) for 1 <= k < n.
inline double log_stirling2_temme(std::int64_t n, std::int64_t k) {
  detail::require(k >= 1 && k < n, "Temme estimate needs 1 <= k < n, got n=" + std::to_string(n) +
                                       " k=" + std::to_string(k));
  const double nd = static_cast<double>(n);
  const double kd = static_cast<double>(k);
  const double v = nd / kd;
  const double excess = static_cast<double>(n - k) / kd;  // v - 1
  const auto [g, u] = detail::temme_root(excess);
  (void)g;
  const double log_excess = std::log(excess);
  return 0.5 * (log_excess - std::log(v) - std::log(u)) +
         (nd - kd) * (log_excess - std::log(excess + u)) + nd * std::log(kd) - kd * std::log(nd) +
         kd * u + detail::log_choose(n, k);
}

/// Thread-safe memo of whole rows ln Stir(n, .), exact up to the cap and
/// asymptotic above it (with the closed forms for k in {1, n-1, n}).
class StirlingRowCache {
 public:
  using Row = std::shared_ptr<const std::vector<double>>;

  static StirlingRowCache& instance() {
    static StirlingRowCache cache;
    return cache;
  }

  Row row(std::int64_t n, std::int64_t cap = kExactStirlingCap) {
    detail::require(n >= 0, "Stirling row needs n >= 0");
    const bool exact = n <= cap;
    const auto key = std::make_pair(n, exact);
    {
      std::lock_guard lock(mutex_);
      if (auto it = rows_.find(key); it != rows_.end()) return it->second;
    }
    Row built = std::make_shared<const std::vector<double>>(exact ? detail::exact_stirling_row(n)
                                                                  : asymptotic_row(n));
    std::lock_guard lock(mutex_);
    if (rows_.size() >= kMaxRows) rows_.clear();
    return rows_.try_emplace(key, std::move(built)).first->second;
  }

  void clear() {
    std::lock_guard lock(mutex_);
    rows_.clear();
  }

 private:
  static constexpr std::size_t kMaxRows = 64;

  static std::vector<double> asymptotic_row(std::int64_t n) {
    std::vector<double> row(static_cast<std::size_t>(n) + 1, kNegInf);
    if (n == 0) {
      row[0] = 0.0;
      return row;
    }
    row[1] = 0.0;
    row[n] = 0.0;
    if (n >= 3) row[n - 1] = detail::log_choose(n, 2);
    for (std::int64_t k = 2; k < n - 1; ++k) row[k] = log_stirling2_temme(n, k);
    return row;
  }

  std::mutex mutex_;
  std::map<std::pair<std::int64_t, bool>, Row> rows_;
};

/// ln Stir(n, k), exact below the cap and asymptotic above.
inline double log_stirling2(std::int64_t n, std::int64_t k) {
  detail::check_stirling_args(n, k);
  if (k == n) return 0.0;
  if (k == 0) return kNegInf;
  if (n <= kExactStirlingCap) return (*StirlingRowCache::instance().row(n))[k];
  if (k == 1) return 0.0;
  if (k == n - 1) return detail::log_choose(n, 2);
  return log_stirling2_temme(n, k);
}

/// ln( s! / ((s-k)! s^n) ): the ordered-assignment factor of P(k, n, s).
inline double log_falling_over_power(std::int64_t s, std::int64_t k, std::int64_t n) {
  const double sd = static_cast<double>(s);
  return std::lgamma(sd + 1.0) - std::lgamma(sd - static_cast<double>(k) + 1.0) -
         static_cast<double>(n) * std::log(sd);
}

/// ln P(k, n, s): probability of exactly k distinct items after n uniform
/// draws from s items. Impossible combinations give -inf.
inline LogProb log_prob_distinct(const OccupancyParams& p) {
  detail::require(p.n >= 1 && p.s >= 1 && p.k >= 1,
                  "occupancy parameters need k, n, s >= 1, got k=" + std::to_string(p.k) +
                      " n=" + std::to_string(p.n) + " s=" + std::to_string(p.s));
  if (p.k > p.s || p.k > p.n) return {};
  return {log_stirling2(p.n, p.k) + log_falling_over_power(p.s, p.k, p.n)};
}

/// Distribution of the distinct count K after a fixed number of draws, for
/// any support size. Holds one Stirling row; cheap to query for many s.
class OccupancyModel {
 public:
  explicit OccupancyModel(std::int64_t n_sample)
      : n_(n_sample), row_(StirlingRowCache::instance().row(n_sample)) {
    detail::require(n_sample >= 1, "occupancy model needs at least one draw");
  }

  std::int64_t draws() const { return n_; }

  double log_prob(std::int64_t k, std::int64_t s) const {
    if (k < 1 || k > n_ || k > s) return kNegInf;
    return (*row_)[k] + log_falling_over_power(s, k, n_);
  }

  /// ln P(K >= k | s).
  double log_tail_at_least(std::int64_t k, std::int64_t s) const {
    const std::int64_t top = std::min(n_, s);
    k = std::max<std::int64_t>(k, 1);
    if (k > top) return kNegInf;
    return accumulate(k, top, +1, s);
  }

  /// ln P(K <= k | s).
  double log_tail_at_most(std::int64_t k, std::int64_t s) const {
    const std::int64_t top = std::min({n_, s, k});
    if (top < 1) return kNegInf;
    return accumulate(top, 1, -1, s);
  }

  /// ln P(K = k | s) for k = 0..min(n, s).
  std::vector<double> log_distribution(std::int64_t s) const {
    const std::int64_t top = std::min(n_, s);
    std::vector<double> out(static_cast<std::size_t>(top) + 1, kNegInf);
    for (std::int64_t k = 1; k <= top; ++k) out[k] = log_prob(k, s);
    return out;
  }

 private:
  // Sums terms from `from` towards `to`. The terms are unimodal in k, so once
  // they fall 50 nats below the running total past the peak, the rest of the
  // tail cannot change the result in double precision.
  double accumulate(std::int64_t from, std::int64_t to, int step, std::int64_t s) const {
    double total = kNegInf;
    double previous = kNegInf;
    for (std::int64_t k = from;; k += step) {
      const double term = log_prob(k, s);
      total = detail::log_add(total, term);
      if (term < previous && term < total - 50.0) break;
      previous = term;
      if (k == to) break;
    }
    return total;
  }

  std::int64_t n_;
  StirlingRowCache::Row row_;
};

/// 1 - ((n_train - 1) / n_train)^n_sample.
inline double expected_diversity(std::int64_t n_sample, std::int64_t n_train) {
  detail::require(n_sample >= 0 && n_train >= 1, "expected_diversity needs n_sample >= 0, n_train >= 1");
  if (n_sample == 0) return 0.0;
  if (n_train == 1) return 1.0;
  return -std::expm1(static_cast<double>(n_sample) * std::log1p(-1.0 / static_cast<double>(n_train)));
}

/// E[IRS] when a model reproduces k_support of n_train items uniformly:
/// (K / N_train) (1 - (1 - 1/K)^N_sample).
inline double expected_irs_given_support(std::int64_t k_support, std::int64_t n_train,
                                         std::int64_t n_sample) {
  detail::require(k_support >= 1 && k_support <= n_train,
                  "support must lie in [1, n_train], got " + std::to_string(k_support));
  return static_cast<double>(k_support) / static_cast<double>(n_train) *
         expected_diversity(n_sample, k_support);
}

}  // namespace irs
