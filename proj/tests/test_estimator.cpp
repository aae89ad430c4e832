#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "irs/estimator.hpp"
#include "irs/rng.hpp"
#include "oracles.hpp"

using namespace irs;

namespace {

std::int64_t exhaustive_mle(const IrsObservation& obs) {
  if (obs.n_learned == obs.n_sample) return obs.n_train;
  std::int64_t best = obs.n_learned;
  double best_value = kNegInf;
  for (std::int64_t s = obs.n_learned; s <= obs.n_train; ++s) {
    const double v = log_prob_distinct({obs.n_learned, obs.n_sample, s}).value;
    if (v > best_value) {
      best_value = v;
      best = s;
    }
  }
  return best;
}

}  // namespace

TEST(IrsAlpha, Values) {
  EXPECT_NEAR(irs_alpha({7465, 1277, 1159}), 0.1553, 5e-5);
  EXPECT_EQ(irs_alpha({100, 0, 0}), 0.0);
  EXPECT_EQ(irs_alpha({100, 250, 100}), 1.0);
  EXPECT_THROW(irs_alpha({100, 10, 11}), InputError);
  EXPECT_THROW(irs_alpha({100, 10, 0}), InputError);
  EXPECT_THROW(irs_alpha({0, 0, 0}), InputError);
}

TEST(MleSupport, EchoNetCounts) {
  EXPECT_NEAR(mle_support({7465, 1277, 1159}), 0.86, 0.02);
  EXPECT_NEAR(mle_support({7465, 1159, 692}), 0.123, 0.015);
}

TEST(MleSupport, NoDuplicatesGivesFullSupport) {
  EXPECT_EQ(mle_support({1000, 50, 50}), 1.0);
  EXPECT_EQ(mle_support({7, 7, 7}), 1.0);
}

TEST(MleSupport, MatchesExhaustiveSearch) {
  for (std::int64_t n_train : {1, 2, 5, 17, 60, 150, 333, 500}) {
    for (std::int64_t n_sample : {1, 3, 10, 40, 200, 700}) {
      for (std::int64_t k = 1; k <= std::min(n_sample, n_train); k += std::max<std::int64_t>(1, k / 3)) {
        const IrsObservation obs{n_train, n_sample, k};
        EXPECT_EQ(mle_support_count(obs), exhaustive_mle(obs)) << n_train << "," << n_sample << "," << k;
      }
    }
  }
}

TEST(ConfidenceBounds, EchoNetReal) {
  const auto ci = confidence_bounds({7465, 1277, 1159}, 0.05);
  EXPECT_NEAR(ci.lower, 0.75, 0.03);
  EXPECT_NEAR(ci.upper, 1.00, 0.03);
}

TEST(ConfidenceBounds, MatchesTailDefinition) {
  const IrsObservation obs{300, 120, 90};
  const auto ci = confidence_bounds(obs, 0.05);
  auto tail_ge = [&](std::int64_t s) {
    double p = 0;
    for (std::int64_t k = obs.n_learned; k <= std::min(obs.n_sample, s); ++k)
      p += log_prob_distinct({k, obs.n_sample, s}).prob();
    return p;
  };
  auto tail_le = [&](std::int64_t s) {
    double p = 0;
    for (std::int64_t k = 1; k <= std::min(obs.n_learned, s); ++k) p += log_prob_distinct({k, obs.n_sample, s}).prob();
    return p;
  };
  std::int64_t lower = -1, upper = -1;
  for (std::int64_t s = obs.n_learned; s <= obs.n_train; ++s) {
    if (lower < 0 && tail_ge(s) > 0.05) lower = s;
    if (tail_le(s) > 0.05) upper = s;
  }
  EXPECT_DOUBLE_EQ(ci.lower, lower / 300.0);
  EXPECT_DOUBLE_EQ(ci.upper, upper / 300.0);
}

TEST(ConfidenceBounds, RejectsBadErrorLevel) {
  EXPECT_THROW(confidence_bounds({100, 50, 40}, 0.0), InputError);
  EXPECT_THROW(confidence_bounds({100, 50, 40}, 0.5), InputError);
}

TEST(ConfidenceBounds, OrderingOnRandomSweep) {
  Rng rng(99);
  for (int i = 0; i < 1000; ++i) {
    const auto n_train = static_cast<std::int64_t>(1 + rng.uniform_index(3000));
    const auto n_sample = static_cast<std::int64_t>(1 + rng.uniform_index(3000));
    const auto k = static_cast<std::int64_t>(1 + rng.uniform_index(std::min(n_train, n_sample)));
    const auto r = estimate_irs({n_train, n_sample, k}, 0.05);
    EXPECT_LE(r.irs_inf_lower, r.irs_inf) << n_train << "," << n_sample << "," << k;
    EXPECT_LE(r.irs_inf, r.irs_inf_upper) << n_train << "," << n_sample << "," << k;
    EXPECT_LE(r.irs_alpha, r.irs_inf);
    EXPECT_LE(r.irs_alpha, r.irs_inf_upper);
    EXPECT_LE(r.irs_inf_upper, 1.0);
  }
}

TEST(AdjustedIrs, Values) {
  IrsReport synth, real;
  synth.irs_inf = 0.123;
  real.irs_inf = 0.86;
  EXPECT_NEAR(adjusted_irs(synth, real), 0.143, 5e-4);
  synth.irs_inf = 0.30;
  real.irs_inf = 0.20;
  EXPECT_NEAR(adjusted_irs(synth, real), 1.5, 1e-12);
  const auto x = estimate_irs({500, 300, 200});
  EXPECT_EQ(adjusted_irs(x, x), 1.0);
  real.irs_inf = 0.0;
  EXPECT_THROW(adjusted_irs(synth, real), InputError);
}

TEST(RejectionThreshold, ImageNetScale) {
  const auto plan = rejection_threshold(0.80, 1281166, 50000, 0.05);
  EXPECT_NEAR(static_cast<double>(plan.k_min), 48744.0, 20.0);
  EXPECT_EQ(plan.n_sample, 50000);
}

TEST(RejectionThreshold, DegenerateLevels) {
  // One draw from one item: the only outcome is one distinct item.
  EXPECT_EQ(rejection_threshold(1.0 / 800, 800, 1, 0.999).k_min, 1);
  // A vanishing error level never rejects anything that can happen.
  EXPECT_EQ(rejection_threshold(0.5, 800, 100, 1e-300).k_min, 1);
  // An error level near one rejects everything short of the maximum.
  EXPECT_EQ(rejection_threshold(1.0, 800, 100, 0.999999).k_min, 100);
  EXPECT_THROW(rejection_threshold(0.0, 800, 100, 0.05), InputError);
  EXPECT_THROW(rejection_threshold(1.2, 800, 100, 0.05), InputError);
  EXPECT_THROW(rejection_threshold(0.5, 800, 100, 1.0), InputError);
}

TEST(RejectionThreshold, MatchesUrnQuantile) {
  const auto plan = rejection_threshold(0.5, 800, 100, 0.05);
  Rng rng(7);
  std::vector<std::int64_t> counts(100000);
  for (auto& c : counts) c = oracle::urn_distinct(100, 400, rng);
  std::sort(counts.begin(), counts.end());
  const auto q05 = counts[counts.size() / 20];
  EXPECT_LE(std::abs(plan.k_min - q05), 1) << "k_min " << plan.k_min << " vs quantile " << q05;
}

TEST(RejectionThreshold, Definition) {
  const auto plan = rejection_threshold(0.5, 800, 100, 0.05);
  const OccupancyModel model(100);
  const double below_kmin = std::exp(model.log_tail_at_most(plan.k_min - 1, 400));
  const double below_next = std::exp(model.log_tail_at_most(plan.k_min, 400));
  EXPECT_LE(below_kmin, 0.05);
  EXPECT_GT(below_next, 0.05);
}

TEST(EarlyReject, ConstantStream) {
  const RejectionPlan plan{0.8, 0.05, 10000, 2000, 1258};
  const std::vector<std::int64_t> stream(2000, 0);
  const auto d = early_reject(stream, plan);
  EXPECT_EQ(d.verdict, Verdict::kReject);
  EXPECT_EQ(d.index, 743);
  EXPECT_EQ(d.distinct, 1);
  EXPECT_EQ(d.trajectory.size(), 744u);
}

TEST(EarlyReject, AllDistinctPasses) {
  const RejectionPlan plan{0.8, 0.05, 10000, 2000, 1258};
  std::vector<std::int64_t> stream(2000);
  for (std::size_t i = 0; i < stream.size(); ++i) stream[i] = static_cast<std::int64_t>(i);
  const auto d = early_reject(stream, plan);
  EXPECT_EQ(d.verdict, Verdict::kPass);
  EXPECT_EQ(d.index, 1999);
  EXPECT_EQ(d.distinct, 2000);
  EXPECT_TRUE(std::is_sorted(d.trajectory.begin(), d.trajectory.end()));
}

TEST(EarlyReject, StreamErrors) {
  const RejectionPlan plan{0.8, 0.05, 10, 3, 2};
  EXPECT_THROW(early_reject(std::vector<std::int64_t>{1, 2, 3, 4}, plan), InputError);
  EXPECT_THROW(early_reject(std::vector<std::int64_t>{1, 10}, plan), InputError);
  EarlyRejector r(plan);
  EXPECT_FALSE(r.push(0));
  EXPECT_EQ(r.finish().verdict, Verdict::kPending);
  EXPECT_FALSE(r.push(5));
  EXPECT_EQ(r.finish().verdict, Verdict::kPass);
}

TEST(EarlyReject, LowDiversityRejectedEarly) {
  const auto plan = rejection_threshold(0.8, 800, 400, 0.05);
  Rng rng(3);
  int rejects = 0, before_end = 0;
  for (int t = 0; t < 200; ++t) {
    std::vector<std::int64_t> stream(400);
    for (auto& x : stream) x = static_cast<std::int64_t>(rng.uniform_index(400));
    const auto d = early_reject(stream, plan);
    rejects += d.verdict == Verdict::kReject;
    before_end += d.verdict == Verdict::kReject && d.index < 399;
  }
  EXPECT_GE(rejects, 190);
  EXPECT_GE(before_end, 190);
}
