#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "irs/baselines.hpp"
#include "irs/simulator.hpp"
#include "oracles.hpp"

using namespace irs;

namespace {

MomentStats make_moments(Eigen::VectorXd mean, Eigen::MatrixXd cov) {
  MomentStats m;
  m.mean = std::move(mean);
  m.covariance = std::move(cov);
  m.n = 100;
  return m;
}

MomentStats random_moments(std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd a(d, d);
  Eigen::VectorXd mu(d);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < mu.size(); ++i) mu[i] = rng.normal();
  return make_moments(mu, a * a.transpose() / static_cast<double>(d) + 0.1 * Eigen::MatrixXd::Identity(d, d));
}

}  // namespace

TEST(Fid, Identity) {
  const auto m = random_moments(6, 1);
  EXPECT_NEAR(fid(m, m), 0.0, 1e-9);
}

TEST(Fid, MeanShiftOnly) {
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(4);
  e1[0] = 1.0;
  const auto a = make_moments(Eigen::VectorXd::Zero(4), Eigen::MatrixXd::Identity(4, 4));
  const auto b = make_moments(e1, Eigen::MatrixXd::Identity(4, 4));
  EXPECT_NEAR(fid(a, b), 1.0, 1e-12);
}

TEST(Fid, SymmetricOnRandomPairs) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto a = random_moments(5, 2 * s + 10);
    const auto b = random_moments(5, 2 * s + 11);
    EXPECT_NEAR(fid(a, b), fid(b, a), 1e-6);
    EXPECT_GE(fid(a, b), 0.0);
  }
}

TEST(Fid, DiagonalClosedForm) {
  Eigen::MatrixXd ca = Eigen::MatrixXd::Zero(3, 3), cb = Eigen::MatrixXd::Zero(3, 3);
  ca.diagonal() << 1.0, 4.0, 9.0;
  cb.diagonal() << 4.0, 1.0, 1.0;
  const auto a = make_moments(Eigen::VectorXd::Zero(3), ca);
  const auto b = make_moments(Eigen::VectorXd::Zero(3), cb);
  // sum (sqrt(a_i) - sqrt(b_i))^2 = 1 + 1 + 4
  EXPECT_NEAR(fid(a, b), 6.0, 1e-10);
}

TEST(Fid, ShuffledSampleVersusItself) {
  const auto x = oracle::gaussian(200, 8, 3);
  std::vector<std::size_t> perm(200);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(4);
  rng.shuffle(perm.begin(), perm.end());
  EXPECT_LT(fid(moments(x), moments(x.subset(perm))), 0.5);
  EXPECT_NEAR(fid(moments(x), moments(x.subset(perm))), 0.0, 1e-8);
}

TEST(Fid, NonFiniteMomentsRejected) {
  auto a = random_moments(3, 5);
  const auto b = random_moments(3, 6);
  a.mean[1] = std::nan("");
  EXPECT_THROW(fid(a, b), NumericalError);
}

TEST(Moments, UnbiasedCovariance) {
  FeatureSet fs{"m", "unit", Split::kTrain, 3, 1, {1.0f, 2.0f, 6.0f}};
  const auto m = moments(fs);
  EXPECT_DOUBLE_EQ(m.mean[0], 3.0);
  EXPECT_DOUBLE_EQ(m.covariance(0, 0), 7.0);
  FeatureSet one{"m", "unit", Split::kTrain, 1, 1, {1.0f}};
  EXPECT_THROW(moments(one), InputError);
}

TEST(PrecisionRecall, SelfCoverage) {
  const auto real = oracle::gaussian(120, 5, 7);
  auto gen = real;
  gen.split = Split::kSynthetic;
  const auto pr = precision_recall(real, gen, 3);
  EXPECT_EQ(pr.precision, 1.0);
  EXPECT_EQ(pr.recall, 1.0);
}

TEST(PrecisionRecall, DisjointSupports) {
  const auto real = oracle::gaussian(100, 5, 8);
  const auto gen = oracle::gaussian(100, 5, 9, Split::kSynthetic, 1e6);
  const auto pr = precision_recall(real, gen, 3);
  EXPECT_EQ(pr.precision, 0.0);
  EXPECT_EQ(pr.recall, 0.0);
}

TEST(PrecisionRecall, KOutOfRange) {
  const auto real = oracle::gaussian(10, 3, 1);
  const auto gen = oracle::gaussian(5, 3, 2, Split::kSynthetic);
  EXPECT_THROW(precision_recall(real, gen, 5), InputError);
  EXPECT_THROW(precision_recall(real, gen, 0), InputError);
  EXPECT_NO_THROW(precision_recall(real, gen, 4));
}

TEST(PrecisionRecall, HalfTheClusters) {
  MixtureSpec spec;
  spec.seed = 3;
  const auto data = make_mixture(spec);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < data.test.n; ++i) {
    if (data.test_labels[i] < 5) rows.push_back(i);
  }
  const auto gen = data.test.subset(rows);
  const auto pr = precision_recall(data.train, gen, 3);
  EXPECT_NEAR(pr.recall, 0.5, 0.1);
  EXPECT_GT(pr.precision, 0.8);
}

TEST(DensityCoverage, SelfCoverage) {
  const auto real = oracle::gaussian(80, 4, 10);
  const auto dc = density_coverage(real, real, 3);
  EXPECT_EQ(dc.coverage, 1.0);
  EXPECT_GT(dc.density, 0.0);
}

TEST(DensityCoverage, SingleRepeatedPointMatchesBruteForce) {
  const auto real = oracle::gaussian(50, 3, 11);
  const std::vector<std::size_t> rows(20, 17);
  auto gen = real.subset(rows);
  gen.split = Split::kSynthetic;
  // Brute force: sorted distances, k-th neighbour radius, ball membership.
  const std::size_t k = 3;
  std::vector<double> radius(real.n);
  for (std::size_t i = 0; i < real.n; ++i) {
    std::vector<double> d;
    for (std::size_t j = 0; j < real.n; ++j) {
      if (j != i) d.push_back(pairwise_distance(real.row(i), real.row(j), DistanceKind::kEuclidean));
    }
    std::sort(d.begin(), d.end());
    radius[i] = d[k - 1];
  }
  std::size_t covered = 0, memberships = 0;
  for (std::size_t i = 0; i < real.n; ++i) {
    const bool inside = pairwise_distance(real.row(i), real.row(17), DistanceKind::kEuclidean) <= radius[i];
    covered += inside;
    memberships += inside ? gen.n : 0;
  }
  const auto dc = density_coverage(real, gen, k);
  EXPECT_DOUBLE_EQ(dc.coverage, static_cast<double>(covered) / real.n);
  EXPECT_DOUBLE_EQ(dc.density, static_cast<double>(memberships) / (k * gen.n));
  EXPECT_LT(dc.coverage, 0.2);
}

TEST(DensityCoverage, KOutOfRange) {
  const auto real = oracle::gaussian(10, 3, 1);
  EXPECT_THROW(density_coverage(real, real, 10), InputError);
}

TEST(Vendi, IdenticalRows) {
  FeatureSet fs{"v", "unit", Split::kSynthetic, 30, 4, {}};
  for (std::size_t i = 0; i < fs.n; ++i) fs.data.insert(fs.data.end(), {1.0f, 2.0f, -1.0f, 0.5f});
  EXPECT_NEAR(vendi(fs), 1.0, 1e-9);
}

TEST(Vendi, OrthogonalRows) {
  const std::size_t n = 12;
  FeatureSet fs{"v", "unit", Split::kSynthetic, n, n, std::vector<float>(n * n, 0.0f)};
  for (std::size_t i = 0; i < n; ++i) fs.row(i)[i] = static_cast<float>(i + 1);
  EXPECT_NEAR(vendi(fs), static_cast<double>(n), 1e-9);
}

TEST(Vendi, TwoOrthogonalClusters) {
  // 10 rows near e1 and 10 near e2: block kernel with eigenvalues ~1/2, 1/2.
  FeatureSet fs{"v", "unit", Split::kSynthetic, 20, 2, {}};
  for (int i = 0; i < 10; ++i) fs.data.insert(fs.data.end(), {1.0f, 0.0f});
  for (int i = 0; i < 10; ++i) fs.data.insert(fs.data.end(), {0.0f, 3.0f});
  EXPECT_NEAR(vendi(fs), 2.0, 1e-9);
}

TEST(Vendi, BoundsAndErrors) {
  const auto x = oracle::gaussian(200, 16, 12);
  const double v = vendi(x);
  EXPECT_GE(v, 1.0);
  EXPECT_LE(v, 200.0);
  EXPECT_THROW(vendi(x, 100), InputError);
  auto zero = x;
  for (auto& f : zero.row(5)) f = 0.0f;
  EXPECT_THROW(vendi(zero), InputError);
  EXPECT_EQ(subsample(x, 100, 1).n, 100u);
  EXPECT_EQ(subsample(x, 100, 1).data, subsample(x, 100, 1).data);
}

TEST(Baselines, KEqualsOneCollapseOnRealData) {
  MixtureSpec spec;
  spec.seed = 5;
  const auto data = make_mixture(spec);
  const auto dc = density_coverage(data.train, data.test, 1);
  EXPECT_LT(dc.coverage, 0.9);
}
