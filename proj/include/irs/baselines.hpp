#pragma once

// Reference metrics computed on the same feature sets as IRS: Frechet
// distance, k-NN precision/recall, density/coverage and the Vendi score.

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "irs/errors.hpp"
#include "irs/features.hpp"
#include "irs/retrieval.hpp"

namespace irs {

inline constexpr std::size_t kDefaultBaselineK = 3;
inline constexpr std::size_t kDefaultVendiCap = 10000;

struct MomentStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  std::size_t n = 0;
};

/// Sample mean and unbiased covariance of the rows.
inline MomentStats moments(const FeatureSet& fs) {
  detail::require(fs.n >= 2, "moment statistics need at least two rows in '" + fs.id + "'");
  const auto d = static_cast<Eigen::Index>(fs.d);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(fs.n), d);
  for (std::size_t i = 0; i < fs.n; ++i) {
    const auto row = fs.row(i);
    for (Eigen::Index k = 0; k < d; ++k) x(static_cast<Eigen::Index>(i), k) = row[k];
  }
  MomentStats m;
  m.n = fs.n;
  m.mean = x.colwise().mean().transpose();
  x.rowwise() -= m.mean.transpose();
  m.covariance = (x.transpose() * x) / static_cast<double>(fs.n - 1);
  return m;
}

namespace detail {

inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a) {
  const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  const Eigen::VectorXd roots = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return solver.eigenvectors() * roots.asDiagonal() * solver.eigenvectors().transpose();
}

}  // namespace detail

/// ||mu_r - mu_g||^2 + Tr(C_r + C_g - 2 (C_r C_g)^{1/2}).
///
/// The trace of the product root is taken from the eigenvalues of the
/// symmetric matrix C_r^{1/2} C_g C_r^{1/2}, with negative eigenvalues
/// clamped to zero.
inline double fid(const MomentStats& real, const MomentStats& gen) {
  detail::require(real.mean.size() == gen.mean.size(), "FID needs equal dimensions");
  detail::require<NumericalError>(real.mean.allFinite() && gen.mean.allFinite() && real.covariance.allFinite() &&
                                      gen.covariance.allFinite(),
                                  "FID inputs contain non-finite moments");
  const Eigen::MatrixXd root_r = detail::psd_sqrt(real.covariance);
  Eigen::MatrixXd inner = root_r * gen.covariance * root_r;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(inner, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  const double trace_root = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double value = (real.mean - gen.mean).squaredNorm() + real.covariance.trace() + gen.covariance.trace() -
                       2.0 * trace_root;
  const double scale = std::max(1.0, real.covariance.trace() + gen.covariance.trace());
  detail::require<NumericalError>(value >= -1e-6 * scale, "FID evaluated to " + std::to_string(value));
  return std::max(0.0, value);
}

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
};

struct DensityCoverage {
  double density = 0.0;
  double coverage = 0.0;
};

namespace detail {

// For each query row, how many columns j satisfy score(q, j) <= threshold[j].
inline std::vector<std::size_t> count_in_column_balls(const FeatureSet& query, const FeatureSet& columns,
                                                      std::span<const double> column_threshold, DistanceKind kind,
                                                      const SearchOptions& options) {
  const PackedMatrix packed(columns, kind);
  std::vector<std::size_t> hits(query.n, 0);
  blocked_scan(query, packed, options, [&](std::size_t row, std::size_t col, std::size_t count, const double* s) {
    std::size_t h = 0;
    for (std::size_t l = 0; l < count; ++l) h += s[l] <= column_threshold[col + l];
    hits[row] += h;
  });
  return hits;
}

// For each query row, whether some column lies within the row's own threshold.
inline std::vector<bool> any_within_row_ball(const FeatureSet& query, const FeatureSet& columns,
                                             std::span<const double> row_threshold, DistanceKind kind,
                                             const SearchOptions& options) {
  const PackedMatrix packed(columns, kind);
  std::vector<char> hit(query.n, 0);
  blocked_scan(query, packed, options, [&](std::size_t row, std::size_t, std::size_t count, const double* s) {
    if (hit[row]) return;
    for (std::size_t l = 0; l < count; ++l) {
      if (s[l] <= row_threshold[row]) {
        hit[row] = 1;
        return;
      }
    }
  });
  return {hit.begin(), hit.end()};
}

inline void check_k(std::size_t k, std::size_t n, const std::string& which) {
  require(k >= 1 && k < n, "k=" + std::to_string(k) + " out of range for " + which + " set of size " +
                               std::to_string(n));
}

}  // namespace detail

/// Improved precision/recall: a point is covered when it falls inside the
/// k-NN ball of any point of the other set.
inline PrecisionRecall precision_recall(const FeatureSet& real, const FeatureSet& gen,
                                        std::size_t k = kDefaultBaselineK,
                                        DistanceKind kind = DistanceKind::kEuclidean,
                                        const SearchOptions& options = {}) {
  detail::check_k(k, real.n, "real");
  detail::check_k(k, gen.n, "generated");
  detail::require(real.d == gen.d, "dimension mismatch between real and generated features");
  const auto real_radius = detail::knn_scores(real, k, kind, options);
  const auto gen_radius = detail::knn_scores(gen, k, kind, options);
  const auto gen_hits = detail::count_in_column_balls(gen, real, real_radius, kind, options);
  const auto real_hits = detail::count_in_column_balls(real, gen, gen_radius, kind, options);
  PrecisionRecall pr;
  pr.precision = static_cast<double>(std::count_if(gen_hits.begin(), gen_hits.end(), [](auto h) { return h > 0; })) /
                 static_cast<double>(gen.n);
  pr.recall = static_cast<double>(std::count_if(real_hits.begin(), real_hits.end(), [](auto h) { return h > 0; })) /
              static_cast<double>(real.n);
  return pr;
}

/// Density: real-ball memberships per generated point, divided by k.
/// Coverage: fraction of real points whose k-NN ball holds a generated point.
inline DensityCoverage density_coverage(const FeatureSet& real, const FeatureSet& gen,
                                        std::size_t k = kDefaultBaselineK,
                                        DistanceKind kind = DistanceKind::kEuclidean,
                                        const SearchOptions& options = {}) {
  detail::check_k(k, real.n, "real");
  detail::require(real.d == gen.d, "dimension mismatch between real and generated features");
  const auto real_radius = detail::knn_scores(real, k, kind, options);
  const auto memberships = detail::count_in_column_balls(gen, real, real_radius, kind, options);
  const auto covered = detail::any_within_row_ball(real, gen, real_radius, kind, options);
  DensityCoverage dc;
  std::size_t total = 0;
  for (const auto m : memberships) total += m;
  dc.density = static_cast<double>(total) / (static_cast<double>(k) * static_cast<double>(gen.n));
  dc.coverage = static_cast<double>(std::count(covered.begin(), covered.end(), true)) / static_cast<double>(real.n);
  return dc;
}

/// exp of the Shannon entropy of the eigenvalues of K/n, K the cosine
/// similarity kernel. The nonzero spectrum of X X^T / n equals that of
/// X^T X / n, so the d x d Gram matrix is decomposed instead of the n x n one.
inline double vendi(const FeatureSet& fs, std::size_t cap = kDefaultVendiCap) {
  detail::require(fs.n >= 1, "Vendi score needs at least one row");
  detail::require(fs.n <= cap, "Vendi score is capped at n=" + std::to_string(cap) + ", got n=" +
                                   std::to_string(fs.n) + "; subsample first");
  const auto d = static_cast<Eigen::Index>(fs.d);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(fs.n), d);
  for (std::size_t i = 0; i < fs.n; ++i) {
    const auto row = fs.row(i);
    const double norm = std::sqrt(detail::squared_norm(row));
    detail::require(norm > 0.0, "Vendi cosine kernel needs nonzero rows; row " + std::to_string(i) + " is zero");
    for (Eigen::Index k = 0; k < d; ++k) x(static_cast<Eigen::Index>(i), k) = row[k] / norm;
  }
  const Eigen::MatrixXd gram = (x.transpose() * x) / static_cast<double>(fs.n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  const Eigen::VectorXd lambda = solver.eigenvalues().cwiseMax(0.0);
  const double total = lambda.sum();
  double entropy = 0.0;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    const double p = lambda[i] / total;
    if (p > 1e-15) entropy -= p * std::log(p);
  }
  return std::clamp(std::exp(entropy), 1.0, static_cast<double>(fs.n));
}

/// Seeded subsample of at most `cap` rows (all rows when already small).
inline FeatureSet subsample(const FeatureSet& fs, std::size_t cap, std::uint64_t seed) {
  if (fs.n <= cap) return fs;
  std::vector<std::size_t> rows(fs.n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(rows.begin(), rows.end());
  rows.resize(cap);
  std::sort(rows.begin(), rows.end());
  return fs.subset(rows);
}

}  // namespace irs
