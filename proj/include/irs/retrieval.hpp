#pragma once

// Exact nearest-neighbour retrieval of training rows for every query row, and
// the composition of retrieval with the estimator into an IRS report.
//
// Distances use 32-bit storage and 64-bit accumulation. Every (query, train)
// pair goes through the same micro-kernel with a fixed summation order over
// the feature dimension, so results do not depend on block size or on the
// number of worker threads.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "irs/errors.hpp"
#include "irs/estimator.hpp"
#include "irs/features.hpp"
#include "irs/parallel.hpp"
#include "irs/rng.hpp"

namespace irs {

enum class DistanceKind { kEuclidean, kCosine };

inline std::string to_string(DistanceKind kind) {
  return kind == DistanceKind::kEuclidean ? "euclidean" : "cosine";
}

inline DistanceKind parse_distance_kind(const std::string& name) {
  if (name == "euclidean") return DistanceKind::kEuclidean;
  if (name == "cosine") return DistanceKind::kCosine;
  throw InputError("unknown distance '" + name + "' (expected euclidean or cosine)");
}

/// Direct evaluation of one distance in double precision.
inline double pairwise_distance(std::span<const float> a, std::span<const float> b, DistanceKind kind) {
  detail::require(a.size() == b.size(), "dimension mismatch: " + std::to_string(a.size()) + " vs " +
                                            std::to_string(b.size()));
  if (kind == DistanceKind::kEuclidean) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
      sum += diff * diff;
    }
    return std::sqrt(sum);
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  detail::require(na > 0.0 && nb > 0.0, "cosine distance is undefined for a zero-norm row");
  return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

struct SearchOptions {
  std::size_t block_rows = 96;  // query rows per work unit
  unsigned threads = 0;         // 0 = all cores
};

struct RetrievalOutcome {
  std::vector<std::int64_t> nearest;
  std::vector<double> distance;
  std::int64_t n_learned = 0;
};

/// Number of distinct values in `indices` (all within [0, n_train)).
inline std::int64_t count_distinct(std::span<const std::int64_t> indices, std::int64_t n_train) {
  std::vector<bool> seen(static_cast<std::size_t>(n_train), false);
  std::int64_t distinct = 0;
  for (const auto i : indices) {
    if (!seen[i]) {
      seen[i] = true;
      ++distinct;
    }
  }
  return distinct;
}

namespace detail {

inline constexpr std::size_t kLanes = 16;    // train rows per packed panel
inline constexpr std::size_t kTileRows = 12;  // query rows per micro-tile

using v8d = double __attribute__((vector_size(64)));
using v8f = float __attribute__((vector_size(32)));

// Row norms accumulated in double, sequentially over the dimension.
inline double squared_norm(std::span<const float> row) {
  double sum = 0.0;
  for (const float x : row) sum += static_cast<double>(x) * x;
  return sum;
}

/// Training matrix packed into 16-row panels, dimension-major inside each
/// panel, with the per-row norm term the score needs.
class PackedMatrix {
 public:
  PackedMatrix(const FeatureSet& fs, DistanceKind kind)
      : rows_(fs.n), dim_(fs.d), panels_((fs.n + kLanes - 1) / kLanes), kind_(kind) {
    data_.assign(panels_ * dim_ * kLanes, 0.0f);
    norms_.assign(panels_ * kLanes, 0.0);
    for (std::size_t i = 0; i < rows_; ++i) {
      const auto row = fs.row(i);
      const std::size_t panel = i / kLanes, lane = i % kLanes;
      float* dst = data_.data() + panel * dim_ * kLanes + lane;
      for (std::size_t k = 0; k < dim_; ++k) dst[k * kLanes] = row[k];
      const double sq = squared_norm(row);
      if (kind == DistanceKind::kCosine) {
        require(sq > 0.0, "cosine distance needs nonzero rows; row " + std::to_string(i) + " of '" + fs.id +
                              "' has zero norm");
        norms_[i] = std::sqrt(sq);
      } else {
        norms_[i] = sq;
      }
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t dim() const { return dim_; }
  std::size_t panels() const { return panels_; }
  DistanceKind kind() const { return kind_; }
  const float* panel(std::size_t p) const { return data_.data() + p * dim_ * kLanes; }
  const double* norms(std::size_t p) const { return norms_.data() + p * kLanes; }

 private:
  std::size_t rows_, dim_, panels_;
  DistanceKind kind_;
  std::vector<float> data_;
  std::vector<double> norms_;
};

// out[r][l] = sum_k q[r][k] * panel[k][l], summed in increasing k.
inline void dot_tile(const double* q, std::size_t dim, const float* panel, double (&out)[kTileRows][kLanes]) {
  v8d acc[kTileRows][2] = {};
  for (std::size_t k = 0; k < dim; ++k) {
    v8f lo, hi;
    std::memcpy(&lo, panel + k * kLanes, sizeof(v8f));
    std::memcpy(&hi, panel + k * kLanes + 8, sizeof(v8f));
    const v8d b0 = __builtin_convertvector(lo, v8d);
    const v8d b1 = __builtin_convertvector(hi, v8d);
    for (std::size_t r = 0; r < kTileRows; ++r) {
      const double a = q[r * dim + k];
      acc[r][0] += a * b0;
      acc[r][1] += a * b1;
    }
  }
  for (std::size_t r = 0; r < kTileRows; ++r) {
    std::memcpy(&out[r][0], &acc[r][0], sizeof(v8d));
    std::memcpy(&out[r][8], &acc[r][1], sizeof(v8d));
  }
}

/// Calls visit(query_row, train_begin, count, scores) for every query row and
/// every 16-row train panel, panels in increasing order per query row. Scores
/// are squared distances for Euclidean and distances for cosine. Each query
/// row is visited by exactly one thread.
template <typename Visitor>
void blocked_scan(const FeatureSet& query, const PackedMatrix& train, const SearchOptions& options,
                  Visitor&& visit) {
  require(query.d == train.dim(), "dimension mismatch: query d=" + std::to_string(query.d) + ", train d=" +
                                      std::to_string(train.dim()));
  const std::size_t dim = train.dim();
  const std::size_t block_rows = std::max<std::size_t>(1, options.block_rows);
  const std::size_t blocks = (query.n + block_rows - 1) / block_rows;
  const bool cosine = train.kind() == DistanceKind::kCosine;

  parallel_for(blocks, options.threads, [&](std::size_t block) {
    const std::size_t begin = block * block_rows;
    const std::size_t count = std::min(block_rows, query.n - begin);
    const std::size_t tiles = (count + kTileRows - 1) / kTileRows;
    std::vector<double> q(tiles * kTileRows * dim, 0.0);
    std::vector<double> qnorm(tiles * kTileRows, 0.0);
    for (std::size_t r = 0; r < count; ++r) {
      const auto row = query.row(begin + r);
      for (std::size_t k = 0; k < dim; ++k) q[r * dim + k] = row[k];
      const double sq = squared_norm(row);
      if (cosine) {
        require(sq > 0.0, "cosine distance needs nonzero rows; query row " + std::to_string(begin + r) +
                              " of '" + query.id + "' has zero norm");
        qnorm[r] = std::sqrt(sq);
      } else {
        qnorm[r] = sq;
      }
    }
    double dots[kTileRows][kLanes];
    double scores[kLanes];
    for (std::size_t p = 0; p < train.panels(); ++p) {
      const std::size_t col = p * kLanes;
      const std::size_t lanes = std::min(kLanes, train.rows() - col);
      const double* tnorm = train.norms(p);
      for (std::size_t t = 0; t < tiles; ++t) {
        dot_tile(q.data() + t * kTileRows * dim, dim, train.panel(p), dots);
        const std::size_t rows_here = std::min(kTileRows, count - t * kTileRows);
        for (std::size_t r = 0; r < rows_here; ++r) {
          const std::size_t local = t * kTileRows + r;
          const double qn = qnorm[local];
          for (std::size_t l = 0; l < lanes; ++l) {
            if (cosine) {
              scores[l] = 1.0 - dots[r][l] / (qn * tnorm[l]);
            } else {
              scores[l] = std::max(0.0, qn + tnorm[l] - 2.0 * dots[r][l]);
            }
          }
          visit(begin + local, col, lanes, static_cast<const double*>(scores));
        }
      }
    }
  });
}

inline double score_to_distance(double score, DistanceKind kind) {
  return kind == DistanceKind::kEuclidean ? std::sqrt(score) : std::max(0.0, score);
}

inline double distance_to_score(double distance, DistanceKind kind) {
  return kind == DistanceKind::kEuclidean ? distance * distance : distance;
}

}  // namespace detail

/// Nearest training row for every query row (ties go to the lowest index).
inline RetrievalOutcome nearest_train(const FeatureSet& query, const FeatureSet& train,
                                      DistanceKind kind = DistanceKind::kEuclidean,
                                      const SearchOptions& options = {}) {
  detail::require(train.n >= 1, "training set is empty");
  detail::require(train.split == Split::kTrain, "the retrieval target must be a train split, got '" +
                                                    to_string(train.split) + "'");
  detail::require(query.d == train.d, "dimension mismatch: query '" + query.id + "' has d=" +
                                          std::to_string(query.d) + ", train '" + train.id +
                                          "' has d=" + std::to_string(train.d));
  const detail::PackedMatrix packed(train, kind);
  std::vector<double> best(query.n, std::numeric_limits<double>::infinity());
  std::vector<std::int64_t> index(query.n, -1);
  detail::blocked_scan(query, packed, options,
                       [&](std::size_t row, std::size_t col, std::size_t count, const double* scores) {
                         double b = best[row];
                         std::int64_t bi = index[row];
                         for (std::size_t l = 0; l < count; ++l) {
                           if (scores[l] < b) {
                             b = scores[l];
                             bi = static_cast<std::int64_t>(col + l);
                           }
                         }
                         best[row] = b;
                         index[row] = bi;
                       });
  RetrievalOutcome out;
  out.nearest = std::move(index);
  out.distance.resize(query.n);
  for (std::size_t i = 0; i < query.n; ++i) {
    if (out.nearest[i] < 0) throw NumericalError("query row " + std::to_string(i) + " has no finite distance");
    out.distance[i] = detail::score_to_distance(best[i], kind);
  }
  out.n_learned = count_distinct(out.nearest, static_cast<std::int64_t>(train.n));
  return out;
}

namespace detail {

// Score (see blocked_scan) of the k-th nearest other row, per row.
inline std::vector<double> knn_scores(const FeatureSet& points, std::size_t k, DistanceKind kind,
                                      const SearchOptions& options) {
  require(k >= 1 && k < points.n, "k=" + std::to_string(k) + " must lie in [1, n) with n=" +
                                      std::to_string(points.n));
  const PackedMatrix packed(points, kind);
  std::vector<double> smallest(points.n * k, std::numeric_limits<double>::infinity());
  blocked_scan(points, packed, options, [&](std::size_t row, std::size_t col, std::size_t count, const double* scores) {
    double* top = smallest.data() + row * k;
    for (std::size_t l = 0; l < count; ++l) {
      if (col + l == row || !(scores[l] < top[k - 1])) continue;
      std::size_t pos = k - 1;
      while (pos > 0 && top[pos - 1] > scores[l]) {
        top[pos] = top[pos - 1];
        --pos;
      }
      top[pos] = scores[l];
    }
  });
  std::vector<double> out(points.n);
  for (std::size_t i = 0; i < points.n; ++i) out[i] = smallest[i * k + k - 1];
  return out;
}

}  // namespace detail

/// Distance from every row of `points` to its k-th nearest other row in the
/// same set (the row itself is excluded; exact duplicates count).
inline std::vector<double> knn_radii(const FeatureSet& points, std::size_t k,
                                     DistanceKind kind = DistanceKind::kEuclidean,
                                     const SearchOptions& options = {}) {
  auto radii = detail::knn_scores(points, k, kind, options);
  for (auto& r : radii) r = detail::score_to_distance(r, kind);
  return radii;
}

// ---------------------------------------------------------------------------
// IRS measurement

struct IrsOptions {
  DistanceKind kind = DistanceKind::kEuclidean;
  double alpha_e = kDefaultAlphaE;
  int folds = 5;                         // used when the train set is small
  std::size_t fold_threshold = 100000;   // train sizes below this are folded
  std::uint64_t seed = 0;
  SearchOptions search;
};

struct IrsMeasurement {
  IrsReport report;
  std::optional<IrsReport> reference;
  RetrievalOutcome retrieval;
  std::optional<RetrievalOutcome> reference_retrieval;
};

namespace detail {

inline void check_compatible(const FeatureSet& a, const FeatureSet& b) {
  require(a.d == b.d, "dimension mismatch: '" + a.id + "' has d=" + std::to_string(a.d) + ", '" + b.id +
                          "' has d=" + std::to_string(b.d));
  require(a.extractor_name.empty() || b.extractor_name.empty() || a.extractor_name == b.extractor_name,
          "extractor mismatch: '" + a.extractor_name + "' vs '" + b.extractor_name + "'");
}

// Estimator report for one retrieval. With folds > 1 the query rows are split
// into disjoint folds by a seeded shuffle; each fold's observation is
// extrapolated separately and IRS_inf and its bounds are averaged, while
// IRS_alpha and the observation describe the full query set.
inline IrsReport report_from_retrieval(const RetrievalOutcome& r, std::int64_t n_train, const IrsOptions& opt,
                                       std::uint64_t stream) {
  const auto n_query = static_cast<std::int64_t>(r.nearest.size());
  const IrsObservation full{n_train, n_query, r.n_learned};
  const bool fold = opt.folds > 1 && static_cast<std::size_t>(n_train) < opt.fold_threshold &&
                    n_query >= opt.folds;
  if (!fold) {
    auto report = estimate_irs(full, opt.alpha_e);
    report.folds = 1;
    return report;
  }
  std::vector<std::int64_t> order(static_cast<std::size_t>(n_query));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(opt.seed, stream));
  rng.shuffle(order.begin(), order.end());
  IrsReport report;
  report.observation = full;
  report.alpha_e = opt.alpha_e;
  report.irs_alpha = irs_alpha(full);
  report.irs_inf = report.irs_inf_lower = report.irs_inf_upper = 0.0;
  report.folds = opt.folds;
  std::vector<std::int64_t> fold_indices;
  for (int f = 0; f < opt.folds; ++f) {
    const auto begin = n_query * f / opt.folds;
    const auto end = n_query * (f + 1) / opt.folds;
    fold_indices.clear();
    for (auto i = begin; i < end; ++i) fold_indices.push_back(r.nearest[order[i]]);
    const IrsObservation obs{n_train, end - begin, count_distinct(fold_indices, n_train)};
    const auto part = estimate_irs(obs, opt.alpha_e);
    report.irs_inf += part.irs_inf / opt.folds;
    report.irs_inf_lower += part.irs_inf_lower / opt.folds;
    report.irs_inf_upper += part.irs_inf_upper / opt.folds;
  }
  report.irs_inf = std::max(report.irs_inf, report.irs_alpha);
  report.irs_inf_upper = std::max(report.irs_inf_upper, report.irs_inf);
  report.irs_inf_lower = std::min(report.irs_inf_lower, report.irs_inf);
  return report;
}

}  // namespace detail

/// Retrieval + estimation for a query set, with the real-reference
/// adjustment when a reference set is given.
inline IrsMeasurement measure_irs_detailed(const FeatureSet& query, const FeatureSet& train,
                                           const FeatureSet* reference, const IrsOptions& options = {}) {
  detail::require(train.split == Split::kTrain, "the retrieval target must be a train split, got '" +
                                                    to_string(train.split) + "'");
  detail::check_compatible(query, train);
  if (reference) detail::check_compatible(*reference, train);
  IrsMeasurement m;
  const auto n_train = static_cast<std::int64_t>(train.n);
  m.retrieval = nearest_train(query, train, options.kind, options.search);
  m.report = detail::report_from_retrieval(m.retrieval, n_train, options, 0);
  if (reference) {
    m.reference_retrieval = nearest_train(*reference, train, options.kind, options.search);
    m.reference = detail::report_from_retrieval(*m.reference_retrieval, n_train, options, 1);
    m.report.irs_adjusted = adjusted_irs(m.report, *m.reference);
    m.reference->irs_adjusted = 1.0;
  }
  return m;
}

inline IrsReport measure_irs(const FeatureSet& query, const FeatureSet& train, const FeatureSet* reference = nullptr,
                             const IrsOptions& options = {}) {
  return measure_irs_detailed(query, train, reference, options).report;
}

}  // namespace irs
