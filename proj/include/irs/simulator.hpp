#pragma once

// Ground-truth experiments: the urn model of a generator that reproduces a
// known subset of the training set, estimator calibration, online rejection
// statistics, and a Gaussian-mixture class-removal fixture that exercises the
// full retrieval path.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "irs/baselines.hpp"
#include "irs/errors.hpp"
#include "irs/estimator.hpp"
#include "irs/features.hpp"
#include "irs/parallel.hpp"
#include "irs/retrieval.hpp"
#include "irs/rng.hpp"

namespace irs {

/// A generator whose outputs are uniform draws from the first s_true of
/// n_train training items.
struct UrnModel {
  std::int64_t n_train = 0;
  std::int64_t s_true = 0;
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(s_true >= 1 && s_true <= n_train, "urn model needs 1 <= s_true <= n_train");
  }
};

/// Draws n_sample indices; `stream` selects an independent reproducible stream.
inline std::vector<std::int64_t> draw_stream(const UrnModel& model, std::int64_t n_sample, std::uint64_t stream = 0) {
  model.validate();
  detail::require(n_sample >= 1, "n_sample must be positive");
  Rng rng(derive_seed(model.seed, stream));
  std::vector<std::int64_t> out(static_cast<std::size_t>(n_sample));
  for (auto& x : out) x = static_cast<std::int64_t>(rng.uniform_index(static_cast<std::uint64_t>(model.s_true)));
  return out;
}

/// Distinct count after each prefix of the stream.
inline std::vector<std::int64_t> distinct_trajectory(std::span<const std::int64_t> stream, std::int64_t n_train) {
  std::vector<bool> seen(static_cast<std::size_t>(n_train), false);
  std::vector<std::int64_t> out;
  out.reserve(stream.size());
  std::int64_t distinct = 0;
  for (const auto i : stream) {
    if (!seen[i]) {
      seen[i] = true;
      ++distinct;
    }
    out.push_back(distinct);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Calibration

struct CalibrationRow {
  double alpha = 0.0;
  std::int64_t n_sample = 0;
  std::size_t trials = 0;
  double coverage = 0.0;        // fraction of intervals containing s_true / n_train
  double mean_mle = 0.0;
  double mean_abs_error = 0.0;  // |IRS_inf - s_true / n_train|
  double mean_width = 0.0;
};

inline std::vector<CalibrationRow> calibration_experiment(const UrnModel& model, std::span<const double> alphas,
                                                          std::size_t trials, double alpha_e = kDefaultAlphaE,
                                                          unsigned threads = 0) {
  model.validate();
  detail::require(trials >= 100, "calibration needs at least 100 trials");
  const double truth = static_cast<double>(model.s_true) / static_cast<double>(model.n_train);
  std::vector<CalibrationRow> rows;
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    detail::require(alphas[a] > 0.0, "sampling ratios must be positive");
    const auto n_sample = std::max<std::int64_t>(1, std::llround(alphas[a] * static_cast<double>(model.n_train)));
    std::vector<IrsReport> reports(trials);
    parallel_for(trials, threads, [&](std::size_t t) {
      const auto stream = draw_stream(model, n_sample, (static_cast<std::uint64_t>(a) << 32) | t);
      const IrsObservation obs{model.n_train, n_sample, count_distinct(stream, model.n_train)};
      reports[t] = estimate_irs(obs, alpha_e);
    });
    CalibrationRow row{alphas[a], n_sample, trials};
    for (const auto& r : reports) {
      row.coverage += (r.irs_inf_lower <= truth && truth <= r.irs_inf_upper) ? 1.0 : 0.0;
      row.mean_mle += r.irs_inf;
      row.mean_abs_error += std::abs(r.irs_inf - truth);
      row.mean_width += r.irs_inf_upper - r.irs_inf_lower;
    }
    const auto n = static_cast<double>(trials);
    row.coverage /= n;
    row.mean_mle /= n;
    row.mean_abs_error /= n;
    row.mean_width /= n;
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Online rejection

struct RejectionStats {
  std::size_t trials = 0;
  double low_reject_rate = 0.0;
  double low_mean_decision_index = 0.0;
  double high_pass_rate = 0.0;
  double high_mean_decision_index = 0.0;
};

inline RejectionStats rejection_experiment(const UrnModel& low, const UrnModel& high, const RejectionPlan& plan,
                                           std::size_t trials, unsigned threads = 0) {
  low.validate();
  high.validate();
  detail::require(low.n_train == plan.n_train && high.n_train == plan.n_train,
                  "urn models and plan must share n_train");
  detail::require(trials >= 1, "need at least one trial");
  std::vector<RejectionDecision> lows(trials), highs(trials);
  parallel_for(trials, threads, [&](std::size_t t) {
    lows[t] = early_reject(draw_stream(low, plan.n_sample, t), plan);
    highs[t] = early_reject(draw_stream(high, plan.n_sample, t), plan);
    lows[t].trajectory.clear();
    highs[t].trajectory.clear();
  });
  RejectionStats stats;
  stats.trials = trials;
  for (std::size_t t = 0; t < trials; ++t) {
    stats.low_reject_rate += lows[t].verdict == Verdict::kReject;
    stats.low_mean_decision_index += static_cast<double>(lows[t].index);
    stats.high_pass_rate += highs[t].verdict == Verdict::kPass;
    stats.high_mean_decision_index += static_cast<double>(highs[t].index);
  }
  const auto n = static_cast<double>(trials);
  stats.low_reject_rate /= n;
  stats.low_mean_decision_index /= n;
  stats.high_pass_rate /= n;
  stats.high_mean_decision_index /= n;
  return stats;
}

// ---------------------------------------------------------------------------
// Gaussian mixture fixture

struct MixtureSpec {
  std::size_t n_classes = 10;
  std::size_t train_per_class = 200;
  std::size_t reference_per_class = 200;
  std::size_t test_per_class = 200;
  std::size_t d = 8;
  double separation = 10.0;  // minimum distance between class centres
  double sigma = 1.0;        // within-class standard deviation
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(n_classes >= 2, "mixture needs at least two classes");
    detail::require(separation > 0.0 && sigma > 0.0, "separation and sigma must be positive");
    detail::require(d >= 1, "mixture dimension must be positive");
    detail::require(train_per_class >= 2 && reference_per_class >= 1 && test_per_class >= 1,
                    "degenerate split sizes: need >= 2 train and >= 1 reference/test rows per class");
  }
};

struct MixtureData {
  FeatureSet train;
  FeatureSet reference;
  FeatureSet test;
  std::vector<std::size_t> test_labels;
  std::vector<std::size_t> train_labels;
};

namespace detail {

inline FeatureSet draw_split(const std::vector<std::vector<double>>& centres, std::size_t per_class, double sigma,
                             Rng& rng, Split split, std::vector<std::size_t>* labels) {
  const std::size_t d = centres.front().size();
  FeatureSet fs{"mixture_" + to_string(split), "mixture", split, centres.size() * per_class, d, {}};
  fs.data.reserve(fs.n * d);
  for (std::size_t c = 0; c < centres.size(); ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      for (std::size_t k = 0; k < d; ++k) fs.data.push_back(static_cast<float>(centres[c][k] + sigma * rng.normal()));
      if (labels) labels->push_back(c);
    }
  }
  return fs;
}

}  // namespace detail

/// Class centres on a sphere of radius `separation`, redrawn until every
/// pair is at least `separation` apart; isotropic Gaussian rows around them.
inline MixtureData make_mixture(const MixtureSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, 0));
  std::vector<std::vector<double>> centres;
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    bool placed = false;
    for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
      std::vector<double> v(spec.d);
      double norm = 0.0;
      for (auto& x : v) {
        x = rng.normal();
        norm += x * x;
      }
      norm = std::sqrt(norm);
      for (auto& x : v) x *= spec.separation / norm;
      placed = std::all_of(centres.begin(), centres.end(), [&](const auto& other) {
        double dist = 0.0;
        for (std::size_t k = 0; k < spec.d; ++k) dist += (v[k] - other[k]) * (v[k] - other[k]);
        return std::sqrt(dist) >= spec.separation;
      });
      if (placed) centres.push_back(std::move(v));
    }
    detail::require(placed, "cannot place " + std::to_string(spec.n_classes) + " class centres " +
                                std::to_string(spec.separation) + " apart in d=" + std::to_string(spec.d));
  }
  MixtureData data;
  Rng train_rng(derive_seed(spec.seed, 1)), ref_rng(derive_seed(spec.seed, 2)), test_rng(derive_seed(spec.seed, 3));
  data.train = detail::draw_split(centres, spec.train_per_class, spec.sigma, train_rng, Split::kTrain, &data.train_labels);
  data.reference = detail::draw_split(centres, spec.reference_per_class, spec.sigma, ref_rng, Split::kReference, nullptr);
  data.test = detail::draw_split(centres, spec.test_per_class, spec.sigma, test_rng, Split::kTest, &data.test_labels);
  return data;
}

/// Writes train/reference/test NPY files plus manifest.json into `directory`.
inline Manifest export_mixture(const std::filesystem::path& directory, const MixtureData& data) {
  std::filesystem::create_directories(directory);
  Manifest manifest;
  manifest.directory = directory;
  manifest.entries.push_back(write_manifest_entry(directory, "train.npy", data.train));
  manifest.entries.push_back(write_manifest_entry(directory, "reference.npy", data.reference));
  manifest.entries.push_back(write_manifest_entry(directory, "test.npy", data.test));
  save_manifest(directory / "manifest.json", manifest);
  return manifest;
}

struct ClassRemovalOptions {
  std::size_t k = kDefaultBaselineK;  // neighbour count for the k-NN baselines
  DistanceKind kind = DistanceKind::kEuclidean;
  double alpha_e = kDefaultAlphaE;
  bool with_vendi = true;
  SearchOptions search;
};

struct ClassRemovalRow {
  double kept_fraction = 0.0;
  std::size_t kept_classes = 0;
  std::size_t n_query = 0;
  std::int64_t n_learned = 0;
  double irs_alpha = 0.0;
  double irs_inf = 0.0;
  double irs_inf_lower = 0.0;
  double irs_inf_upper = 0.0;
  double reference_irs_inf = 0.0;
  double irs_adjusted = 0.0;
  double fid = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double density = 0.0;
  double coverage = 0.0;
  double vendi = 0.0;
};

/// For each kept fraction c, keeps the test rows of the first ceil(c * classes)
/// classes and scores them against the train split: adjusted IRS (reference
/// split as the real baseline) and every comparison metric.
inline std::vector<ClassRemovalRow> class_removal_experiment(const MixtureData& data, std::size_t n_classes,
                                                             std::span<const double> kept_fractions,
                                                             const ClassRemovalOptions& options = {}) {
  IrsOptions irs_options;
  irs_options.kind = options.kind;
  irs_options.alpha_e = options.alpha_e;
  irs_options.folds = 1;  // explicit held-out splits; no folding
  irs_options.search = options.search;

  const auto reference_retrieval = nearest_train(data.reference, data.train, options.kind, options.search);
  const auto reference = detail::report_from_retrieval(reference_retrieval, static_cast<std::int64_t>(data.train.n),
                                                       irs_options, 1);
  const auto real_moments = moments(data.train);

  std::vector<ClassRemovalRow> rows;
  for (const double c : kept_fractions) {
    detail::require(c > 0.0 && c <= 1.0, "kept fractions must lie in (0, 1]");
    const auto kept = static_cast<std::size_t>(std::ceil(c * static_cast<double>(n_classes) - 1e-9));
    std::vector<std::size_t> rows_kept;
    for (std::size_t i = 0; i < data.test.n; ++i) {
      if (data.test_labels[i] < kept) rows_kept.push_back(i);
    }
    detail::require(rows_kept.size() > options.k, "too few test rows kept at fraction " + std::to_string(c));
    FeatureSet query = data.test.subset(rows_kept);
    query.split = Split::kTest;

    const auto retrieval = nearest_train(query, data.train, options.kind, options.search);
    const auto report = detail::report_from_retrieval(retrieval, static_cast<std::int64_t>(data.train.n),
                                                      irs_options, 0);
    ClassRemovalRow row;
    row.kept_fraction = c;
    row.kept_classes = kept;
    row.n_query = query.n;
    row.n_learned = retrieval.n_learned;
    row.irs_alpha = report.irs_alpha;
    row.irs_inf = report.irs_inf;
    row.irs_inf_lower = report.irs_inf_lower;
    row.irs_inf_upper = report.irs_inf_upper;
    row.reference_irs_inf = reference.irs_inf;
    row.irs_adjusted = adjusted_irs(report, reference);
    row.fid = fid(real_moments, moments(query));
    const auto pr = precision_recall(data.train, query, options.k, options.kind, options.search);
    row.precision = pr.precision;
    row.recall = pr.recall;
    const auto dc = density_coverage(data.train, query, options.k, options.kind, options.search);
    row.density = dc.density;
    row.coverage = dc.coverage;
    row.vendi = options.with_vendi ? vendi(query) : 0.0;
    rows.push_back(row);
  }
  return rows;
}

inline std::vector<ClassRemovalRow> class_removal_experiment(const MixtureSpec& spec,
                                                             std::span<const double> kept_fractions,
                                                             const ClassRemovalOptions& options = {}) {
  return class_removal_experiment(make_mixture(spec), spec.n_classes, kept_fractions, options);
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Ordinary least squares y = slope * x + intercept.
inline LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
  detail::require(x.size() == y.size() && x.size() >= 2, "line fit needs two or more paired points");
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  detail::require(sxx > 0.0, "line fit needs distinct x values");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

}  // namespace irs
