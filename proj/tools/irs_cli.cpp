#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "irs/irs.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitReject = 3;
constexpr int kExitNumerical = 4;

struct Common {
  std::string manifest;
  std::string extractor;
  std::string distance = "euclidean";
  double alpha_e = irs::kDefaultAlphaE;
  int folds = 5;
  std::size_t k = irs::kDefaultBaselineK;
  std::size_t consensus_threshold = 0;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::size_t block_rows = 96;
  std::string out = "irs-out";
  std::string query_split = "auto";
};

struct CountsArgs {
  std::int64_t n_train = 0;
  std::int64_t n_sample = 0;
  std::int64_t n_learned = 0;
  std::int64_t reference_n_sample = 0;
  std::int64_t reference_n_learned = 0;
  bool no_reference = false;
};

struct RejectArgs {
  double target = 0.8;
  std::int64_t n_train = 0;
  std::int64_t n_sample = 0;
  std::string stream;
};

struct SimulateArgs {
  std::string experiment = "class-removal";
  std::vector<double> fractions{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::size_t classes = 10;
  std::size_t per_class = 200;
  std::size_t dim = 8;
  double separation = 10.0;
  std::int64_t n_train = 800;
  std::vector<std::int64_t> s_true{200, 400, 800};
  std::vector<double> alphas{0.1, 0.5, 1.0, 2.0};
  std::size_t trials = 1000;
  double target = 0.8;
  std::int64_t n_sample = 200;
  std::int64_t low_support = 400;
  bool no_vendi = false;
};

struct ConsensusArgs {
  std::vector<std::string> votes;
  std::vector<std::string> names;
  std::string label = "fixture";
};

struct BaselineArgs {
  std::string real_split = "train";
  std::size_t vendi_cap = irs::kDefaultVendiCap;
};

irs::SearchOptions search_options(const Common& c) { return {c.block_rows, c.threads}; }

irs::IrsOptions irs_options(const Common& c) {
  irs::IrsOptions o;
  o.kind = irs::parse_distance_kind(c.distance);
  o.alpha_e = c.alpha_e;
  o.folds = c.folds;
  o.seed = c.seed;
  o.search = search_options(c);
  return o;
}

class Run {
 public:
  Run(std::string command, const CLI::App& app, const Common& common) : command_(std::move(command)), common_(common) {
    config_ = app.config_to_str(true, false);
    digest_ = irs::sha256_hex(std::string_view(config_));
  }

  json metadata() const {
    return {{"tool", "irs"},        {"version", irs::kVersion}, {"command", command_},
            {"seed", common_.seed}, {"config_sha256", digest_}};
  }

  fs::path out_dir() const {
    fs::create_directories(common_.out);
    return common_.out;
  }

  void write_json(const std::string& name, json doc) const {
    doc["metadata"] = metadata();
    irs::save_json(out_dir() / name, doc);
  }

  void write_csv(const std::string& name, const irs::CsvTable& table) const {
    table.save(out_dir() / name);
    auto meta = metadata();
    meta["table"] = name;
    meta["config"] = config_;
    irs::save_json(out_dir() / (fs::path(name).stem().string() + ".meta.json"), meta);
  }

 private:
  std::string command_;
  const Common& common_;
  std::string config_;
  std::string digest_;
};

irs::Split query_split(const irs::Manifest& m, const Common& c) {
  if (c.query_split != "auto") return irs::parse_split(c.query_split);
  if (m.find(irs::Split::kSynthetic, c.extractor)) return irs::Split::kSynthetic;
  if (m.find(irs::Split::kTest, c.extractor)) return irs::Split::kTest;
  throw irs::InputError("missing split: synthetic (or test)");
}

irs::Manifest open_manifest(const Common& c) {
  irs::detail::require(!c.manifest.empty(), "--manifest is required");
  irs::detail::require(fs::exists(c.manifest), "manifest not found: " + c.manifest);
  return irs::load_manifest(c.manifest);
}

void print_report(const std::string& label, const irs::IrsReport& r) {
  const auto& o = r.observation;
  std::printf("%s: n_train %lld  n_sample %lld  n_learned %lld\n", label.c_str(), static_cast<long long>(o.n_train),
              static_cast<long long>(o.n_sample), static_cast<long long>(o.n_learned));
  std::printf("  irs_alpha     %.4f\n", r.irs_alpha);
  std::printf("  irs_inf       %.4f  [%.4f, %.4f] at alpha_e %.3g\n", r.irs_inf, r.irs_inf_lower, r.irs_inf_upper,
              r.alpha_e);
  if (r.irs_adjusted) std::printf("  irs_adjusted  %.4f\n", *r.irs_adjusted);
}

json report_doc(const irs::IrsReport& report, const std::optional<irs::IrsReport>& reference) {
  json doc = report;
  if (reference) doc["reference"] = *reference;
  return doc;
}

int cmd_irs_counts(const Run& run, const Common& c, const CountsArgs& a) {
  const irs::IrsObservation obs{a.n_train, a.n_sample, a.n_learned};
  auto report = irs::estimate_irs(obs, c.alpha_e);
  std::optional<irs::IrsReport> reference;
  if (a.reference_n_sample > 0 || a.reference_n_learned > 0) {
    reference = irs::estimate_irs({a.n_train, a.reference_n_sample, a.reference_n_learned}, c.alpha_e);
    report.irs_adjusted = irs::adjusted_irs(report, *reference);
    reference->irs_adjusted = 1.0;
  }
  print_report("query", report);
  if (reference) print_report("reference", *reference);
  run.write_json("report.json", report_doc(report, reference));
  return kExitOk;
}

int cmd_irs(const Run& run, const Common& c, const CountsArgs& a) {
  if (c.manifest.empty()) return cmd_irs_counts(run, c, a);
  const auto manifest = open_manifest(c);
  const auto train = manifest.load(manifest.require(irs::Split::kTrain, c.extractor));
  const auto query = manifest.load(manifest.require(query_split(manifest, c), c.extractor));
  std::optional<irs::FeatureSet> reference;
  if (!a.no_reference) {
    if (const auto* e = manifest.find(irs::Split::kReference, c.extractor)) reference = manifest.load(*e);
  }
  const auto m = irs::measure_irs_detailed(query, train, reference ? &*reference : nullptr, irs_options(c));
  print_report(irs::to_string(query.split), m.report);
  if (m.reference) print_report("reference", *m.reference);
  run.write_json("report.json", report_doc(m.report, m.reference));
  return kExitOk;
}

// Retrieves the query rows in order, in chunks, until the rejector decides.
irs::RejectionDecision reject_features(const irs::FeatureSet& query, const irs::FeatureSet& train,
                                       const irs::RejectionPlan& plan, const Common& c) {
  irs::EarlyRejector rejector(plan);
  const auto kind = irs::parse_distance_kind(c.distance);
  const std::size_t limit = std::min<std::size_t>(query.n, static_cast<std::size_t>(plan.n_sample));
  const std::size_t chunk = 4096;
  for (std::size_t begin = 0; begin < limit; begin += chunk) {
    std::vector<std::size_t> rows(std::min(chunk, limit - begin));
    std::iota(rows.begin(), rows.end(), begin);
    const auto r = irs::nearest_train(query.subset(rows), train, kind, search_options(c));
    bool done = false;
    for (const auto idx : r.nearest) {
      if ((done = rejector.push(idx))) break;
    }
    if (done) break;
  }
  return rejector.finish();
}

int cmd_reject(const Run& run, const Common& c, RejectArgs a) {
  std::optional<irs::FeatureSet> train, query;
  std::vector<std::int64_t> stream;
  if (!c.manifest.empty()) {
    const auto manifest = open_manifest(c);
    train = manifest.load(manifest.require(irs::Split::kTrain, c.extractor));
    query = manifest.load(manifest.require(query_split(manifest, c), c.extractor));
    if (a.n_train == 0) a.n_train = static_cast<std::int64_t>(train->n);
    irs::detail::require(a.n_train == static_cast<std::int64_t>(train->n), "--n-train disagrees with the train split");
    if (a.n_sample == 0) a.n_sample = static_cast<std::int64_t>(query->n);
  } else if (!a.stream.empty()) {
    stream = irs::load_indices(a.stream);
    if (a.n_sample == 0) a.n_sample = static_cast<std::int64_t>(stream.size());
  }
  irs::detail::require(a.n_train >= 1, "--n-train is required without a manifest");
  irs::detail::require(a.n_sample >= 1, "--n-sample is required without a stream");
  const auto plan = irs::rejection_threshold(a.target, a.n_train, a.n_sample, c.alpha_e);
  std::printf("k_min = %lld  (target %.4g, n_train %lld, n_sample %lld, alpha_e %.3g)\n",
              static_cast<long long>(plan.k_min), plan.irs_target, static_cast<long long>(plan.n_train),
              static_cast<long long>(plan.n_sample), plan.alpha_e);
  json doc = {{"plan", plan}};
  if (!query && a.stream.empty()) {
    run.write_json("reject.json", doc);
    return kExitOk;
  }
  const auto decision = query ? reject_features(*query, *train, plan, c) : irs::early_reject(stream, plan);
  std::printf("%s at index %lld with %lld distinct\n", irs::to_string(decision.verdict),
              static_cast<long long>(decision.index), static_cast<long long>(decision.distinct));
  doc["decision"] = decision;
  run.write_json("reject.json", doc);
  switch (decision.verdict) {
    case irs::Verdict::kPass: return kExitOk;
    case irs::Verdict::kReject: return kExitReject;
    default: return kExitInput;
  }
}

int cmd_simulate(const Run& run, const Common& c, const SimulateArgs& a) {
  if (a.experiment == "class-removal" || a.experiment == "export-mixture") {
    irs::MixtureSpec spec;
    spec.n_classes = a.classes;
    spec.train_per_class = spec.reference_per_class = spec.test_per_class = a.per_class;
    spec.d = a.dim;
    spec.separation = a.separation;
    spec.seed = c.seed;
    const auto data = irs::make_mixture(spec);
    if (a.experiment == "export-mixture") {
      const auto m = irs::export_mixture(run.out_dir(), data);
      std::printf("wrote %zu entries to %s\n", m.entries.size(), (run.out_dir() / "manifest.json").c_str());
      return kExitOk;
    }
    irs::ClassRemovalOptions options;
    options.k = c.k;
    options.kind = irs::parse_distance_kind(c.distance);
    options.alpha_e = c.alpha_e;
    options.with_vendi = !a.no_vendi;
    options.search = search_options(c);
    const auto rows = irs::class_removal_experiment(data, spec.n_classes, a.fractions, options);
    const auto table = irs::class_removal_csv(rows);
    run.write_csv("class_removal.csv", table);
    run.write_csv("class_removal_long.csv", irs::class_removal_long_csv(rows));
    std::vector<double> x, y;
    for (const auto& r : rows) {
      x.push_back(r.kept_fraction);
      y.push_back(r.irs_adjusted);
    }
    std::fputs(table.str().c_str(), stdout);
    if (rows.size() >= 2) {
      const auto fit = irs::fit_line(x, y);
      std::printf("adjusted IRS vs kept fraction: slope %.4f  intercept %.4f  R^2 %.4f\n", fit.slope, fit.intercept,
                  fit.r_squared);
    }
    return kExitOk;
  }
  if (a.experiment == "calibration") {
    irs::CsvTable all({"n_train", "s_true", "alpha", "n_sample", "trials", "coverage", "mean_mle", "mean_abs_error",
                       "mean_width"});
    for (const auto s : a.s_true) {
      const irs::UrnModel model{a.n_train, s, irs::derive_seed(c.seed, static_cast<std::uint64_t>(s))};
      const auto rows = irs::calibration_experiment(model, a.alphas, a.trials, c.alpha_e, c.threads);
      for (const auto& r : rows) {
        all.add(a.n_train, s, r.alpha, r.n_sample, r.trials, r.coverage, r.mean_mle, r.mean_abs_error, r.mean_width);
      }
    }
    run.write_csv("calibration.csv", all);
    std::fputs(all.str().c_str(), stdout);
    return kExitOk;
  }
  if (a.experiment == "rejection") {
    const auto plan = irs::rejection_threshold(a.target, a.n_train, a.n_sample, c.alpha_e);
    const irs::UrnModel low{a.n_train, a.low_support, irs::derive_seed(c.seed, 1)};
    const irs::UrnModel high{a.n_train, a.n_train, irs::derive_seed(c.seed, 2)};
    const auto stats = irs::rejection_experiment(low, high, plan, a.trials, c.threads);
    json doc = {{"plan", plan},
                {"low_s_true", low.s_true},
                {"high_s_true", high.s_true},
                {"trials", stats.trials},
                {"low_reject_rate", stats.low_reject_rate},
                {"low_mean_decision_index", stats.low_mean_decision_index},
                {"high_pass_rate", stats.high_pass_rate},
                {"high_mean_decision_index", stats.high_mean_decision_index}};
    std::printf("k_min %lld; low model rejected %.3f (mean index %.1f); high model passed %.3f\n",
                static_cast<long long>(plan.k_min), stats.low_reject_rate, stats.low_mean_decision_index,
                stats.high_pass_rate);
    run.write_json("rejection.json", doc);
    return kExitOk;
  }
  throw irs::InputError("unknown experiment '" + a.experiment +
                        "' (expected class-removal, calibration, rejection or export-mixture)");
}

int cmd_consensus(const Run& run, const Common& c, const ConsensusArgs& a) {
  irs::VoteTable table;
  if (!a.votes.empty()) {
    irs::detail::require(a.names.empty() || a.names.size() == a.votes.size(), "--names must match --votes");
    for (std::size_t i = 0; i < a.votes.size(); ++i) {
      table.add_column(a.names.empty() ? fs::path(a.votes[i]).stem().string() : a.names[i],
                       irs::load_indices(a.votes[i]));
    }
  } else {
    const auto manifest = open_manifest(c);
    const auto kind = irs::parse_distance_kind(c.distance);
    for (const auto& name : manifest.extractors()) {
      Common per = c;
      per.extractor = name;
      const auto train = manifest.load(manifest.require(irs::Split::kTrain, name));
      const auto query = manifest.load(manifest.require(query_split(manifest, per), name));
      table.add_column(name, irs::nearest_train(query, train, kind, search_options(c)));
    }
  }
  const std::size_t threshold =
      c.consensus_threshold ? c.consensus_threshold : std::min(irs::kDefaultConsensusThreshold, table.n_extractors());
  const auto result = irs::build_consensus(table, threshold);
  const auto& names = table.extractor_names();
  std::printf("consensus on %zu of %zu queries (threshold %zu)\n", result.n_consensus, table.n_query(), threshold);
  std::vector<std::string> header{"dataset"};
  header.insert(header.end(), names.begin(), names.end());
  irs::CsvTable agreement(header);
  std::vector<std::string> row{a.label};
  for (std::size_t e = 0; e < names.size(); ++e) {
    std::printf("  %-24s %.4f\n", names[e].c_str(), result.agreement[e]);
    row.push_back(irs::CsvTable::format(result.agreement[e]));
  }
  std::ostringstream line;
  for (std::size_t i = 0; i < row.size(); ++i) line << (i ? "," : "") << row[i];
  auto doc = irs::consensus_json(result, names);
  doc["histogram"] = irs::consensus_histogram(table);
  run.write_json("consensus.json", doc);
  // One row per dataset label, one column per extractor.
  std::ofstream csv(run.out_dir() / "agreement.csv", std::ios::trunc);
  csv << agreement.str() << line.str() << '\n';
  return kExitOk;
}

int cmd_baselines(const Run& run, const Common& c, const BaselineArgs& a) {
  const auto manifest = open_manifest(c);
  const auto real_split = irs::parse_split(a.real_split);
  const auto real = manifest.load(manifest.require(real_split, c.extractor));
  const auto gen = manifest.load(manifest.require(query_split(manifest, c), c.extractor));
  const auto kind = irs::parse_distance_kind(c.distance);
  const auto options = search_options(c);
  const double fid = irs::fid(irs::moments(real), irs::moments(gen));
  const auto pr = irs::precision_recall(real, gen, c.k, kind, options);
  const auto dc = irs::density_coverage(real, gen, c.k, kind, options);
  const auto vendi_input = irs::subsample(gen, a.vendi_cap, irs::derive_seed(c.seed, 7));
  const double vendi = irs::vendi(vendi_input, a.vendi_cap);
  json doc = {{"k", c.k}, {"distance", c.distance}, {"fid", fid}, {"precision", pr.precision},
              {"recall", pr.recall}, {"density", dc.density}, {"coverage", dc.coverage}, {"vendi", vendi},
              {"vendi_rows", vendi_input.n}};
  std::printf("fid %.6g  precision %.4f  recall %.4f  density %.4f  coverage %.4f  vendi %.4f\n", fid, pr.precision,
              pr.recall, dc.density, dc.coverage, vendi);
  if (real_split == irs::Split::kTrain) {
    const auto* ref_entry = manifest.find(irs::Split::kReference, c.extractor);
    std::optional<irs::FeatureSet> reference;
    if (ref_entry) reference = manifest.load(*ref_entry);
    const auto m = irs::measure_irs_detailed(gen, real, reference ? &*reference : nullptr, irs_options(c));
    doc["irs"] = report_doc(m.report, m.reference);
    print_report(irs::to_string(gen.split), m.report);
  }
  run.write_json("baselines.json", doc);
  return kExitOk;
}

void add_common(CLI::App* sub, Common& c, bool features) {
  sub->add_option("--manifest", c.manifest, "JSON manifest of feature files");
  sub->add_option("--alpha-e", c.alpha_e, "Error probability per bound")->check(CLI::Range(1e-9, 0.5));
  sub->add_option("--seed", c.seed, "Random seed");
  sub->add_option("--threads", c.threads, "Worker threads (0 = all cores)");
  sub->add_option("--out", c.out, "Output directory");
  if (!features) return;
  sub->add_option("--extractor", c.extractor, "Extractor name when the manifest holds several");
  sub->add_option("--distance", c.distance, "Distance")->check(CLI::IsMember({"euclidean", "cosine"}));
  sub->add_option("--block-rows", c.block_rows, "Query rows per retrieval work unit")->check(CLI::PositiveNumber);
  sub->add_option("--query-split", c.query_split, "Query split (auto = synthetic, else test)")
      ->check(CLI::IsMember({"auto", "synthetic", "test", "reference", "train"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Image Retrieval Score: training-set diversity of generative models"};
  app.set_version_flag("--version", std::string(irs::kVersion));
  app.set_config("--config", "", "TOML config file; flags override its keys");
  app.require_subcommand(1);

  Common common;
  CountsArgs counts;
  RejectArgs reject;
  SimulateArgs simulate;
  ConsensusArgs consensus;
  BaselineArgs baselines;

  auto* irs_cmd = app.add_subcommand("irs", "IRS report from a manifest, or from counts alone");
  add_common(irs_cmd, common, true);
  irs_cmd->add_option("--folds", common.folds, "Query folds when the train set is small")->check(CLI::Range(1, 1000));
  irs_cmd->add_option("--n-train", counts.n_train, "Counts mode: training set size");
  irs_cmd->add_option("--n-sample", counts.n_sample, "Counts mode: number of queries");
  irs_cmd->add_option("--n-learned", counts.n_learned, "Counts mode: distinct retrieved training items");
  irs_cmd->add_option("--reference-n-sample", counts.reference_n_sample, "Counts mode: reference queries");
  irs_cmd->add_option("--reference-n-learned", counts.reference_n_learned, "Counts mode: reference distinct count");
  irs_cmd->add_flag("--no-reference", counts.no_reference, "Ignore a reference split in the manifest");

  auto* reject_cmd = app.add_subcommand("reject", "Rejection threshold and early decision on a stream");
  add_common(reject_cmd, common, true);
  reject_cmd->add_option("--target", reject.target, "Target IRS")->check(CLI::Range(1e-12, 1.0));
  reject_cmd->add_option("--n-train", reject.n_train, "Training set size");
  reject_cmd->add_option("--n-sample", reject.n_sample, "Planned stream length");
  reject_cmd->add_option("--stream", reject.stream, "Retrieved indices (.npy or one integer per line)");

  auto* sim_cmd = app.add_subcommand("simulate", "Ground-truth experiments");
  add_common(sim_cmd, common, false);
  sim_cmd->add_option("--experiment", simulate.experiment, "class-removal, calibration, rejection, export-mixture");
  sim_cmd->add_option("--distance", common.distance, "Distance")->check(CLI::IsMember({"euclidean", "cosine"}));
  sim_cmd->add_option("--k", common.k, "Neighbour count for k-NN baselines")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--fractions", simulate.fractions, "Kept class fractions");
  sim_cmd->add_option("--classes", simulate.classes, "Mixture classes");
  sim_cmd->add_option("--per-class", simulate.per_class, "Rows per class in each split");
  sim_cmd->add_option("--dim", simulate.dim, "Feature dimension");
  sim_cmd->add_option("--separation", simulate.separation, "Minimum class centre distance");
  sim_cmd->add_option("--n-train", simulate.n_train, "Urn size");
  sim_cmd->add_option("--s-true", simulate.s_true, "True supports for calibration");
  sim_cmd->add_option("--alphas", simulate.alphas, "Sampling ratios for calibration");
  sim_cmd->add_option("--trials", simulate.trials, "Monte-Carlo trials");
  sim_cmd->add_option("--target", simulate.target, "Rejection target IRS");
  sim_cmd->add_option("--n-sample", simulate.n_sample, "Rejection stream length");
  sim_cmd->add_option("--low-support", simulate.low_support, "True support of the low-diversity model");
  sim_cmd->add_flag("--no-vendi", simulate.no_vendi, "Skip the Vendi score");

  auto* cons_cmd = app.add_subcommand("consensus", "Extractor agreement on retrieved indices");
  add_common(cons_cmd, common, true);
  cons_cmd->add_option("--consensus-threshold", common.consensus_threshold,
                       "Votes needed for consensus (default min(5, extractors))");
  cons_cmd->add_option("--votes", consensus.votes, "Per-extractor retrieved index files");
  cons_cmd->add_option("--names", consensus.names, "Extractor names for --votes");
  cons_cmd->add_option("--label", consensus.label, "Row label in agreement.csv");

  auto* base_cmd = app.add_subcommand("baselines", "FID, precision/recall, density/coverage, Vendi");
  add_common(base_cmd, common, true);
  base_cmd->add_option("--k", common.k, "Neighbour count")->check(CLI::PositiveNumber);
  base_cmd->add_option("--folds", common.folds, "Query folds for the accompanying IRS report");
  base_cmd->add_option("--real-split", baselines.real_split, "Split used as the real set");
  base_cmd->add_option("--vendi-cap", baselines.vendi_cap, "Rows used for the Vendi score");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    auto* sub = app.get_subcommands().front();
    const Run run(sub->get_name(), app, common);
    if (sub == irs_cmd) return cmd_irs(run, common, counts);
    if (sub == reject_cmd) return cmd_reject(run, common, reject);
    if (sub == sim_cmd) return cmd_simulate(run, common, simulate);
    if (sub == cons_cmd) return cmd_consensus(run, common, consensus);
    return cmd_baselines(run, common, baselines);
  } catch (const irs::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const irs::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return kExitNumerical;
  }
}
