#pragma once

// JSON and CSV serialization of reports and experiment tables.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "irs/baselines.hpp"
#include "irs/consensus.hpp"
#include "irs/errors.hpp"
#include "irs/estimator.hpp"
#include "irs/simulator.hpp"

namespace irs {

inline void to_json(nlohmann::json& j, const IrsObservation& o) {
  j = {{"n_train", o.n_train}, {"n_sample", o.n_sample}, {"n_learned", o.n_learned}};
}

inline void to_json(nlohmann::json& j, const IrsReport& r) {
  j = {{"observation", r.observation},     {"irs_alpha", r.irs_alpha},
       {"irs_inf", r.irs_inf},             {"irs_inf_lower", r.irs_inf_lower},
       {"irs_inf_upper", r.irs_inf_upper}, {"alpha_e", r.alpha_e},
       {"folds", r.folds}};
  j["irs_adjusted"] = r.irs_adjusted ? nlohmann::json(*r.irs_adjusted) : nlohmann::json(nullptr);
}

inline IrsReport report_from_json(const nlohmann::json& j) {
  try {
    IrsReport r;
    const auto& o = j.at("observation");
    r.observation = {o.at("n_train").get<std::int64_t>(), o.at("n_sample").get<std::int64_t>(),
                     o.at("n_learned").get<std::int64_t>()};
    r.irs_alpha = j.at("irs_alpha").get<double>();
    r.irs_inf = j.at("irs_inf").get<double>();
    r.irs_inf_lower = j.at("irs_inf_lower").get<double>();
    r.irs_inf_upper = j.at("irs_inf_upper").get<double>();
    r.alpha_e = j.at("alpha_e").get<double>();
    r.folds = j.value("folds", 1);
    if (j.contains("irs_adjusted") && !j["irs_adjusted"].is_null()) r.irs_adjusted = j["irs_adjusted"].get<double>();
    return r;
  } catch (const nlohmann::json::exception& ex) {
    throw InputError(std::string("malformed IRS report: ") + ex.what());
  }
}

inline void to_json(nlohmann::json& j, const RejectionPlan& p) {
  j = {{"irs_target", p.irs_target}, {"alpha_e", p.alpha_e}, {"n_train", p.n_train},
       {"n_sample", p.n_sample},     {"k_min", p.k_min}};
}

inline void to_json(nlohmann::json& j, const RejectionDecision& d) {
  j = {{"verdict", to_string(d.verdict)}, {"index", d.index}, {"distinct", d.distinct}};
}

inline nlohmann::json consensus_json(const ConsensusResult& c, const std::vector<std::string>& extractors) {
  nlohmann::json agreement = nlohmann::json::object();
  for (std::size_t e = 0; e < extractors.size(); ++e) agreement[extractors[e]] = c.agreement[e];
  nlohmann::json assignment = nlohmann::json::array();
  for (const auto& a : c.assignment) assignment.push_back(a ? nlohmann::json(*a) : nlohmann::json(nullptr));
  return {{"threshold", c.threshold},
          {"n_query", c.assignment.size()},
          {"n_consensus", c.n_consensus},
          {"agreement", agreement},
          {"assignment", assignment}};
}

inline void to_json(nlohmann::json& j, const PrecisionRecall& pr) {
  j = {{"precision", pr.precision}, {"recall", pr.recall}};
}

inline void to_json(nlohmann::json& j, const DensityCoverage& dc) {
  j = {{"density", dc.density}, {"coverage", dc.coverage}};
}

/// Minimal CSV table: a header and rows of preformatted cells.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  template <typename... Cells>
  void add(const Cells&... cells) {
    std::vector<std::string> row{format(cells)...};
    detail::require(row.size() == header_.size(), "CSV row width does not match header");
    rows_.push_back(std::move(row));
  }

  std::size_t size() const { return rows_.size(); }

  std::string str() const {
    std::ostringstream out;
    write_row(out, header_);
    for (const auto& r : rows_) write_row(out, r);
    return out.str();
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    detail::require(static_cast<bool>(out), "cannot write " + path.string());
    out << str();
  }

  static std::string format(const std::string& s) { return s; }
  static std::string format(const char* s) { return s; }
  static std::string format(double v) {
    std::ostringstream o;
    o << std::setprecision(10) << v;
    return o.str();
  }
  template <typename Int>
    requires std::is_integral_v<Int>
  static std::string format(Int v) {
    return std::to_string(v);
  }

 private:
  static void write_row(std::ostream& out, const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      const bool quote = row[i].find_first_of(",\"\n") != std::string::npos;
      if (!quote) {
        out << row[i];
        continue;
      }
      out << '"';
      for (const char c : row[i]) out << (c == '"' ? "\"\"" : std::string(1, c));
      out << '"';
    }
    out << '\n';
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

inline CsvTable class_removal_csv(const std::vector<ClassRemovalRow>& rows) {
  CsvTable t({"kept_fraction", "kept_classes", "n_query", "n_learned", "irs_alpha", "irs_inf", "irs_inf_lower",
              "irs_inf_upper", "reference_irs_inf", "irs_adjusted", "fid", "precision", "recall", "density",
              "coverage", "vendi"});
  for (const auto& r : rows) {
    t.add(r.kept_fraction, r.kept_classes, r.n_query, r.n_learned, r.irs_alpha, r.irs_inf, r.irs_inf_lower,
          r.irs_inf_upper, r.reference_irs_inf, r.irs_adjusted, r.fid, r.precision, r.recall, r.density, r.coverage,
          r.vendi);
  }
  return t;
}

/// Long format: one (kept_fraction, metric, value) row per cell, for plotting.
inline CsvTable class_removal_long_csv(const std::vector<ClassRemovalRow>& rows) {
  CsvTable t({"kept_fraction", "metric", "value"});
  for (const auto& r : rows) {
    t.add(r.kept_fraction, "irs_adjusted", r.irs_adjusted);
    t.add(r.kept_fraction, "irs_inf", r.irs_inf);
    t.add(r.kept_fraction, "fid", r.fid);
    t.add(r.kept_fraction, "precision", r.precision);
    t.add(r.kept_fraction, "recall", r.recall);
    t.add(r.kept_fraction, "density", r.density);
    t.add(r.kept_fraction, "coverage", r.coverage);
    t.add(r.kept_fraction, "vendi", r.vendi);
  }
  return t;
}

inline CsvTable calibration_csv(std::int64_t n_train, std::int64_t s_true, const std::vector<CalibrationRow>& rows) {
  CsvTable t({"n_train", "s_true", "alpha", "n_sample", "trials", "coverage", "mean_mle", "mean_abs_error",
              "mean_width"});
  for (const auto& r : rows) {
    t.add(n_train, s_true, r.alpha, r.n_sample, r.trials, r.coverage, r.mean_mle, r.mean_abs_error, r.mean_width);
  }
  return t;
}

inline void save_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  std::ofstream out(path, std::ios::trunc);
  detail::require(static_cast<bool>(out), "cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

}  // namespace irs
