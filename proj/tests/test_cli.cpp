#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "irs/irs.hpp"
#include "oracles.hpp"

using namespace irs;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string command = std::string(IRS_CLI_PATH) + " " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(command.c_str(), "r");
  if (!pipe) return r;
  char buffer[4096];
  while (const auto n = std::fread(buffer, 1, sizeof(buffer), pipe)) r.out.append(buffer, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("irs_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Manifest with a train split and, optionally, a synthetic split that is a
  // reversed copy of it.
  fs::path copy_manifest(bool with_train = true) {
    const auto train = oracle::gaussian(120, 6, 3);
    std::vector<std::size_t> rows(train.n);
    std::iota(rows.rbegin(), rows.rend(), 0);
    auto synthetic = train.subset(rows);
    synthetic.split = Split::kSynthetic;
    Manifest m;
    m.directory = dir_;
    if (with_train) m.entries.push_back(write_manifest_entry(dir_, "train.npy", train));
    m.entries.push_back(write_manifest_entry(dir_, "synthetic.npy", synthetic));
    save_manifest(dir_ / "manifest.json", m);
    return dir_ / "manifest.json";
  }

  std::string out(const std::string& name = "out") const { return " --out " + (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, CopyOfTrainScoresOne) {
  const auto manifest = copy_manifest();
  const auto r = run("irs --manifest " + manifest.string() + " --folds 1" + out());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("irs_alpha     1.0000"), std::string::npos) << r.out;
  const auto doc = read_json(dir_ / "out" / "report.json");
  EXPECT_EQ(doc["irs_alpha"].get<double>(), 1.0);
  EXPECT_EQ(doc["metadata"]["command"], "irs");
  EXPECT_EQ(doc["metadata"]["version"], kVersion);
  EXPECT_EQ(doc["metadata"]["config_sha256"].get<std::string>().size(), 64u);
}

TEST_F(Cli, MissingTrainSplit) {
  const auto manifest = copy_manifest(false);
  const auto r = run("irs --manifest " + manifest.string() + out());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("missing split: train"), std::string::npos) << r.out;
}

TEST_F(Cli, BadArgumentsAreInputErrors) {
  EXPECT_EQ(run("irs --manifest " + (dir_ / "nope.json").string() + out()).code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("irs --n-train 10 --n-sample 5 --n-learned 11" + out()).code, 2);
  EXPECT_EQ(run("simulate --experiment nothing" + out()).code, 2);
}

TEST_F(Cli, CountsMode) {
  const auto r = run("irs --n-train 800 --n-sample 800 --n-learned 510" + out());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto doc = read_json(dir_ / "out" / "report.json");
  EXPECT_NEAR(doc["irs_alpha"].get<double>(), 510.0 / 800.0, 1e-12);
  EXPECT_LE(doc["irs_inf_lower"].get<double>(), doc["irs_inf"].get<double>());
  EXPECT_TRUE(doc["irs_adjusted"].is_null());
}

TEST_F(Cli, RejectPlanOnly) {
  const auto r = run("reject --target 0.8 --n-train 800 --n-sample 200" + out());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto plan = rejection_threshold(0.8, 800, 200);
  EXPECT_NE(r.out.find("k_min = " + std::to_string(plan.k_min)), std::string::npos) << r.out;
  EXPECT_EQ(read_json(dir_ / "out" / "reject.json")["plan"]["k_min"], plan.k_min);
}

TEST_F(Cli, RejectConstantStream) {
  const std::vector<std::int64_t> constant(1000, 7);
  write_index_npy(dir_ / "stream.npy", constant);
  const auto r = run("reject --target 0.8 --n-train 1000 --stream " + (dir_ / "stream.npy").string() + out());
  EXPECT_EQ(r.code, 3) << r.out;
  EXPECT_NE(r.out.find("REJECT"), std::string::npos);
  EXPECT_EQ(read_json(dir_ / "out" / "reject.json")["decision"]["verdict"], "REJECT");
}

TEST_F(Cli, RejectAllDistinctStream) {
  std::vector<std::int64_t> distinct(1000);
  std::iota(distinct.begin(), distinct.end(), 0);
  write_index_npy(dir_ / "stream.npy", distinct);
  const auto r = run("reject --target 0.8 --n-train 1000 --stream " + (dir_ / "stream.npy").string() + out());
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("PASS at index 999"), std::string::npos) << r.out;
}

TEST_F(Cli, RejectFromManifest) {
  const auto manifest = copy_manifest();
  const auto r = run("reject --target 0.9 --manifest " + manifest.string() + out());
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("PASS"), std::string::npos);
}

TEST_F(Cli, SimulateClassRemovalCsv) {
  const auto r =
      run("simulate --experiment class-removal --per-class 30 --fractions 0.5 1.0 --no-vendi --seed 1" + out());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto csv = slurp(dir_ / "out" / "class_removal.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  const auto meta = read_json(dir_ / "out" / "class_removal.meta.json");
  EXPECT_EQ(meta["seed"], 1);
  EXPECT_EQ(meta["command"], "simulate");
}

TEST_F(Cli, SimulateCalibrationAndRejection) {
  auto r = run("simulate --experiment calibration --n-train 100 --s-true 50 --alphas 0.5 1 --trials 100" + out());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto csv = slurp(dir_ / "out" / "calibration.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  r = run("simulate --experiment rejection --trials 200" + out());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto doc = read_json(dir_ / "out" / "rejection.json");
  EXPECT_GT(doc["low_reject_rate"].get<double>(), 0.85);
  EXPECT_GT(doc["high_pass_rate"].get<double>(), 0.9);
}

TEST_F(Cli, ConsensusOnIdenticalVotes) {
  const std::vector<std::int64_t> votes{4, 8, 15, 16, 23, 42};
  std::string files;
  for (const char* name : {"a.npy", "b.npy", "c.npy"}) {
    write_index_npy(dir_ / name, votes);
    files += " " + (dir_ / name).string();
  }
  const auto r = run("consensus --votes" + files + out());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto doc = read_json(dir_ / "out" / "consensus.json");
  EXPECT_EQ(doc["threshold"], 3);
  EXPECT_EQ(doc["n_consensus"], 6);
  for (const auto& [name, value] : doc["agreement"].items()) EXPECT_EQ(value.get<double>(), 1.0) << name;
  const auto csv = slurp(dir_ / "out" / "agreement.csv");
  EXPECT_EQ(csv, "dataset,a,b,c\nfixture,1,1,1\n");
}

TEST_F(Cli, BaselinesAgainstItself) {
  const auto train = oracle::gaussian(100, 5, 9);
  auto synthetic = train;
  synthetic.split = Split::kSynthetic;
  Manifest m;
  m.directory = dir_;
  m.entries.push_back(write_manifest_entry(dir_, "train.npy", train));
  m.entries.push_back(write_manifest_entry(dir_, "synthetic.npy", synthetic));
  save_manifest(dir_ / "manifest.json", m);
  const auto r = run("baselines --folds 1 --manifest " + (dir_ / "manifest.json").string() + out());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto doc = read_json(dir_ / "out" / "baselines.json");
  EXPECT_EQ(doc["precision"].get<double>(), 1.0);
  EXPECT_EQ(doc["recall"].get<double>(), 1.0);
  EXPECT_EQ(doc["coverage"].get<double>(), 1.0);
  EXPECT_NEAR(doc["fid"].get<double>(), 0.0, 1e-6);
  EXPECT_EQ(doc["irs"]["irs_alpha"].get<double>(), 1.0);
}

TEST_F(Cli, RerunsAreByteIdentical) {
  const auto manifest = copy_manifest();
  const std::string args = "irs --seed 5 --manifest " + manifest.string() + out();
  ASSERT_EQ(run(args).code, 0);
  const auto first = slurp(dir_ / "out" / "report.json");
  ASSERT_EQ(run(args).code, 0);
  EXPECT_EQ(slurp(dir_ / "out" / "report.json"), first);
}

TEST_F(Cli, ConfigFileSuppliesOptions) {
  std::ofstream(dir_ / "run.toml") << "[irs]\nn-train = 800\nn-sample = 800\nn-learned = 400\n";
  const auto r = run("--config " + (dir_ / "run.toml").string() + " irs" + out());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NEAR(read_json(dir_ / "out" / "report.json")["irs_alpha"].get<double>(), 0.5, 1e-12);
}
