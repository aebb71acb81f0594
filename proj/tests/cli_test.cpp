#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "nevae/cli.h"
#include "nevae/molgraph.h"

namespace nevae {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CliResult {
  int code = -1;
  std::string output;
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(NEVAE_CLI_PATH) + " " + args + " 2>&1";
  CliResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  std::array<char, 512> buf{};
  while (fgets(buf.data(), buf.size(), pipe)) r.output += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string s; std::getline(in, s);) out.push_back(s);
  return out;
}

std::string column_prefix(const std::string& line, int columns) {
  std::size_t pos = 0;
  for (int i = 0; i < columns && pos != std::string::npos; ++i) pos = line.find(',', pos + 1);
  return line.substr(0, pos);
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::path(::testing::TempDir()) / ("nevae_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
    ASSERT_EQ(run_cli("gen-corpus --count 20 --seed 1 --out-dir " + dir_.string()).code, 0);
    ASSERT_EQ(run_cli("train --corpus " + corpus() + " --seed 3 --iters 50 --out-dir " + (dir_ / "t1").string()).code,
              0);
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }
  static std::string corpus() { return (dir_ / "corpus.jsonl").string(); }
  static std::string ckpt() { return (dir_ / "t1" / "model.ckpt").string(); }
  static std::string model_args() { return "--checkpoint " + ckpt() + " --corpus " + corpus(); }
  static inline fs::path dir_;
};

TEST_F(Cli, TrainWritesCheckpointAndLog) {
  EXPECT_TRUE(fs::exists(ckpt()));
  const auto log = lines(dir_ / "t1" / "elbo_log.csv");
  ASSERT_EQ(log.size(), 51u);
  EXPECT_EQ(log[0], "iteration,mean_elbo,seconds");
}

TEST_F(Cli, TrainRerunGivesIdenticalLog) {
  ASSERT_EQ(run_cli("train --corpus " + corpus() + " --seed 3 --iters 50 --out-dir " + (dir_ / "t2").string()).code, 0);
  const auto a = lines(dir_ / "t1" / "elbo_log.csv"), b = lines(dir_ / "t2" / "elbo_log.csv");
  ASSERT_EQ(a.size(), b.size());
  // Wall time is the only column allowed to differ.
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(column_prefix(a[i], 2), column_prefix(b[i], 2));
}

TEST_F(Cli, UsageAndInputErrorsExitTwo) {
  const CliResult missing = run_cli("train --corpus /no/such/corpus.jsonl --seed 1 --out-dir " + dir_.string());
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.output.find("/no/such/corpus.jsonl"), std::string::npos);
  EXPECT_EQ(run_cli("train --corpus " + corpus() + " --out-dir " + dir_.string()).code, 2);  // no seed
  EXPECT_EQ(run_cli("train --no-such-flag").code, 2);
  EXPECT_EQ(run_cli("").code, 2);
  EXPECT_EQ(run_cli("sample " + model_args() + " --seed 1 --count 0 --out-dir " + dir_.string()).code, 2);
  EXPECT_EQ(run_cli("sample " + model_args() + " --seed 1 --mode posterior:999 --out-dir " + dir_.string()).code, 2);
  EXPECT_EQ(run_cli("sample --checkpoint /no/ckpt --corpus " + corpus() + " --seed 1").code, 2);
  EXPECT_EQ(run_cli("train --corpus " + corpus() + " --seed 1 --mask bogus --out-dir " + dir_.string()).code, 2);
  EXPECT_EQ(run_cli("synth --experiment nope --out-dir " + dir_.string()).code, 2);
  EXPECT_EQ(run_cli("--help").code, 0);
}

TEST_F(Cli, RuntimeFailureExitsOne) {
  const CliResult r = run_cli("train --corpus " + corpus() + " --seed 3 --iters 5 --lr 1e200 --out-dir " +
                        (dir_ / "nan").string());
  EXPECT_EQ(r.code, 1) << r.output;
}

TEST_F(Cli, MaskedPriorSamplingIsValid) {
  const fs::path out = dir_ / "prior";
  ASSERT_EQ(run_cli("sample " + model_args() + " --seed 4 --count 300 --mask valence --out-dir " + out.string()).code, 0);
  const json m = read_json(out / "metrics.json");
  EXPECT_EQ(m["valence_validity"].get<double>(), 1.0);
  EXPECT_EQ(m["n_samples"].get<int>(), 300);
  EXPECT_EQ(lines(out / "samples.jsonl").size(), 300u);
  EXPECT_TRUE(m.contains("metadata"));
}

TEST_F(Cli, PosteriorSamplingReturnsRequestedCount) {
  const fs::path out = dir_ / "post";
  ASSERT_EQ(run_cli("sample " + model_args() + " --seed 4 --count 7 --mode posterior:3 --out-dir " + out.string()).code,
            0);
  const auto got = lines(out / "samples.jsonl");
  ASSERT_EQ(got.size(), 7u);
  for (const auto& l : got) EXPECT_NO_THROW(parse_molecule(l));
}

TEST_F(Cli, InterpolateWritesStepsInOrder) {
  const auto mols = read_corpus_file(corpus());
  std::size_t a = 0, b = 0;
  for (std::size_t i = 0; i < mols.size() && !b; ++i)
    for (std::size_t j = i + 1; j < mols.size(); ++j)
      if (mols[i].size() == mols[j].size()) {
        a = i, b = j;
        break;
      }
  ASSERT_NE(b, 0u);
  const fs::path out = dir_ / "interp";
  ASSERT_EQ(run_cli("interpolate " + model_args() + " --seed 2 --from " + std::to_string(a) + " --to " +
                    std::to_string(b) + " --steps 5 --out-dir " + out.string())
                .code,
            0);
  EXPECT_EQ(lines(out / "interpolate.jsonl").size(), 5u);
  const json j = read_json(out / "interpolate.json");
  ASSERT_EQ(j["steps"].size(), 5u);
  EXPECT_EQ(j["steps"][0]["a"].get<double>(), 1.0);
  EXPECT_EQ(j["steps"][4]["a"].get<double>(), 0.0);
  for (int i = 0; i < 5; ++i) EXPECT_TRUE(fs::exists(out / ("interpolate_0" + std::to_string(i) + ".dot")));
  // Unequal sizes are an input error.
  std::size_t c = 0;
  while (mols[c].size() == mols[a].size()) ++c;
  EXPECT_EQ(run_cli("interpolate " + model_args() + " --from " + std::to_string(a) + " --to " + std::to_string(c) +
                    " --out-dir " + out.string())
                .code,
            2);
}

TEST_F(Cli, ZeroAmplitudeIsTheUnperturbedDecode) {
  const fs::path out = dir_ / "perturb";
  ASSERT_EQ(run_cli("perturb " + model_args() + " --seed 6 --molecule 2 --node 0 --amplitudes 0,0,5 --out-dir " +
                    out.string())
                .code,
            0);
  const auto got = lines(out / "perturb.jsonl");
  ASSERT_EQ(got.size(), 3u);
  EXPECT_EQ(got[0], got[1]);
  EXPECT_EQ(run_cli("perturb " + model_args() + " --molecule 2 --node 99 --out-dir " + out.string()).code, 2);
}

TEST_F(Cli, SynthTriangleFreeIsValid) {
  const fs::path out = dir_ / "tf";
  ASSERT_EQ(run_cli("synth --experiment triangle_free --seed 1 --count 10 --iters 20 --samples 200 --out-dir " +
                    out.string())
                .code,
            0);
  EXPECT_EQ(read_json(out / "synth_triangle_free.json")["validity"].get<double>(), 1.0);
}

TEST_F(Cli, SynthRankingReportsBoundedMetrics) {
  const fs::path out = dir_ / "ba";
  ASSERT_EQ(run_cli("synth --experiment ba --seed 1 --count 20 --iters 10 --out-dir " + out.string()).code, 0);
  const json j = read_json(out / "synth_ba.json");
  for (const char* k : {"rho_ptheta", "rho_elbo"}) {
    EXPECT_GE(j[k].get<double>(), -1.0);
    EXPECT_LE(j[k].get<double>(), 1.0);
  }
  for (const char* k : {"gamma_top_ptheta", "gamma_bottom_ptheta", "gamma_top_elbo", "gamma_bottom_elbo"}) {
    EXPECT_GE(j[k].get<double>(), 0.0);
    EXPECT_LE(j[k].get<double>(), 1.0);
  }
}

TEST_F(Cli, PermDriftHasOneCurvePerSourceKind) {
  const fs::path out = dir_ / "drift";
  ASSERT_EQ(run_cli("synth --experiment perm_drift --seed 1 --count 2 --iters 4 --out-dir " + out.string()).code, 0);
  const json j = read_json(out / "synth_perm_drift.json");
  for (const char* graph : {"ba", "kronecker"}) {
    ASSERT_EQ(j[graph].size(), 3u);
    for (const char* kind : {"uniform", "degree", "max_degree"}) {
      ASSERT_TRUE(j[graph].contains(kind)) << kind;
      EXPECT_EQ(j[graph][kind].size(), 4u);
    }
  }
}

TEST_F(Cli, BoHonoursSplitAndClampsInducing) {
  const fs::path out = dir_ / "bo";
  ASSERT_EQ(run_cli("bo " + model_args() + " --seed 5 --bo-iters 1 --bo-batch 5 --out-dir " + out.string()).code, 0);
  const json j = read_json(out / "bo_trace.json");
  EXPECT_EQ(j["heldout"]["test_size"].get<int>(), 2);  // 10% of 20
  EXPECT_EQ(j["inducing"].get<int>(), 18);
  EXPECT_EQ(j["proposals"].get<int>(), 5);
  EXPECT_EQ(j["fraction_valid"].get<double>(), 1.0);
  EXPECT_EQ(lines(out / "scores.csv").front(), "rank,score,iteration,molecule");
  EXPECT_EQ(run_cli("bo " + model_args() + " --out-dir " + out.string()).code, 2);  // no seed
}

TEST(CliDefaults, MirrorExperimentSettings) {
  const RunConfig c;
  EXPECT_EQ(c.bo_iterations, 5u);
  EXPECT_EQ(c.bo_batch, 50u);
  EXPECT_EQ(c.inducing, 100u);
  EXPECT_DOUBLE_EQ(c.test_fraction, 0.1);
}

}  // namespace
}  // namespace nevae
