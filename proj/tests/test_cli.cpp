#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "sspe/cli.hpp"

using namespace sspe;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out, err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "sspe");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("sspe_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    save_point_cloud(make_cube_model(), dir / "cube.xyz");
  }
  void TearDown() override { fs::remove_all(dir); }
  std::string p(const std::string& name) const { return (dir / name).string(); }
  fs::path dir;
};

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_F(Cli, GenDataWritesScenesAndManifest) {
  const auto r = run({"gen-data", "--model", p("cube.xyz"), "--scenes", "100", "--occ", "0.3:0.9", "--seed", "7",
                      "--out", p("train.jsonl"), "--m", "8"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(line_count(io::read_text(p("train.jsonl"))), 100u);
  const auto m = io::Json::parse(io::read_text(p("train.jsonl.manifest.json")));
  EXPECT_EQ(m["command"], "gen-data");
  EXPECT_EQ(m["seed"], 7);
  EXPECT_EQ(m["config"]["occlusion"]["min_fraction"], 0.3);
}

TEST_F(Cli, GenDataFromManifestReproduces) {
  ASSERT_EQ(run({"gen-data", "--model", p("cube.xyz"), "--scenes", "5", "--occ", "light", "--seed", "3", "--out",
                 p("a.jsonl"), "--m", "8", "--angle-sigma", "0.1"})
                .code,
            0);
  ASSERT_EQ(run({"gen-data", "--config", p("a.jsonl.manifest.json"), "--seed", "3", "--out", p("b.jsonl")}).code, 0);
  EXPECT_EQ(io::read_text(p("a.jsonl")), io::read_text(p("b.jsonl")));
}

TEST_F(Cli, UsageErrors) {
  const auto bad = run({"train", "--bad-flag"});
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find("Usage"), std::string::npos) << bad.err;
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"gen-data", "--model", p("cube.xyz"), "--out", p("x.jsonl")}).code, 1);  // no seed
  EXPECT_EQ(run({"gen-data", "--model", p("cube.xyz"), "--seed", "1", "--occ", "lots", "--out", p("x.jsonl")}).code, 1);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(Cli, RuntimeFailures) {
  const auto r = run({"eval", "--checkpoint", p("missing.json"), "--data", p("missing.jsonl"), "--model", p("cube.xyz"),
                      "--out", p("r.json")});
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(r.err.empty());
  EXPECT_EQ(run({"train", "--data", p("missing.jsonl"), "--seed", "1", "--out", p("c.json")}).code, 2);
}

TEST_F(Cli, Keypoints) {
  ASSERT_EQ(run({"keypoints", "--model", p("cube.xyz"), "--n", "9", "--out", p("kp.json")}).code, 0);
  const auto j = io::Json::parse(io::read_text(p("kp.json")));
  EXPECT_EQ(j["points"].size(), 9u);
  EXPECT_EQ(run({"keypoints", "--model", p("cube.xyz"), "--n", "100000", "--out", p("kp.json")}).code, 2);
}

TEST_F(Cli, TrainEvalBaselineExport) {
  ASSERT_EQ(run({"gen-data", "--model", p("cube.xyz"), "--scenes", "8", "--seed", "1", "--out", p("d.jsonl"), "--m",
                 "8", "--n", "6"})
                .code,
            0);
  const std::vector<std::string> arch{"--feature-dim", "8", "--phi-s-hidden", "8", "--phi-g-hidden", "16"};
  auto train = std::vector<std::string>{"train", "--data", p("d.jsonl"), "--seed", "2", "--epochs", "2", "--batch",
                                        "4", "--out", p("ck.json"), "--quiet", "--variant", "sspe-r"};
  train.insert(train.end(), arch.begin(), arch.end());
  ASSERT_EQ(run(train).code, 0);
  const auto ck = load_checkpoint(p("ck.json"));
  EXPECT_EQ(ck.params.variant, Variant::sspe_r());
  EXPECT_EQ(ck.steps, 4u);

  // Re-running from the manifest reproduces the checkpoint.
  ASSERT_EQ(run({"train", "--config", p("ck.json.manifest.json"), "--data", p("d.jsonl"), "--seed", "2", "--out",
                 p("ck2.json"), "--quiet"})
                .code,
            0);
  EXPECT_EQ(io::read_text(p("ck.json")), io::read_text(p("ck2.json")));

  ASSERT_EQ(run({"eval", "--checkpoint", p("ck.json"), "--data", p("d.jsonl"), "--model", p("cube.xyz"), "--out",
                 p("r.json")})
                .code,
            0);
  const auto rep = io::Json::parse(io::read_text(p("r.json")));
  EXPECT_EQ(rep["scenes"].size(), 8u);
  EXPECT_EQ(rep["estimator"], "sspe-r");

  ASSERT_EQ(run({"baseline", "--data", p("d.jsonl"), "--model", p("cube.xyz"), "--out", p("b.json")}).code, 0);
  EXPECT_DOUBLE_EQ(io::Json::parse(io::read_text(p("b.json")))["accuracy"].get<double>(), 100.0);

  ASSERT_EQ(run({"export-features", "--checkpoint", p("ck.json"), "--data", p("d.jsonl"), "--scene", "1", "--out",
                 p("f.csv")})
                .code,
            0);
  EXPECT_EQ(line_count(io::read_text(p("f.csv"))), 1u + 6u * 8u);
  EXPECT_EQ(run({"export-features", "--checkpoint", p("ck.json"), "--data", p("d.jsonl"), "--scene", "99", "--out",
                 p("f.csv")})
                .code,
            2);
}

TEST_F(Cli, AblatePrintsTable) {
  ASSERT_EQ(run({"gen-data", "--model", p("cube.xyz"), "--scenes", "6", "--seed", "1", "--out", p("d.jsonl"), "--m",
                 "8", "--n", "6"})
                .code,
            0);
  const auto r = run({"ablate", "--variants", "sspe-r,sspe-ours", "--train", p("d.jsonl"), "--test", p("d.jsonl"),
                      "--model", p("cube.xyz"), "--seeds", "2", "--epochs", "1", "--batch", "3", "--feature-dim",
                      "16", "--phi-s-hidden", "32,32", "--phi-g-hidden", "16", "--out", p("ab.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("sspe-ours"), std::string::npos);
  EXPECT_NE(r.out.find("mean"), std::string::npos);
  const auto j = io::Json::parse(io::read_text(p("ab.json")));
  EXPECT_EQ(j["runs"].size(), 4u);
  EXPECT_TRUE(j["means"].contains("sspe-r"));
}
