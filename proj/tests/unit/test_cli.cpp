// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>
#include <iterator>
#include <sstream>

#include "cli.hpp"
#include "fixtures.hpp"
#include "televit/byte_io.hpp"
#include "televit/metrics.hpp"

using namespace televit;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string experiment_json(std::uint64_t model_seed, std::size_t epochs) {
  return R"({"preset":"desk","model_seed":)" + std::to_string(model_seed) +
         R"(,"split":{"train":[2001,2002],"val":[2003,2003],"test":[2004,2004]},)"
         R"("train":{"epochs":)" + std::to_string(epochs) + R"(,"lr":1e-3,"batch_size":8,"seed":3}})";
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fixtures::fresh_dir("cli");
    write_text(dir_ / "gen.json", R"({"n_lat":16,"n_lon":32,"n_years":4,"local_strength":2.5})");
    const auto r = run({"cubegen", "--config", (dir_ / "gen.json").string(), "--seed", "5", "--out",
                        (dir_ / "cube").string()});
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  }
  static fs::path path(const std::string& name) { return dir_ / name; }
  static std::string cube() { return (dir_ / "cube").string(); }
  static fs::path dir_;
};

fs::path Cli::dir_;

}  // namespace

TEST_F(Cli, UnknownFlagPrintsUsageAndExitsTwo) {
  const auto r = run({"cubegen", "--seed", "1", "--out", path("x").string(), "--bogus"});
  EXPECT_EQ(r.code, cli::kExitConfig);
  EXPECT_NE(r.err.find("--bogus"), std::string::npos);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kExitConfig);
  EXPECT_EQ(run({}).code, cli::kExitConfig);
}

TEST_F(Cli, ConfigAndDataErrorsMapToExitCodes) {
  write_text(path("bad_exp.json"), R"({"preset":"desk","split":{"train_years":[2001,2002]}})");
  EXPECT_EQ(run({"train", "--cube", cube(), "--config", path("bad_exp.json").string(), "--out",
                 path("bad_run").string()}).code,
            cli::kExitConfig);
  EXPECT_EQ(run({"train", "--cube", cube(), "--variant", "sideways", "--out", path("bad_run").string()}).code,
            cli::kExitConfig);
  EXPECT_EQ(run({"coarsen", "--cube", cube(), "--factor", "5", "--out", path("c5").string()}).code,
            cli::kExitConfig);
  EXPECT_EQ(run({"coarsen", "--cube", path("missing").string(), "--factor", "4", "--out",
                 path("c4").string()}).code,
            cli::kExitData);
  EXPECT_EQ(run({"eval", "--ckpt", path("missing.ckpt").string(), "--cube", cube(), "--split", "test",
                 "--out", path("r.json").string()}).code,
            cli::kExitData);
  fs::create_directories(path("broken"));
  write_text(path("broken") / "manifest.json", R"({"format":"televit-cube","version":7})");
  EXPECT_EQ(run({"coarsen", "--cube", path("broken").string(), "--factor", "4", "--out",
                 path("c4").string()}).code,
            cli::kExitData);
}

TEST_F(Cli, CubegenIsDeterministicAndValidates) {
  const auto again = path("cube_again");
  ASSERT_EQ(run({"cubegen", "--config", path("gen.json").string(), "--seed", "5", "--out", again.string()}).code,
            cli::kExitOk);
  EXPECT_TRUE(validate_cube_manifest(read_json(path("cube") / "manifest.json")).empty());
  for (const auto& e : fs::directory_iterator(path("cube"))) {
    const auto name = e.path().filename();
    if (name == "run.json") continue;
    EXPECT_EQ(slurp(e.path()), slurp(again / name)) << name;
  }
  const auto m = read_json(path("cube") / "run.json");
  EXPECT_EQ(m["command"], "cubegen");
  EXPECT_EQ(m["seed"], 5);
  for (const char* k : {"args", "config", "tool_version", "inputs", "outputs", "wall_time_s"})
    EXPECT_TRUE(m.contains(k)) << k;
}

TEST_F(Cli, CoarsenWritesBlockMeanCube) {
  ASSERT_EQ(run({"coarsen", "--cube", cube(), "--factor", "4", "--out", path("cube4").string()}).code,
            cli::kExitOk);
  const auto m = read_json(path("cube4") / "manifest.json");
  EXPECT_TRUE(validate_cube_manifest(m).empty());
  EXPECT_EQ(m["grid"]["n_lat"], 4);
  EXPECT_EQ(m["grid"]["n_lon"], 8);
}

TEST_F(Cli, UntrainedEvalIsNearPrevalence) {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    const std::string tag = std::to_string(seed);
    write_text(path("exp" + tag + ".json"), experiment_json(seed, 1));
    ASSERT_EQ(run({"init", "--cube", cube(), "--variant", "with_indices_and_global", "--horizon", "1", "--config",
                   path("exp" + tag + ".json").string(), "--out", path("init" + tag + ".ckpt").string()}).code,
              cli::kExitOk);
    const auto report = path("init" + tag + ".json");
    const auto r = run({"eval", "--ckpt", path("init" + tag + ".ckpt").string(), "--cube", cube(), "--split",
                        "test", "--out", report.string()});
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;
    const auto j = read_json(report);
    EXPECT_TRUE(validate_report_json(j).empty());
    const double prevalence = j["n_pos"].get<double>() / j["n_pixels"].get<double>();
    EXPECT_NEAR(j["auprc"].get<double>(), prevalence, 0.05) << "seed " << seed;
  }
}

TEST_F(Cli, TrainEvalPredictAttnRerunBitwise) {
  write_text(path("exp.json"), experiment_json(2, 1));
  std::vector<fs::path> outs;
  for (const char* tag : {"a", "b"}) {
    const auto run_dir = path(std::string("run_") + tag);
    ASSERT_EQ(run({"train", "--cube", cube(), "--variant", "with_indices", "--horizon", "1", "--config",
                   path("exp.json").string(), "--out", run_dir.string()}).code,
              cli::kExitOk);
    const std::string ckpt = (run_dir / "best.ckpt").string();
    ASSERT_EQ(run({"eval", "--ckpt", ckpt, "--cube", cube(), "--split", "test", "--out",
                   (run_dir / "report.json").string()}).code,
              cli::kExitOk);
    ASSERT_EQ(run({"predict", "--ckpt", ckpt, "--cube", cube(), "--time", "120", "--out",
                   (run_dir / "map").string()}).code,
              cli::kExitOk);
    ASSERT_EQ(run({"attn", "--ckpt", ckpt, "--sample-id", "2", "--layer", "1", "--head", "3", "--out",
                   (run_dir / "attn").string()}).code,
              cli::kExitOk);
    outs.push_back(run_dir);
  }
  for (const char* f : {"best.ckpt", "last.ckpt", "history.json", "config.json", "report.json", "map/proba.f32",
                        "map/proba.json", "map/proba.ppm", "map/target.f32", "map/target.ppm",
                        "attn/attention_l1_h3.ppm", "attn/block_mass.json"}) {
    EXPECT_FALSE(slurp(outs[0] / f).empty()) << f;
    EXPECT_EQ(slurp(outs[0] / f), slurp(outs[1] / f)) << f;
  }
  for (const char* d : {"", "map", "attn"}) EXPECT_TRUE(fs::exists(outs[0] / d / "run.json")) << d;
  EXPECT_TRUE(validate_report_json(read_json(outs[0] / "report.json")).empty());

  // masked cells are zero; every unmasked land cell is at least the threshold
  const auto header = read_json(outs[0] / "map" / "proba.json");
  EXPECT_EQ(header["mask_below"], 0.05);
  const auto proba = read_array_file(outs[0] / "map" / "proba.f32", 16 * 32, true);
  for (double p : proba) EXPECT_TRUE(p == 0.0 || p >= static_cast<double>(0.05f)) << p;
}

TEST_F(Cli, LongHorizonTrains) {
  write_text(path("exp16.json"), R"({"preset":"desk","split":{"train":[2001,2002],"val":[2003,2003],)"
                                 R"("test":[2004,2004]},"train":{"epochs":1,"max_steps":2,"batch_size":4}})");
  const auto r = run({"train", "--cube", cube(), "--variant", "local_only", "--horizon", "16", "--config",
                      path("exp16.json").string(), "--out", path("run16").string()});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_EQ(read_json(path("run16") / "run.json")["config"]["train"]["horizon"], 16);
}
