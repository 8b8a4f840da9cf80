#include <gtest/gtest.h>

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "mtdeblur/checkpoint.hpp"
#include "mtdeblur/dataset.hpp"
#include "mtdeblur/image.hpp"
#include "mtdeblur_tools/cli.hpp"
#include "temp_dir.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "mtdeblur");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = mtdeblur::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// Shared tiny dataset and trained checkpoint.
class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli");
    data_ = (dir_->path() / "data").string();
    run_ = (dir_->path() / "run").string();
    auto r = run({"synth", "--seed", "7", "--scenes", "8", "--out", data_, "--height", "16",
                  "--width", "16", "--supersample", "1"});
    ASSERT_EQ(r.code, 0) << r.err;
    r = run({"train", "--data", data_, "--out", run_, "--steps", "4", "--halve-every", "2",
             "--batch", "2", "--patch", "8", "--iterations", "2", "--base-channels", "4",
             "--resblocks", "1", "--validate-every", "2", "--checkpoint-every", "2"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() { delete dir_; }

  static TempDir* dir_;
  static std::string data_;
  static std::string run_;
};

TempDir* CliTest::dir_ = nullptr;
std::string CliTest::data_;
std::string CliTest::run_;

}  // namespace

TEST_F(CliTest, SynthCreatesSceneDirectoriesAndManifest) {
  int dirs = 0;
  for (const auto& e : fs::directory_iterator(data_)) dirs += e.is_directory();
  EXPECT_EQ(dirs, 8);
  const auto manifest = mtdeblur::read_dataset(data_);
  EXPECT_EQ(manifest.records.size(), 8u);
  EXPECT_EQ(manifest.global_seed, 7u);
  EXPECT_EQ(manifest.count(mtdeblur::Split::kTest), 2u);
}

TEST_F(CliTest, TrainWritesCheckpointsAndLog) {
  EXPECT_TRUE(fs::exists(fs::path(run_) / "ckpt_2.mtrnn"));
  EXPECT_TRUE(fs::exists(fs::path(run_) / "ckpt_4.mtrnn"));
  const auto ckpt = mtdeblur::load_checkpoint(fs::path(run_) / "final.mtrnn");
  EXPECT_EQ(ckpt.step, 4);
  ASSERT_TRUE(ckpt.train.has_value());
  EXPECT_EQ(ckpt.train->total_iterations, 2);
  std::ifstream log(fs::path(run_) / "train_log.ndjson");
  int steps = 0, validation = 0;
  for (std::string line; std::getline(log, line);) {
    auto j = nlohmann::json::parse(line);
    if (j.contains("loss")) {
      ++steps;
      for (const char* k : {"step", "lr", "start_tl", "iter_losses", "wall_ms"}) EXPECT_TRUE(j.contains(k));
    } else {
      ++validation;
      for (const char* k : {"step", "tl", "iter", "psnr"}) EXPECT_TRUE(j.contains(k));
    }
  }
  EXPECT_EQ(steps, 4);
  EXPECT_GT(validation, 0);
}

TEST_F(CliTest, ResumeContinuesToMoreSteps) {
  const auto out = (dir_->path() / "resumed").string();
  auto r = run({"train", "--data", data_, "--out", out, "--resume",
                (fs::path(run_) / "ckpt_2.mtrnn").string(), "--steps", "4"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(mtdeblur::load_checkpoint(fs::path(out) / "final.mtrnn"),
            mtdeblur::load_checkpoint(fs::path(run_) / "final.mtrnn"));
}

TEST_F(CliTest, InferEmitAllWritesOnePngPerIteration) {
  const auto manifest = mtdeblur::read_dataset(data_);
  const auto input = fs::path(data_) / manifest.records[0].files.at(manifest.records[0].native_tl);
  const auto out = dir_->path() / "infer";
  auto r = run({"infer", "--ckpt", (fs::path(run_) / "final.mtrnn").string(), "--in",
                input.string(), "--iters", "6", "--emit-all", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  int pngs = 0;
  for (const auto& e : fs::directory_iterator(out)) pngs += e.path().extension() == ".png";
  EXPECT_EQ(pngs, 6);

  r = run({"infer", "--ckpt", (fs::path(run_) / "final.mtrnn").string(), "--in", input.string(),
           "--iters", "2", "--out", (out / "single.png").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(mtdeblur::read_png(out / "single.png").height(), 16);
}

TEST_F(CliTest, EvalWritesReport) {
  const auto report = dir_->path() / "eval" / "report.json";
  auto r = run({"eval", "--ckpt", (fs::path(run_) / "final.mtrnn").string(), "--data", data_,
                "--out", report.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream f(report);
  auto j = nlohmann::json::parse(f);
  EXPECT_EQ(j["meta"]["iterations"], 4);  // trained with 2 iterations
  EXPECT_EQ(j["meta"]["report_iteration"], 2);
  EXPECT_EQ(j["per_image"].size(), 2u);
  EXPECT_EQ(j["per_iteration"].size(), 4u);
}

TEST_F(CliTest, AblateWritesBothArms) {
  const auto out = dir_->path() / "ablate";
  auto r = run({"ablate", "--mode", "ss-vs-mt", "--data", data_, "--out", out.string(),
                "--seeds", "1,2", "--steps", "2", "--batch", "1", "--patch", "8",
                "--base-channels", "4", "--resblocks", "1", "--mt-iters", "2",
                "--eval-iters", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream f(out / "ss-vs-mt.json");
  auto j = nlohmann::json::parse(f);
  EXPECT_EQ(j["ss_runs"].size(), 2u);
  EXPECT_EQ(j["mt_runs"].size(), 2u);
  EXPECT_TRUE(j.contains("difference_db"));
  EXPECT_EQ(j["mt_curve"].size(), 3u);
  std::ifstream md(out / "ss-vs-mt.md");
  std::string text((std::istreambuf_iterator<char>(md)), {});
  EXPECT_NE(text.find("Difference MT - SS"), std::string::npos);
}

TEST_F(CliTest, AblateTlSweep) {
  const auto out = dir_->path() / "sweep";
  auto r = run({"ablate", "--mode", "tl-sweep", "--data", data_, "--out", out.string(),
                "--seeds", "1", "--steps", "1", "--batch", "1", "--patch", "8",
                "--base-channels", "4", "--resblocks", "1", "--levels", "3,5"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream f(out / "tl-sweep.json");
  EXPECT_EQ(nlohmann::json::parse(f)["per_level"].size(), 2u);
}

TEST_F(CliTest, InspectCheckpoint) {
  auto r = run({"inspect-checkpoint", (fs::path(run_) / "final.mtrnn").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("parameters:"), std::string::npos);
  EXPECT_NE(r.out.find("dec1.out.weight"), std::string::npos);
  r = run({"inspect-checkpoint", "--json", (fs::path(run_) / "final.mtrnn").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(nlohmann::json::parse(r.out).contains("tensors"));
}

TEST_F(CliTest, ConfigFileMirrorsFlags) {
  const auto cfg = dir_->path() / "synth.json";
  const auto out = dir_->path() / "from_config";
  std::ofstream(cfg) << nlohmann::json{{"seed", 3}, {"scenes", 4}, {"height", 8}, {"width", 8},
                                       {"supersample", 1}, {"native-tls", {7}},
                                       {"out", out.string()}}
                            .dump();
  auto r = run({"synth", "--config", cfg.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto manifest = mtdeblur::read_dataset(out);
  EXPECT_EQ(manifest.records.size(), 4u);
  EXPECT_EQ(manifest.global_seed, 3u);
  for (const auto& rec : manifest.records) EXPECT_EQ(rec.native_tl, 7);

  // Nested sections address one subcommand; flags override the file.
  const auto nested = dir_->path() / "nested.json";
  std::ofstream(nested) << nlohmann::json{{"synth", {{"seed", 5}, {"scenes", 2}, {"height", 8},
                                                     {"width", 8}, {"supersample", 1}}}}
                               .dump();
  const auto out2 = dir_->path() / "nested_out";
  r = run({"synth", "--config", nested.string(), "--seed", "6", "--out", out2.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(mtdeblur::read_dataset(out2).global_seed, 6u);
  EXPECT_EQ(mtdeblur::read_dataset(out2).records.size(), 2u);
}

TEST_F(CliTest, FailuresExitNonZeroWithMessage) {
  auto r = run({"eval", "--ckpt", "/nonexistent.mtrnn", "--data", data_});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("error:"), std::string::npos);

  r = run({"train", "--data", data_, "--out", (dir_->path() / "bad").string(), "--patch", "30"});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("patch_size"), std::string::npos);

  r = run({"ablate", "--mode", "bogus", "--out", "x"});
  EXPECT_NE(r.code, 0);

  r = run({});
  EXPECT_NE(r.code, 0);

  const auto report = dir_->path() / "never.json";
  r = run({"eval", "--ckpt", (fs::path(run_) / "final.mtrnn").string(), "--data", data_,
           "--out", report.string(), "--report-iter", "9", "--iters", "3"});
  EXPECT_NE(r.code, 0);
  EXPECT_FALSE(fs::exists(report));
}
