#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "symnerf/image.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int status = -1;
  std::string output;
};

RunResult run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " '" SYMNERF_CLI_PATH "' " + args + " 2>&1";
  RunResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), pipe)) > 0) r.output.append(buf, n);
  const int st = ::pclose(pipe);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const char* kTinyConfig = R"({
  "model": {"encoder_channels": [4, 4, 4, 4], "latent_dim": 8, "hypernet_hidden": 16,
            "field_width": 16, "field_depth": 2},
  "train": {"objects_per_batch": 1, "rays_per_object": 16, "samples_per_ray": 8,
            "warmup_steps": 2, "total_steps": 6, "checkpoint_interval": 3, "log_interval": 1},
  "render": {"samples_per_ray": 8}
})";

}  // namespace

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("symnerf_test_cli_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    std::ofstream(root_ / "tiny.json") << kTinyConfig;
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }
  static std::string path(const std::string& rel) { return "'" + (root_ / rel).string() + "'"; }
  static inline fs::path root_;
};

TEST_F(Cli, HelpListsSubcommands) {
  const auto r = run("--help");
  EXPECT_EQ(r.status, 0);
  for (const char* sub : {"make-data", "train", "render", "eval", "ablate"}) EXPECT_NE(r.output.find(sub), std::string::npos) << sub;
}

TEST_F(Cli, ErrorsExitNonZero) {
  EXPECT_NE(run("").status, 0);
  EXPECT_NE(run("frobnicate").status, 0);
  EXPECT_NE(run("eval --checkpoint " + path("missing.bin") + " --data " + path("missing")).status, 0);
  EXPECT_NE(run("make-data --out " + path("no/such/parent/data")).status, 0);
  std::ofstream(root_ / "bad.json") << R"({"train": {"nonsense": 1}})";
  const auto r = run("make-data --out " + path("bad_data") + " --config " + path("bad.json"));
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find("nonsense"), std::string::npos);
}

TEST_F(Cli, EndToEndPipeline) {
  auto r = run("make-data --out " + path("data") + " --scenes 1 --views 6 --size 16 --split interleaved");
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_TRUE(fs::exists(root_ / "data" / "manifest.json"));

  r = run("train --data " + path("data") + " --out " + path("run"), "SYMNERF_CONFIG=" + path("tiny.json"));
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_NE(r.output.find("effective config"), std::string::npos);
  EXPECT_TRUE(fs::exists(root_ / "run" / "final.bin"));
  EXPECT_TRUE(fs::exists(root_ / "run" / "log.csv"));

  r = run("render --checkpoint " + path("run/final.bin") + " --data " + path("data") +
          " --scene scene_0000 --reference 0 --views 1,2 --out " + path("renders"));
  ASSERT_EQ(r.status, 0) << r.output;
  const auto img = symnerf::read_png(root_ / "renders" / "view_1.png");
  EXPECT_EQ(img.width, 16);
  EXPECT_TRUE(fs::exists(root_ / "renders" / "view_2.png"));

  r = run("render --checkpoint " + path("run/final.bin") + " --data " + path("data") +
          " --scene scene_0000 --reference 0 --spiral --frames 3 --out " + path("spiral"));
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_TRUE(fs::exists(root_ / "spiral" / "spiral_002.png"));

  r = run("eval --checkpoint " + path("run/final.bin") + " --data " + path("data") + " --report " + path("report.csv"));
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_NE(r.output.find("PSNR"), std::string::npos);
  const std::string csv = slurp(root_ / "report.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "scene,view,pose_delta_deg,psnr_db,ssim");
  EXPECT_TRUE(fs::exists(root_ / "report.csv.config.json"));

  // Reruns are bit-identical.
  r = run("eval --checkpoint " + path("run/final.bin") + " --data " + path("data") + " --report " + path("report2.csv"));
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_EQ(csv, slurp(root_ / "report2.csv"));
}

TEST_F(Cli, FlagsOverrideConfigAndResumeWorks) {
  ASSERT_EQ(run("make-data --out " + path("data2") + " --scenes 1 --views 6 --size 16").status, 0);
  auto r = run("train --data " + path("data2") + " --out " + path("run2") + " --config " + path("tiny.json") +
               " --steps 4 --stop-at 3");
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_NE(r.output.find("\"total_steps\":4"), std::string::npos);
  r = run("train --data " + path("data2") + " --out " + path("run2") + " --resume " + path("run2/ckpt_0000003.bin"));
  ASSERT_EQ(r.status, 0) << r.output;
  const std::string log = slurp(root_ / "run2" / "log.csv");
  EXPECT_NE(log.find("\n4,"), std::string::npos);
}
