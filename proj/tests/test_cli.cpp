#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sgsr/image.hpp"
#include "sgsr/serialize.hpp"

using namespace sgsr;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string output;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(SGSR_CLI) + " " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  size_t n;
  while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) r.output.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Shared fixture: three HR images, their LR counterparts, a micro config and
// one pretraining run.
class Cli : public ::testing::Test {
 protected:
  static fs::path root;

  static void SetUpTestSuite() {
    root = fs::temp_directory_path() / "sgsr_tests_cli";
    fs::remove_all(root);
    fs::create_directories(root / "hr");
    fs::create_directories(root / "lr");
    for (int i = 0; i < 3; ++i) {
      Image hr(48, 48 + 8 * i);
      for (int y = 0; y < hr.height; ++y)
        for (int x = 0; x < hr.width; ++x)
          for (int c = 0; c < 3; ++c) hr.at(y, x, c) = 0.5 + 0.4 * std::sin(0.2 * x + 0.3 * y * (i + 1) + c);
      hr = quantize8(hr);
      const std::string name = "img" + std::to_string(i) + ".png";
      save_png(hr, root / "hr" / name);
      save_png(make_paired_sample(hr).lr, root / "lr" / name);
    }
    std::ofstream(root / "micro.cfg") << "preset = tiny\n"
                                         "g.base_channels = 4\ng.growth_channels = 2\ng.gradient_channels = 2\n"
                                         "g.fuse_channels = 3\ng.fuse_growth_channels = 2\n"
                                         "du.base_channels = 4\ndu.max_channels = 8\n"
                                         "dgm.input_size = 32\ndgm.n_stages = 2\ndgm.base_channels = 2\n"
                                         "dgm.max_channels = 4\ndgm.hidden = 4\nper.widths = 4,4,4,4,4\n"
                                         "train.hr_patch = 32\ntrain.batch_size = 2\n"
                                         "train.pretrain_steps = 4\ntrain.gan_steps = 3\n";
  }

  static std::string p(const std::string& rel) { return (root / rel).string(); }

  static void ensure_pretrained() {
    if (fs::exists(root / "pre" / "pretrain_final.ckpt")) return;
    const Result r = run("pretrain --config " + p("micro.cfg") + " --data " + p("hr") + " --val " + p("hr") +
                         " --out " + p("pre"));
    ASSERT_EQ(r.code, 0) << r.output;
  }
};

fs::path Cli::root;

}  // namespace

TEST_F(Cli, PretrainWritesCheckpointAndLogs) {
  ensure_pretrained();
  EXPECT_TRUE(fs::exists(root / "pre" / "pretrain_final.ckpt"));
  EXPECT_TRUE(fs::exists(root / "pre" / "train.csv"));
  EXPECT_TRUE(fs::exists(root / "pre" / "val.csv"));
}

TEST_F(Cli, DescribeCheckpoint) {
  ensure_pretrained();
  const Result r = run("describe --checkpoint " + p("pre/pretrain_final.ckpt"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("phase: pretrain"), std::string::npos);
  EXPECT_NE(r.output.find("step: 4"), std::string::npos);
  EXPECT_NE(r.output.find("g.base_channels = 4"), std::string::npos);
  EXPECT_NE(r.output.find("loss weights: adv 0.005"), std::string::npos);
}

TEST_F(Cli, DescribeFreshConfigs) {
  const Result tiny = run("describe --config " + p("micro.cfg"));
  ASSERT_EQ(tiny.code, 0) << tiny.output;
  EXPECT_NE(tiny.output.find("step: 0"), std::string::npos);
  const Result paper = run("describe --set preset=paper --set g.desubpixel_head=true");
  ASSERT_EQ(paper.code, 0) << paper.output;
  EXPECT_NE(paper.output.find("generator: 19316196 parameters"), std::string::npos);
}

TEST_F(Cli, TamperedCheckpointRejected) {
  ensure_pretrained();
  std::string bytes = slurp(root / "pre" / "pretrain_final.ckpt");
  bytes[bytes.size() / 2] ^= 0x10;
  std::ofstream(root / "bad.ckpt", std::ios::binary) << bytes;
  const Result r = run("describe --checkpoint " + p("bad.ckpt"));
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.output.find("checksum mismatch"), std::string::npos);
  EXPECT_NE(r.output.find("version 1"), std::string::npos);
}

TEST_F(Cli, InferIsDeterministicAndFourTimesLarger) {
  ensure_pretrained();
  const std::string ckpt = p("pre/pretrain_final.ckpt");
  ASSERT_EQ(run("infer --checkpoint " + ckpt + " --in " + p("lr") + " --out " + p("sr1") + " --emit-gradmap").code, 0);
  ASSERT_EQ(run("infer --checkpoint " + ckpt + " --in " + p("lr") + " --out " + p("sr2")).code, 0);
  for (int i = 0; i < 3; ++i) {
    const std::string name = "img" + std::to_string(i) + ".png";
    const Image lr = load_png(root / "lr" / name), sr = load_png(root / "sr1" / name);
    EXPECT_EQ(sr.height, 4 * lr.height);
    EXPECT_EQ(sr.width, 4 * lr.width);
    EXPECT_EQ(slurp(root / "sr1" / name), slurp(root / "sr2" / name));
    EXPECT_TRUE(fs::exists(root / "sr1" / ("img" + std::to_string(i) + "_gb.png")));
  }
}

TEST_F(Cli, InferSkipsTooSmallInputs) {
  ensure_pretrained();
  fs::create_directories(root / "small");
  save_png(Image(6, 12, 0.5), root / "small" / "tiny.png");
  save_png(Image(8, 8, 0.5), root / "small" / "ok.png");
  const Result r = run("infer --checkpoint " + p("pre/pretrain_final.ckpt") + " --in " + p("small") + " --out " +
                       p("small_out"));
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("skip"), std::string::npos);
  EXPECT_FALSE(fs::exists(root / "small_out" / "tiny.png"));
  EXPECT_TRUE(fs::exists(root / "small_out" / "ok.png"));
}

TEST_F(Cli, EvalReproducesValidationPsnr) {
  ensure_pretrained();
  ASSERT_EQ(run("infer --checkpoint " + p("pre/pretrain_final.ckpt") + " --in " + p("lr") + " --out " + p("sr_val"))
                .code,
            0);
  const Result r = run("eval --hr " + p("hr") + " --sr " + p("sr_val") + " --csv " + p("eval.csv"));
  ASSERT_EQ(r.code, 0) << r.output;
  std::ifstream csv(root / "eval.csv");
  std::string line, last;
  std::getline(csv, line);
  EXPECT_EQ(line, "name,psnr,ssim");
  int rows = 0;
  while (std::getline(csv, line)) {
    last = line;
    ++rows;
  }
  EXPECT_EQ(rows, 4);
  ASSERT_EQ(last.rfind("mean,", 0), 0u);
  const double eval_psnr = std::stod(last.substr(5));

  std::ifstream val(root / "pre" / "val.csv");
  std::string vline, vlast;
  while (std::getline(val, vline)) vlast = vline;
  // step,phase,psnr,ssim
  std::stringstream ss(vlast);
  std::string step, phase, psnr;
  std::getline(ss, step, ',');
  std::getline(ss, phase, ',');
  std::getline(ss, psnr, ',');
  EXPECT_NEAR(eval_psnr, std::stod(psnr), 0.01);
}

TEST_F(Cli, EvalBicubicToStdout) {
  const Result r = run("eval --bicubic --hr " + p("hr"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(r.output.rfind("name,psnr,ssim\n", 0), 0u);
  EXPECT_NE(r.output.find("\nmean,"), std::string::npos);
}

TEST_F(Cli, EvalFailureLeavesNoCsv) {
  fs::create_directories(root / "empty_sr");
  const Result r = run("eval --hr " + p("hr") + " --sr " + p("empty_sr") + " --csv " + p("partial.csv"));
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.output.find("missing SR image"), std::string::npos);
  EXPECT_FALSE(fs::exists(root / "partial.csv"));
  EXPECT_NE(run("eval --hr " + p("hr")).code, 0);
}

TEST_F(Cli, GradmapPositionalAndNamed) {
  ASSERT_EQ(run("gradmap " + p("hr/img0.png") + " " + p("gm_a.png")).code, 0);
  ASSERT_EQ(run("gradmap --in " + p("hr/img0.png") + " --out " + p("gm_b.png")).code, 0);
  EXPECT_EQ(slurp(root / "gm_a.png"), slurp(root / "gm_b.png"));
  const Image m = load_png(root / "gm_a.png");
  EXPECT_EQ(m.height, 48);
  const Result missing = run("gradmap " + p("nope.png") + " " + p("gm_c.png"));
  EXPECT_NE(missing.code, 0);
  EXPECT_FALSE(fs::exists(root / "gm_c.png"));
}

TEST_F(Cli, TrainFromPretrainedCheckpoint) {
  ensure_pretrained();
  const Result r = run("train --init " + p("pre/pretrain_final.ckpt") + " --data " + p("hr") + " --out " + p("gan"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(root / "gan" / "gan_final.ckpt"));
  const Result d = run("describe --checkpoint " + p("gan/gan_final.ckpt"));
  EXPECT_NE(d.output.find("phase: gan"), std::string::npos);
  EXPECT_NE(d.output.find("step: 3"), std::string::npos);
}

TEST_F(Cli, UsageAndConfigErrorsExitNonzero) {
  EXPECT_NE(run("").code, 0);
  EXPECT_NE(run("frobnicate").code, 0);
  const Result bad = run("pretrain --set nonsense.key=1 --data " + p("hr") + " --out " + p("bad_run"));
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.output.find("unknown key"), std::string::npos);
  EXPECT_FALSE(fs::exists(root / "bad_run" / "train.csv"));
  EXPECT_NE(run("infer --checkpoint " + p("micro.cfg") + " --in " + p("lr") + " --out " + p("x")).code, 0);
}
