#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "sgsr/metrics.hpp"
#include "sgsr/trainer.hpp"
#include "test_util.hpp"

using namespace sgsr;
namespace fs = std::filesystem;

namespace {

const char* kMicro = R"(preset = tiny
g.base_channels = 4
g.growth_channels = 2
g.gradient_channels = 2
g.fuse_channels = 3
g.fuse_growth_channels = 2
du.base_channels = 4
du.max_channels = 8
dgm.input_size = 32
dgm.n_stages = 2
dgm.base_channels = 2
dgm.max_channels = 4
dgm.hidden = 4
per.widths = 4,4,4,4,4
train.hr_patch = 32
train.batch_size = 2
train.pretrain_steps = 4
train.gan_steps = 6
train.augment = true
train.seed = 5
)";

Dataset synthetic(int n, uint64_t seed, int size = 48) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Dataset d;
  for (int i = 0; i < n; ++i) {
    Image hr(size, size);
    const double fx = 0.1 + 0.5 * u(rng), fy = 0.1 + 0.5 * u(rng), ph = 6.0 * u(rng);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        for (int c = 0; c < 3; ++c) hr.at(y, x, c) = 0.5 + 0.4 * std::sin(fx * x + fy * y + ph + c);
    d.names.push_back("img" + std::to_string(i) + ".png");
    d.samples.push_back(make_paired_sample(hr));
  }
  return d;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "sgsr_tests_trainer" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::vector<float>> snapshot(const std::vector<Tensor<float>>& params) {
  std::vector<std::vector<float>> out;
  for (const auto& p : params) out.emplace_back(p.data().begin(), p.data().end());
  return out;
}

double change(const std::vector<std::vector<float>>& before, const std::vector<Tensor<float>>& params) {
  double acc = 0.0;
  for (size_t i = 0; i < params.size(); ++i)
    for (size_t k = 0; k < before[i].size(); ++k) acc += std::fabs(params[i].data()[k] - before[i][k]);
  return acc;
}

std::vector<std::vector<double>> trace(const std::vector<StepRecord>& records) {
  std::vector<std::vector<double>> out;
  for (const auto& r : records) out.push_back(r.losses());
  return out;
}

bool same_trace(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size()) return false;
    for (size_t k = 0; k < a[i].size(); ++k) {
      const bool both_nan = std::isnan(a[i][k]) && std::isnan(b[i][k]);
      if (!both_nan && a[i][k] != b[i][k]) return false;
    }
  }
  return true;
}

}  // namespace

TEST(Trainer, EmptyDatasetRefused) {
  EXPECT_THROW(Trainer(parse_config(kMicro), kMicro, Dataset{}), std::invalid_argument);
}

TEST(Trainer, TooSmallImageRefused) {
  EXPECT_THROW(Trainer(parse_config(kMicro), kMicro, synthetic(1, 1, 24)), std::invalid_argument);
}

TEST(Trainer, PretrainTouchesOnlyGenerator) {
  Trainer t(parse_config(kMicro), kMicro, synthetic(2, 1));
  const auto g0 = snapshot(t.generator().params().params());
  const auto du0 = snapshot(t.disc_u().params().params());
  const auto gm0 = snapshot(t.disc_gm().params().params());
  const StepRecord r = t.step();
  EXPECT_EQ(r.phase, Phase::kPretrain);
  EXPECT_TRUE(std::isfinite(r.pix));
  EXPECT_TRUE(std::isnan(r.adv_u));
  EXPECT_GT(change(g0, t.generator().params().params()), 0.0);
  EXPECT_EQ(change(du0, t.disc_u().params().params()), 0.0);
  EXPECT_EQ(change(gm0, t.disc_gm().params().params()), 0.0);
}

TEST(Trainer, OneGanStepMovesAllThreeNetworks) {
  Trainer t(parse_config(kMicro), kMicro, synthetic(2, 2));
  t.run();
  t.begin_gan();
  EXPECT_EQ(t.phase(), Phase::kGan);
  EXPECT_EQ(t.step_count(), 0);
  const auto g0 = snapshot(t.generator().params().params());
  const auto du0 = snapshot(t.disc_u().params().params());
  const auto gm0 = snapshot(t.disc_gm().params().params());
  const StepRecord r = t.step();
  EXPECT_GT(change(g0, t.generator().params().params()), 0.0);
  EXPECT_GT(change(du0, t.disc_u().params().params()), 0.0);
  EXPECT_GT(change(gm0, t.disc_gm().params().params()), 0.0);
  for (double v : r.losses()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Trainer, SameSeedSameTrace) {
  auto run = [] {
    Trainer t(parse_config(kMicro), kMicro, synthetic(3, 3));
    auto records = t.run();
    t.begin_gan();
    auto gan = t.run();
    records.insert(records.end(), gan.begin(), gan.end());
    return trace(records);
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.size(), 10u);
  EXPECT_TRUE(same_trace(a, b));

  const std::string other = std::string(kMicro) + "train.seed = 6\n";
  Trainer t(parse_config(other), other, synthetic(3, 3));
  EXPECT_FALSE(same_trace(trace(t.run()), std::vector<std::vector<double>>(a.begin(), a.begin() + 4)));
}

TEST(Trainer, ResumeMatchesStraightThrough) {
  const Dataset data = synthetic(3, 4);
  Trainer straight(parse_config(kMicro), kMicro, data);
  straight.run();
  straight.begin_gan();
  const auto tail = trace(straight.run());

  const fs::path dir = scratch("resume");
  Trainer first(parse_config(kMicro), kMicro, data);
  first.run();
  first.begin_gan();
  first.run(2);
  const fs::path ckpt = first.save(dir / "mid.ckpt");
  auto resumed = Trainer::from_checkpoint(ckpt, data);
  EXPECT_EQ(resumed->phase(), Phase::kGan);
  EXPECT_EQ(resumed->step_count(), 2);
  const auto rest = trace(resumed->run());
  EXPECT_TRUE(same_trace(rest, std::vector<std::vector<double>>(tail.begin() + 2, tail.end())));
  for (const char* section : {"generator", "disc_u", "disc_gm", "adam_g", "adam_du", "adam_dgm"}) {
    EXPECT_EQ(resumed->checkpoint().get(section), straight.checkpoint().get(section)) << section;
  }
}

TEST(Trainer, StepZeroCheckpointRoundTrips) {
  const Dataset data = synthetic(1, 5);
  Trainer t(parse_config(kMicro), kMicro, data);
  const Container c = t.checkpoint();
  const fs::path dir = scratch("step0");
  const fs::path p = t.save(dir / "zero.ckpt");
  auto back = Trainer::from_checkpoint(p, data);
  const Container d = back->checkpoint();
  for (const auto& [name, bytes] : c.sections()) {
    if (name == "state") continue;
    EXPECT_EQ(d.get(name), bytes) << name;
  }
  EXPECT_EQ(back->config_text(), kMicro);
  EXPECT_EQ(back->step_count(), 0);
}

TEST(Trainer, LogsAndCheckpointsOnSchedule) {
  const fs::path dir = scratch("logs");
  const std::string text = std::string(kMicro) + "train.checkpoint_every = 2\ntrain.val_every = 2\n";
  Trainer t(parse_config(text), text, synthetic(2, 6), synthetic(1, 7), TrainerOptions{dir});
  t.run();
  t.begin_gan();
  t.run();
  EXPECT_TRUE(fs::exists(dir / "pretrain_00000002.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "pretrain_final.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "gan_00000006.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "gan_final.ckpt"));
  EXPECT_EQ(t.last_checkpoint(), dir / "gan_final.ckpt");
  std::ifstream log(dir / "train.csv");
  std::string header, line;
  std::getline(log, header);
  for (const char* col : {"adv_u", "per", "fm", "pix", "gm_adv", "gm_pix", "gb_pix", "d_u", "d_gm", "lr"}) {
    EXPECT_NE(header.find(col), std::string::npos) << col;
  }
  int rows = 0;
  while (std::getline(log, line)) ++rows;
  EXPECT_EQ(rows, 10);
  EXPECT_EQ(t.validation().size(), 5u);
  EXPECT_TRUE(fs::exists(dir / "val.csv"));
}

TEST(Trainer, ValidationMatchesInferenceRoundTrip) {
  const Dataset val = synthetic(2, 8);
  Trainer t(parse_config(kMicro), kMicro, synthetic(1, 9), val);
  t.run();
  const ValRecord v = t.validate();
  double total = 0.0;
  for (const auto& s : val.samples) total += psnr(quantize8(super_resolve(t.generator(), s.lr)), s.hr);
  EXPECT_NEAR(v.psnr, total / 2, 1e-9);
}

TEST(Trainer, ScheduleFollowsPhase) {
  const std::string text = std::string(kMicro) + "train.pretrain_halve_every = 2\ntrain.lr_milestones = 1,3\n";
  Trainer t(parse_config(text), text, synthetic(1, 10));
  const double base = t.config().train.pretrain_lr;
  EXPECT_EQ(t.step().lr, base);
  EXPECT_EQ(t.step().lr, base);
  EXPECT_EQ(t.step().lr, base / 2);
  t.run();
  t.begin_gan();
  const double gan = t.config().train.gan_lr;
  EXPECT_EQ(t.step().lr, gan);
  EXPECT_EQ(t.step().lr, gan / 2);
  EXPECT_EQ(t.step().lr, gan / 2);
  EXPECT_EQ(t.step().lr, gan / 4);
}

TEST(GradientFlow, MapLossReachesGeneratorParameters) {
  GeneratorConfig c = GeneratorConfig::tiny();
  c.base_channels = 4;
  c.growth_channels = 2;
  c.gradient_channels = 2;
  c.fuse_channels = 3;
  c.fuse_growth_channels = 2;
  Generator<double> g(c, 3);
  std::mt19937_64 rng(3);
  const auto lr = sgsr::testing::random_tensor({1, 3, 8, 8}, rng, 0, 1, false);
  const auto hr = sgsr::testing::random_tensor({1, 3, 32, 32}, rng, 0, 1, false);
  g.params().zero_grad();
  gradient_losses(g.forward(lr).sr, hr, Tensor<double>::zeros({1, 1, 32, 32})).gm_pix.backward();
  double norm = 0.0;
  int reached = 0;
  for (const auto& e : g.params().entries()) {
    if (!e.tensor.has_grad()) continue;
    double n = 0.0;
    for (double v : e.tensor.grad()) n += v * v;
    if (n > 0) ++reached;
    norm += n;
  }
  EXPECT_GT(norm, 0.0);
  EXPECT_GT(reached, 10);
}
