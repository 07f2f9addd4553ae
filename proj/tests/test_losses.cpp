#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sgsr/generator.hpp"
#include "sgsr/losses.hpp"
#include "fd_cases.hpp"
#include "test_util.hpp"

using namespace sgsr;
using sgsr::testing::grad_check;
using sgsr::testing::random_tensor;

namespace {

using TD = Tensor<double>;

TD scalar(double v) { return TD::scalar(v); }

double log_sig(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

DiscConfig micro_du() {
  DiscConfig c = DiscConfig::tiny();
  c.base_channels = 3;
  c.max_channels = 6;
  return c;
}

}  // namespace

// --- hinge -----------------------------------------------------------------

TEST(Hinge, MarginMetGivesZero) {
  EXPECT_EQ(hinge_disc_loss(TD::full({4, 1}, 1.0), TD::full({4, 1}, -1.0)).item(), 0.0);
}

TEST(Hinge, ZeroLogitsGiveTwo) {
  EXPECT_DOUBLE_EQ(hinge_disc_loss(TD::zeros({3, 1}), TD::zeros({3, 1})).item(), 2.0);
}

TEST(Hinge, MatchesScalarLoop) {
  for (int seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    const TD real = random_tensor({2, 1, 4, 4}, rng, -3, 3, false);
    const TD fake = random_tensor({2, 1, 4, 4}, rng, -3, 3, false);
    double r = 0, f = 0;
    for (int64_t i = 0; i < real.numel(); ++i) {
      r += -std::min(0.0, -1.0 + real.data()[i]);
      f += -std::min(0.0, -1.0 - fake.data()[i]);
    }
    const double expect = r / real.numel() + f / fake.numel();
    EXPECT_NEAR(hinge_disc_loss(real, fake).item(), expect, 1e-12);
    EXPECT_GE(hinge_disc_loss(real, fake).item(), 0.0);
  }
}

TEST(Hinge, ZeroOnlyWhenMarginsHold) {
  EXPECT_GT(hinge_disc_loss(TD({2, 1}, {1.0, 0.999}), TD({2, 1}, {-1.0, -5.0})).item(), 0.0);
  EXPECT_GT(hinge_disc_loss(TD({2, 1}, {1.0, 3.0}), TD({2, 1}, {-0.999, -5.0})).item(), 0.0);
  EXPECT_EQ(hinge_disc_loss(TD({2, 1}, {1.0, 3.0}), TD({2, 1}, {-1.0, -5.0})).item(), 0.0);
}

TEST(GenAdvU, Values) {
  EXPECT_DOUBLE_EQ(gen_adv_loss_u(TD::full({1, 1}, 2.0), TD::full({1, 1, 4, 4}, 3.0)).item(), -5.0);
  EXPECT_EQ(gen_adv_loss_u(TD::zeros({1, 1}), TD::zeros({1, 1, 4, 4})).item(), 0.0);
  // Batch of two: enc {1, -3}, dec maps of constants {0.5, 2.5}.
  TD dec({2, 1, 1, 2}, {0.5, 0.5, 2.5, 2.5});
  EXPECT_DOUBLE_EQ(gen_adv_loss_u(TD({2, 1}, {1.0, -3.0}), dec).item(), -(-1.0 + 1.5));
  EXPECT_DOUBLE_EQ(gen_adv_loss_u(TD({2, 1}, {1.0, -3.0}), TD()).item(), 1.0);
}

// --- CutMix consistency ----------------------------------------------------

TEST(CutMixConsistency, FullMaskGivesZero) {
  UNetDiscriminator<double> d(micro_du(), 1);
  std::mt19937_64 rng(1);
  const TD hr = random_tensor({1, 3, 8, 8}, rng, 0, 1, false);
  const TD sr = random_tensor({1, 3, 8, 8}, rng, 0, 1, false);
  EXPECT_EQ(cutmix_consistency_loss(d, hr, sr, full_mask(8, 8, true)).consistency.item(), 0.0);
  EXPECT_EQ(cutmix_consistency_loss(d, hr, sr, full_mask(8, 8, false)).consistency.item(), 0.0);
}

TEST(CutMixConsistency, IdentityProbeCommutes) {
  DiscConfig c = micro_du();
  c.identity_probe = true;
  UNetDiscriminator<double> d(c, 2);
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const TD hr = random_tensor({2, 3, 8, 8}, rng, 0, 1, false);
    const TD sr = random_tensor({2, 3, 8, 8}, rng, 0, 1, false);
    EXPECT_EQ(cutmix_consistency_loss(d, hr, sr, make_cutmix_mask(8, 8, rng)).consistency.item(), 0.0);
  }
}

TEST(CutMixConsistency, MatchesReferenceImplementation) {
  for (int seed = 0; seed < 5; ++seed) {
    UNetDiscriminator<double> d(micro_du(), seed);
    std::mt19937_64 rng(seed);
    const TD hr = random_tensor({2, 3, 8, 8}, rng, 0, 1, false);
    const TD sr = random_tensor({2, 3, 8, 8}, rng, 0, 1, false);
    const CutMixMask m = make_cutmix_mask(8, 8, 0.4, 0.3, 0.8);
    // Mixed image and mixed decoder maps built by hand.
    std::vector<double> mixed(hr.numel());
    for (int64_t i = 0; i < hr.numel(); ++i) {
      const int64_t pix = i % 64;
      mixed[i] = m.mask[pix] ? hr.data()[i] : sr.data()[i];
    }
    const TD dec_mixed = d.decode(TD(hr.shape(), mixed));
    const TD dec_hr = d.decode(hr), dec_sr = d.decode(sr);
    double acc = 0.0;
    for (int64_t i = 0; i < dec_mixed.numel(); ++i) {
      const double target = m.mask[i % 64] ? dec_hr.data()[i] : dec_sr.data()[i];
      acc += (dec_mixed.data()[i] - target) * (dec_mixed.data()[i] - target);
    }
    const auto terms = cutmix_consistency_loss(d, hr, sr, m);
    EXPECT_NEAR(terms.consistency.item(), acc / dec_mixed.numel(), 1e-10);
    EXPECT_GT(terms.consistency.item(), 0.0);
    EXPECT_EQ(terms.mixed_enc_logit.shape(), (Shape{2, 1}));
  }
}

// --- perceptual ------------------------------------------------------------

TEST(Lpips, SelfDistanceIsZero) {
  PerceptualNet<double> net(PerceptualConfig::tiny());
  std::mt19937_64 rng(3);
  const TD x = random_tensor({1, 3, 40, 40}, rng, 0, 1, false);
  EXPECT_EQ(lpips_loss(net, x, x).item(), 0.0);
}

TEST(Lpips, ZeroTauGivesZero) {
  PerceptualNet<double> net(PerceptualConfig::tiny());
  for (int k = 0; k < 5; ++k) net.set_tau(k, std::vector<double>(net.tau(k).numel(), 0.0));
  std::mt19937_64 rng(4);
  EXPECT_EQ(lpips_loss(net, random_tensor({1, 3, 40, 40}, rng, 0, 1, false),
                       random_tensor({1, 3, 40, 40}, rng, 0, 1, false))
                .item(),
            0.0);
  EXPECT_THROW(net.set_tau(0, std::vector<double>(net.tau(0).numel(), -1.0)), std::invalid_argument);
}

TEST(Lpips, MatchesNestedLoopEvaluation) {
  PerceptualNet<double> net(PerceptualConfig::tiny());
  for (int seed = 0; seed < 3; ++seed) {
    std::mt19937_64 rng(seed);
    const TD a = random_tensor({2, 3, 48, 40}, rng, 0, 1, false);
    const TD b = random_tensor({2, 3, 48, 40}, rng, 0, 1, false);
    const auto fa = net.features(a), fb = net.features(b);
    double expect = 0.0;
    for (int k = 0; k < 5; ++k) {
      const int64_t n = fa[k].dim(0), c = fa[k].dim(1), h = fa[k].dim(2), w = fa[k].dim(3);
      double stage = 0.0;
      for (int64_t bi = 0; bi < n; ++bi)
        for (int64_t y = 0; y < h; ++y)
          for (int64_t x = 0; x < w; ++x) {
            double na = 0, nb = 0;
            for (int64_t ch = 0; ch < c; ++ch) {
              na += std::pow(fa[k].at({bi, ch, y, x}), 2);
              nb += std::pow(fb[k].at({bi, ch, y, x}), 2);
            }
            na = std::sqrt(na) + 1e-10;
            nb = std::sqrt(nb) + 1e-10;
            for (int64_t ch = 0; ch < c; ++ch) {
              const double d = fa[k].at({bi, ch, y, x}) / na - fb[k].at({bi, ch, y, x}) / nb;
              stage += net.tau(k).data()[ch] * d * d;
            }
          }
      expect += stage / (n * h * w);
    }
    const double got = lpips_loss(net, a, b).item();
    EXPECT_NEAR(got, expect, 1e-8);
    EXPECT_GT(got, 0.0);
  }
}

TEST(Lpips, StagesShrinkSpatially) {
  PerceptualNet<double> net(PerceptualConfig::tiny());
  const auto f = net.features(TD::full({1, 3, 64, 64}, 0.5));
  ASSERT_EQ(f.size(), 5u);
  for (size_t k = 1; k < f.size(); ++k) EXPECT_LE(f[k].dim(2), f[k - 1].dim(2));
  EXPECT_THROW(net.features(TD::full({1, 3, 30, 64}, 0.5)), std::invalid_argument);
}

TEST(Lpips, WeightFileRoundTripAndHashCheck) {
  PerceptualNet<double> net(PerceptualConfig::tiny());
  const auto path = std::filesystem::temp_directory_path() / "sgsr_tests_lpips.bin";
  const std::string sha = save_perceptual_weights(net, path);
  PerceptualConfig cfg;  // default widths; the file's meta overrides them
  cfg.weights_path = path.string();
  cfg.weights_sha256 = sha;
  PerceptualNet<double> loaded(cfg);
  EXPECT_EQ(loaded.config().widths, PerceptualConfig::tiny().widths);
  EXPECT_NE(loaded.provenance().find(sha), std::string::npos);
  std::mt19937_64 rng(5);
  const TD a = random_tensor({1, 3, 40, 40}, rng, 0, 1, false), b = random_tensor({1, 3, 40, 40}, rng, 0, 1, false);
  EXPECT_NEAR(lpips_loss(loaded, a, b).item(), lpips_loss(net, a, b).item(), 1e-6);

  cfg.weights_sha256 = std::string(64, '0');
  try {
    PerceptualNet<double> bad(cfg);
    FAIL();
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(std::string(64, '0')), std::string::npos);
    EXPECT_NE(msg.find(sha), std::string::npos);
  }
}

TEST(Lpips, FeatureL2Mode) {
  PerceptualConfig cfg = PerceptualConfig::tiny();
  cfg.mode = PerceptualMode::kFeatureL2;
  PerceptualNet<double> net(cfg);
  std::mt19937_64 rng(6);
  const TD a = random_tensor({1, 3, 40, 40}, rng, 0, 1, false), b = random_tensor({1, 3, 40, 40}, rng, 0, 1, false);
  const auto fa = net.features(a), fb = net.features(b);
  double expect = 0.0;
  for (int k = 0; k < 5; ++k) expect += mse(fa[k], fb[k]).item();
  EXPECT_NEAR(lpips_loss(net, a, b).item(), expect, 1e-12);
}

// --- feature matching, gradient, pixel -------------------------------------

TEST(FeatureMatching, Values) {
  std::mt19937_64 rng(7);
  std::vector<TD> a{random_tensor({1, 2, 4, 4}, rng), random_tensor({1, 4, 2, 2}, rng)};
  EXPECT_EQ(feature_matching_loss(a, a).item(), 0.0);
  std::vector<TD> shifted{add_scalar(a[0], -0.3), add_scalar(a[1], -0.3)};
  EXPECT_NEAR(feature_matching_loss(a, shifted).item(), 0.3, 1e-12);
  std::vector<TD> b{random_tensor({1, 2, 4, 4}, rng), random_tensor({1, 4, 2, 2}, rng)};
  double expect = 0.0;
  for (int l = 0; l < 2; ++l) {
    double s = 0.0;
    for (int64_t i = 0; i < a[l].numel(); ++i) s += std::fabs(a[l].data()[i] - b[l].data()[i]);
    expect += s / a[l].numel();
  }
  EXPECT_NEAR(feature_matching_loss(a, b).item(), expect / 2, 1e-12);
  EXPECT_THROW(feature_matching_loss(a, std::vector<TD>{b[0]}), std::invalid_argument);
}

TEST(FeatureMatching, HrSideReceivesNoGradient) {
  std::mt19937_64 rng(8);
  TD s = random_tensor({1, 2, 3, 3}, rng), h = random_tensor({1, 2, 3, 3}, rng);
  feature_matching_loss(std::vector<TD>{s}, std::vector<TD>{h}).backward();
  EXPECT_TRUE(s.has_grad());
  EXPECT_FALSE(h.has_grad());
}

TEST(GradientLosses, Values) {
  std::mt19937_64 rng(9);
  const TD hr = random_tensor({1, 3, 8, 8}, rng, 0, 1, false);
  const TD m_hr = extract_gradient(hr);
  auto same = gradient_losses(hr, hr, m_hr);
  EXPECT_EQ(same.gm_pix.item(), 0.0);
  EXPECT_EQ(same.gb_pix.item(), 0.0);
  auto flat = gradient_losses(TD::full({1, 3, 8, 8}, 0.2), TD::full({1, 3, 8, 8}, 0.7), TD::full({1, 1, 8, 8}, 1e-6));
  EXPECT_LT(flat.gm_pix.item(), 1e-9);
  EXPECT_LT(flat.gb_pix.item(), 1e-9);

  const TD sr = random_tensor({1, 3, 8, 8}, rng, 0, 1, false);
  const TD gb = random_tensor({1, 1, 8, 8}, rng, 0, 1, false);
  const TD m_sr = extract_gradient(sr);
  double e1 = 0, e2 = 0;
  for (int i = 0; i < 64; ++i) {
    e1 += std::fabs(m_sr.data()[i] - m_hr.data()[i]);
    e2 += std::fabs(gb.data()[i] - m_hr.data()[i]);
  }
  auto r = gradient_losses(sr, hr, gb);
  EXPECT_NEAR(r.gm_pix.item(), e1 / 64, 1e-10);
  EXPECT_NEAR(r.gb_pix.item(), e2 / 64, 1e-10);
}

TEST(GmAdversarial, ZeroLogits) {
  EXPECT_NEAR(gm_disc_loss(TD::zeros({3, 1}), TD::zeros({3, 1})).item(), 2 * std::log(2.0), 1e-15);
  EXPECT_NEAR(gm_gen_loss(TD::zeros({3, 1}), TD::zeros({3, 1})).item(), std::log(2.0), 1e-15);
}

TEST(GmAdversarial, ConfidentDiscriminator) {
  EXPECT_LT(gm_disc_loss(TD::full({2, 1}, -20.0), TD::full({2, 1}, 20.0)).item(), 1e-8);
}

TEST(GmAdversarial, MatchesReferenceLoop) {
  for (int seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    const TD sr = random_tensor({4, 1}, rng, -4, 4, false), hr = random_tensor({4, 1}, rng, -4, 4, false);
    double d = 0, g = 0, rd = 0, rg = 0, msr = 0, mhr = 0;
    for (int i = 0; i < 4; ++i) {
      msr += sr.data()[i] / 4;
      mhr += hr.data()[i] / 4;
    }
    for (int i = 0; i < 4; ++i) {
      const double s = sr.data()[i], h = hr.data()[i];
      d += -std::log(1 - 1 / (1 + std::exp(-s))) - std::log(1 / (1 + std::exp(-h)));
      g += -log_sig(s);
      rd += -log_sig(-(s - mhr)) - log_sig(h - msr);
      rg += -log_sig(s - mhr) - log_sig(-(h - msr));
    }
    EXPECT_NEAR(gm_disc_loss(sr, hr).item(), d / 4, 1e-10);
    EXPECT_NEAR(gm_gen_loss(sr, hr).item(), g / 4, 1e-10);
    EXPECT_NEAR(gm_disc_loss(sr, hr, true).item(), rd / 4, 1e-10);
    EXPECT_NEAR(gm_gen_loss(sr, hr, true).item(), rg / 4, 1e-10);
  }
}

TEST(GmAdversarial, DiscLossSeesDetachedSr) {
  GMDiscConfig c = GMDiscConfig::tiny();
  c.input_size = 8;
  c.n_stages = 2;
  GradientMapDiscriminator<double> d(c, 1);
  std::mt19937_64 rng(10);
  TD m_sr = random_tensor({2, 1, 8, 8}, rng, 0, 1);
  const TD m_hr = random_tensor({2, 1, 8, 8}, rng, 0, 1, false);
  auto out = gm_adversarial(d, m_sr, m_hr);
  out.disc_loss.backward();
  EXPECT_FALSE(m_sr.has_grad());
  out.gen_loss.backward();
  EXPECT_TRUE(m_sr.has_grad());
}

TEST(PixelLoss, Values) {
  std::mt19937_64 rng(11);
  const TD hr = random_tensor({1, 3, 4, 4}, rng, 0, 1, false);
  EXPECT_EQ(pixel_loss(hr, hr).item(), 0.0);
  EXPECT_NEAR(pixel_loss(add_scalar(hr, 0.1), hr).item(), 0.1, 1e-12);
  const TD sr = random_tensor({1, 3, 4, 4}, rng, 0, 1, false);
  double e = 0;
  for (int i = 0; i < 48; ++i) e += std::fabs(sr.data()[i] - hr.data()[i]);
  EXPECT_NEAR(pixel_loss(sr, hr).item(), e / 48, 1e-12);
}

// --- aggregate -------------------------------------------------------------

TEST(TotalLoss, AllOnesWithDefaultWeights) {
  GeneratorLossParts<double> p{scalar(1), scalar(1), scalar(1), scalar(1), scalar(1), scalar(1), scalar(1)};
  EXPECT_NEAR(total_generator_loss(p, LossWeights{}).item(), 1.531, 1e-12);
}

TEST(TotalLoss, AllZeros) {
  GeneratorLossParts<double> p{scalar(0), scalar(0), scalar(0), scalar(0), scalar(0), scalar(0), scalar(0)};
  EXPECT_EQ(total_generator_loss(p, LossWeights{}).item(), 0.0);
}

TEST(TotalLoss, RandomPartsAndWeightsAndLinearity) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    LossWeights w{u(rng), u(rng), u(rng), u(rng), u(rng), u(rng)};
    double v[7];
    for (auto& x : v) x = u(rng);
    GeneratorLossParts<double> p{scalar(v[0]), scalar(v[1]), scalar(v[2]), scalar(v[3]),
                                 scalar(v[4]), scalar(v[5]), scalar(v[6])};
    const double expect = w.lambda_adv * v[0] + w.lambda_per * v[1] + w.lambda_fm * v[2] + w.lambda_pix * v[3] +
                          w.lambda_adv * v[4] + w.lambda_gm * v[5] + w.lambda_gb * v[6];
    const double total = total_generator_loss(p, w).item();
    EXPECT_NEAR(total, expect, 1e-12);
    p.gb_pix = scalar(2 * v[6]);
    EXPECT_NEAR(total_generator_loss(p, w).item() - total, w.lambda_gb * v[6], 1e-12);
  }
}

TEST(TotalLoss, NegativeWeightRejected) {
  LossWeights w;
  w.lambda_gb = -0.1;
  EXPECT_THROW(w.validate(), std::invalid_argument);
}

TEST(CompositeGradients, EveryGraphPassesFiniteDifferences) {
  for (const auto& c : sgsr::testing::composite_cases()) {
    for (int seed = 0; seed < 5; ++seed) {
      std::mt19937_64 rng(seed);
      std::vector<TD> inputs;
      auto f = c.build(rng, inputs);
      auto r = grad_check(f, inputs, 1e-5, c.max_coords, &rng, c.kink_tol);
      EXPECT_LE(r.max_rel_error, 1e-4) << c.name << " seed " << seed;
      EXPECT_GE(r.checked, inputs.size()) << c.name << " seed " << seed;
    }
  }
}
