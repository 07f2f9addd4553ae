#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sgsr/ops.hpp"
#include "fd_cases.hpp"
#include "test_util.hpp"

using namespace sgsr;
using sgsr::testing::grad_check;
using sgsr::testing::probe;
using sgsr::testing::random_away_from_zero;
using sgsr::testing::random_tensor;

namespace {

using TD = Tensor<double>;

std::vector<double> values(const TD& t) { return {t.data().begin(), t.data().end()}; }

constexpr double kTol = 1e-4;
constexpr int kSeeds = 5;

}  // namespace

TEST(Tensor, ShapeMatchesData) {
  EXPECT_THROW(TD({2, 3}, std::vector<double>(5)), std::invalid_argument);
  TD t({2, 3}, std::vector<double>(6, 1.0));
  EXPECT_EQ(t.numel(), 6);
  EXPECT_EQ(t.dim(-1), 3);
}

TEST(Tensor, SumGradIsOnes) {
  TD x({2, 2}, {1, 2, 3, 4}, true);
  sum(x).backward();
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), std::vector<double>(4, 1.0));
}

TEST(Tensor, SquareSumGradIsTwoX) {
  TD x({3}, {1, -2, 0.5}, true);
  sum(mul(x, x)).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], -4.0);
  EXPECT_DOUBLE_EQ(x.grad()[2], 1.0);
}

TEST(Tensor, SharedSubexpressionAccumulates) {
  TD x({1}, {3.0}, true);
  sum(add(x, x)).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
}

TEST(Tensor, RepeatedBackwardAccumulates) {
  TD x({2}, {1, 2}, true);
  sum(x).backward();
  sum(x).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
  x.zero_grad();
  EXPECT_FALSE(x.has_grad());
}

TEST(Tensor, NonScalarBackwardRejected) {
  TD x({2}, {1, 2}, true);
  EXPECT_THROW(mul_scalar(x, 2.0).backward(), std::invalid_argument);
}

TEST(Tensor, NoGradGuardDropsGraph) {
  TD x({2}, {1, 2}, true);
  TD y;
  {
    NoGradGuard guard;
    y = mul_scalar(x, 3.0);
  }
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(grad_enabled());
  EXPECT_FALSE(mul_scalar(x.detach(), 3.0).requires_grad());
}

TEST(Tape, TopologicalOrderVisitsEachNodeOnce) {
  TD x({2}, {1, 2}, true);
  TD a = mul_scalar(x, 2.0);
  TD b = add(a, x);
  TD loss = sum(mul(a, b));
  Tape<double> tape(loss);
  const auto& order = tape.order();
  ASSERT_EQ(order.back(), loss.node().get());
  for (size_t i = 0; i < order.size(); ++i) {
    for (const auto& p : order[i]->parents) {
      auto it = std::find(order.begin(), order.end(), p.get());
      ASSERT_NE(it, order.end());
      EXPECT_LT(static_cast<size_t>(it - order.begin()), i);
    }
    EXPECT_EQ(std::count(order.begin(), order.end(), order[i]), 1);
  }
}

TEST(Ops, Deterministic) {
  std::mt19937_64 rng(3);
  TD x = random_tensor({2, 3, 9, 9}, rng);
  TD w = random_tensor({4, 3, 3, 3}, rng);
  EXPECT_EQ(values(conv2d(x, w, TD(), 1, 1)), values(conv2d(x, w, TD(), 1, 1)));
}

// --- conv2d ----------------------------------------------------------------

TEST(Conv2d, IdentityKernel) {
  TD x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  TD w({1, 1, 1, 1}, {1.0});
  EXPECT_EQ(values(conv2d(x, w, TD(), 1, 0)), values(x));
}

TEST(Conv2d, SumCase) {
  TD y = conv2d(TD::full({1, 1, 2, 2}, 1.0), TD::full({1, 1, 2, 2}, 1.0), TD(), 1, 0);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(y.item(), 4.0);
}

TEST(Conv2d, OutputSize) {
  TD x = TD::zeros({1, 2, 9, 7});
  EXPECT_EQ(conv2d(x, TD::zeros({5, 2, 3, 3}), TD(), 2, 1).shape(), (Shape{1, 5, 5, 4}));
  EXPECT_EQ(conv2d(x, TD::zeros({5, 2, 3, 3}), TD(), 1, 0).shape(), (Shape{1, 5, 7, 5}));
}

TEST(Conv2d, MismatchNamesBothShapes) {
  try {
    conv2d(TD::zeros({1, 2, 4, 4}), TD::zeros({1, 3, 3, 3}), TD(), 1, 1);
    FAIL();
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(1,2,4,4)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(1,3,3,3)"), std::string::npos) << msg;
  }
  EXPECT_THROW(conv2d(TD::zeros({1, 2, 4, 4}), TD::zeros({1, 2, 3, 3}), TD(), 0, 1), std::invalid_argument);
  EXPECT_THROW(conv2d(TD::zeros({1, 2, 4, 4}), TD::zeros({1, 2, 3, 3}), TD(), 1, -1), std::invalid_argument);
}

TEST(Conv2d, FiniteDifferences) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(seed);
    TD x = random_tensor({2, 3, 8, 8}, rng);
    TD w = random_tensor({4, 3, 3, 3}, rng);
    TD b = random_tensor({4}, rng);
    auto r = grad_check([&] { return probe(conv2d(x, w, b, 1, 1)); }, {x, w, b});
    EXPECT_LE(r.max_rel_error, kTol) << "seed " << seed;
    auto s = grad_check([&] { return probe(conv2d(x, w, TD(), 2, 0)); }, {x, w});
    EXPECT_LE(s.max_rel_error, kTol) << "seed " << seed;
  }
}

// --- activations -----------------------------------------------------------

TEST(LeakyRelu, Values) {
  EXPECT_EQ(values(leaky_relu(TD({3}, {-1, 0, 2}), 0.2)), (std::vector<double>{-0.2, 0, 2}));
  EXPECT_EQ(values(leaky_relu(TD({2}, {-3, 5}), 0.0)), (std::vector<double>{0, 5}));
}

TEST(LeakyRelu, SubgradientAtZeroIsSlope) {
  TD x({1}, {0.0}, true);
  sum(leaky_relu(x, 0.2)).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.2);
}

TEST(LeakyRelu, FiniteDifferencesAwayFromZero) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(seed);
    TD x = random_away_from_zero({4, 5}, rng, 1e-3, 1.0);
    EXPECT_LE(grad_check([&] { return probe(leaky_relu(x, 0.2)); }, {x}).max_rel_error, kTol);
    EXPECT_LE(grad_check([&] { return probe(relu(x)); }, {x}).max_rel_error, kTol);
  }
}

// --- resampling and layout -------------------------------------------------

TEST(UpsampleNearest, Values) {
  TD x({1, 1, 2, 2}, {1, 2, 3, 4}, true);
  TD y = upsample_nearest(x, 2);
  EXPECT_EQ(values(y), (std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4}));
  EXPECT_EQ(values(upsample_nearest(x, 1)), values(x));
  sum(y).backward();
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), std::vector<double>(4, 4.0));
}

TEST(SpaceToDepth, DocumentedChannelOrder) {
  TD y = space_to_depth(TD({1, 1, 2, 2}, {1, 2, 3, 4}), 2);
  EXPECT_EQ(y.shape(), (Shape{1, 4, 1, 1}));
  EXPECT_EQ(values(y), (std::vector<double>{1, 2, 3, 4}));
}

TEST(SpaceToDepth, RoundTripBitExact) {
  std::mt19937_64 rng(1);
  TD x = random_tensor({2, 4, 6, 6}, rng);
  EXPECT_EQ(values(depth_to_space(space_to_depth(x, 2), 2)), values(x));
  EXPECT_EQ(values(space_to_depth(depth_to_space(x, 2), 2)), values(x));
  EXPECT_EQ(values(depth_to_space(space_to_depth(x, 3), 3)), values(x));
}

TEST(SpaceToDepth, GradientIsInversePermutation) {
  std::mt19937_64 rng(2);
  TD x = random_tensor({1, 2, 4, 4}, rng);
  TD up = random_tensor({1, 8, 2, 2}, rng, -1, 1, false);
  sum(mul(space_to_depth(x, 2), up)).backward();
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), values(depth_to_space(up, 2)));
}

TEST(SpaceToDepth, IndivisibleRejected) {
  EXPECT_THROW(space_to_depth(TD::zeros({1, 1, 3, 4}), 2), std::invalid_argument);
  EXPECT_THROW(depth_to_space(TD::zeros({1, 3, 2, 2}), 2), std::invalid_argument);
}

TEST(Concat, ChannelAxis) {
  TD y = concat(std::vector<TD>{TD::zeros({1, 2, 4, 4}), TD::zeros({1, 3, 4, 4})}, 1);
  EXPECT_EQ(y.shape(), (Shape{1, 5, 4, 4}));
  EXPECT_THROW(concat(std::vector<TD>{TD::zeros({1, 2, 4, 4}), TD::zeros({1, 3, 4, 5})}, 1),
               std::invalid_argument);
  EXPECT_THROW(concat(std::vector<TD>{TD::zeros({1, 2})}, 2), std::invalid_argument);
}

TEST(Reductions, AbsSumOfDifferenceWithSelfIsZero) {
  std::mt19937_64 rng(4);
  TD x = random_tensor({3, 7}, rng);
  EXPECT_EQ(abs_sum(sub(x, x)).item(), 0.0);
}

TEST(Elementwise, ShapeMismatchRejected) {
  EXPECT_THROW(add(TD::zeros({2, 3}), TD::zeros({3, 2})), std::invalid_argument);
  EXPECT_THROW(mse(TD::zeros({2}), TD::zeros({3})), std::invalid_argument);
}

TEST(OpGradients, EveryOpPassesFiniteDifferences) {
  for (const auto& c : sgsr::testing::op_cases()) {
    for (int seed = 0; seed < kSeeds; ++seed) {
      std::mt19937_64 rng(100 + seed);
      std::vector<TD> inputs;
      auto f = c.build(rng, inputs);
      auto r = grad_check(f, inputs);
      EXPECT_LE(r.max_rel_error, kTol) << c.name << " seed " << seed;
      EXPECT_GT(r.checked, 0u) << c.name;
    }
  }
}

TEST(LogSigmoid, StableForLargeInputs) {
  TD y = log_sigmoid(TD({3}, {-800.0, 0.0, 800.0}));
  EXPECT_DOUBLE_EQ(y.data()[0], -800.0);
  EXPECT_NEAR(y.data()[1], std::log(0.5), 1e-15);
  EXPECT_EQ(y.data()[2], 0.0);
}

TEST(MaxPool, Values) {
  TD y = max_pool2d(TD({1, 1, 3, 3}, {1, 5, 2, 3, 4, 9, 0, 8, 7}), 2, 1);
  EXPECT_EQ(values(y), (std::vector<double>{5, 9, 8, 9}));
}

TEST(Linear, Values) {
  TD y = linear(TD({1, 2}, {1, 2}), TD({2, 2}, {1, 0, 3, -1}), TD({2}, {0.5, 0.0}));
  EXPECT_EQ(values(y), (std::vector<double>{1.5, 1.0}));
}
