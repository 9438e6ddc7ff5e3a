#include <gtest/gtest.h>

#include <cmath>

#include "kanslu/autodiff/ops.hpp"
#include "kanslu/errors.hpp"
#include "kanslu/oracles/oracles.hpp"
#include "test_helpers.hpp"

namespace ad = kanslu::ad;
using kanslu::Rng;
using kanslu::oracles::gradcheck;
using kanslu::test_util::random_tensor;

namespace {

ad::Tensor eye(std::size_t n) {
  ad::Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t[i * n + i] = 1.0;
  return t;
}

}  // namespace

TEST(Tensor, RejectsMismatchedData) {
  EXPECT_THROW(ad::Tensor({2, 3}, std::vector<double>(5)), kanslu::DimensionError);
  ad::Tensor t({2, 3});
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_FALSE(t.has_grad());
}

TEST(Matmul, IdentityAndHandChecked) {
  ad::Tape tape;
  ad::Tensor a({2, 2}, {1, 2, 3, 4});
  auto c = ad::matmul(tape.constant(a), tape.constant(eye(2)));
  EXPECT_EQ(c.value().data()[0], 1);
  EXPECT_EQ(c.value().data()[3], 4);
  auto d = ad::matmul(tape.constant(ad::Tensor({2, 2}, {1, 0, 0, 0})), tape.constant(ad::Tensor({2, 2}, {0, 1, 1, 0})));
  EXPECT_EQ((std::vector<double>(d.value().data().begin(), d.value().data().end())),
            (std::vector<double>{0, 1, 0, 0}));
}

TEST(Matmul, ShapeMismatchNamesShapes) {
  ad::Tape tape;
  try {
    ad::matmul(tape.constant(ad::Tensor({2, 3})), tape.constant(ad::Tensor({2, 3})));
    FAIL();
  } catch (const kanslu::DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("[2, 3]"), std::string::npos) << e.what();
  }
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  Rng rng(1);
  auto r = gradcheck([](ad::Tape&, auto v) { return ad::matmul(v[0], v[1]); },
                     {random_tensor({5, 4}, rng), random_tensor({4, 3}, rng)});
  EXPECT_LT(r.max_error(), 1e-6);
}

TEST(Conv2d, DeltaKernelAndBiasBroadcast) {
  ad::Tape tape;
  ad::Tensor kernel({1, 1, 3, 3});
  kernel[4] = 1.0;
  auto y = ad::conv2d(tape.constant(ad::Tensor({1, 1, 3, 3}, 1.0)), tape.constant(kernel),
                      tape.constant(ad::Tensor({1}, 0.0)));
  ASSERT_EQ(y.shape(), (ad::Shape{1, 1, 5, 5}));
  // Padding 2 shifts the input by one pixel: interior 3x3 reproduces it.
  for (std::size_t r = 0; r < 5; ++r) {
    for (std::size_t c = 0; c < 5; ++c) {
      const bool inside = r >= 1 && r <= 3 && c >= 1 && c <= 3;
      EXPECT_EQ(y.value()[r * 5 + c], inside ? 1.0 : 0.0);
    }
  }
  auto z = ad::conv2d(tape.constant(ad::Tensor({1, 1, 4, 4})), tape.constant(kernel),
                      tape.constant(ad::Tensor({1}, 0.7)));
  for (double v : z.value().data()) EXPECT_EQ(v, 0.7);
}

TEST(Conv2d, ChannelMismatchThrows) {
  ad::Tape tape;
  EXPECT_THROW(ad::conv2d(tape.constant(ad::Tensor({1, 2, 4, 4})), tape.constant(ad::Tensor({1, 3, 3, 3})),
                          tape.constant(ad::Tensor({1}))),
               kanslu::DimensionError);
}

TEST(Conv2d, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  auto r = gradcheck([](ad::Tape&, auto v) { return ad::conv2d(v[0], v[1], v[2]); },
                     {random_tensor({2, 2, 6, 6}, rng), random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng)});
  EXPECT_LT(r.max_error(), 1e-6);
}

TEST(ShapeAlgebra, ConvGrowsAndPoolHalves) {
  for (std::size_t h = 2; h <= 64; ++h) {
    ad::Tape tape;
    auto x = tape.constant(ad::Tensor({1, 1, h, h + 1}));
    auto y = ad::conv2d(x, tape.constant(ad::Tensor({1, 1, 3, 3})), tape.constant(ad::Tensor({1})));
    EXPECT_EQ(y.shape(), (ad::Shape{1, 1, h + 2, h + 3}));
    auto p = ad::maxpool2d(x);
    EXPECT_EQ(p.shape(), (ad::Shape{1, 1, h / 2, (h + 1) / 2}));
  }
}

TEST(Gelu, ExactErfForm) {
  ad::Tape tape;
  auto y = ad::gelu(tape.constant(ad::Tensor({4}, {0.0, 1.0, 30.0, -30.0})));
  EXPECT_EQ(y.value()[0], 0.0);
  EXPECT_NEAR(y.value()[1], 0.8413447460685429, 1e-12);
  EXPECT_NEAR(y.value()[2], 30.0, 1e-12);
  EXPECT_NEAR(y.value()[3], 0.0, 1e-12);
}

TEST(BatchNorm, ConstantChannelGivesBeta) {
  ad::Tape tape;
  ad::BatchNormStats stats(1);
  auto y = ad::batchnorm2d(tape.constant(ad::Tensor({2, 1, 2, 2}, 3.0)), tape.constant(ad::Tensor({1}, 2.0)),
                           tape.constant(ad::Tensor({1}, 0.5)), stats, true);
  for (double v : y.value().data()) EXPECT_NEAR(v, 0.5, 1e-12);
  EXPECT_NEAR(stats.running_mean[0], 0.3, 1e-12);
}

TEST(BatchNorm, NormalisesPerChannel) {
  Rng rng(3);
  ad::Tape tape;
  ad::BatchNormStats stats(2);
  auto y = ad::batchnorm2d(tape.constant(random_tensor({3, 2, 4, 4}, rng, -5, 9)), tape.constant(ad::Tensor({2}, 1.0)),
                           tape.constant(ad::Tensor({2}, 0.0)), stats, true);
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0, sq = 0;
    for (std::size_t b = 0; b < 3; ++b) {
      for (std::size_t i = 0; i < 16; ++i) {
        const double v = y.value()[(b * 2 + c) * 16 + i];
        mean += v;
        sq += v * v;
      }
    }
    mean /= 48;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(sq / 48 - mean * mean, 1.0, 1e-3);
  }
}

TEST(BatchNorm, DegenerateBatchThrows) {
  ad::Tape tape;
  ad::BatchNormStats stats(1);
  EXPECT_THROW(ad::batchnorm2d(tape.constant(ad::Tensor({1, 1, 1, 1})), tape.constant(ad::Tensor({1}, 1.0)),
                               tape.constant(ad::Tensor({1})), stats, true),
               kanslu::DegenerateBatchError);
}

TEST(BatchNorm, GradientMatchesFiniteDifferences) {
  Rng rng(4);
  auto r = gradcheck(
      [](ad::Tape&, auto v) {
        ad::BatchNormStats stats(2);
        return ad::batchnorm2d(v[0], v[1], v[2], stats, true);
      },
      {random_tensor({2, 2, 3, 3}, rng), random_tensor({2}, rng), random_tensor({2}, rng)});
  EXPECT_LT(r.max_error(), 1e-5);
}

TEST(LayerNorm, TrivialRows) {
  ad::Tape tape;
  auto y = ad::layernorm(tape.constant(ad::Tensor({2, 2}, {1, 1, 1, -1})), tape.constant(ad::Tensor({2}, 1.0)),
                         tape.constant(ad::Tensor({2})));
  EXPECT_NEAR(y.value()[0], 0.0, 1e-12);
  EXPECT_NEAR(y.value()[2], 1.0, 1e-4);
  EXPECT_NEAR(y.value()[3], -1.0, 1e-4);
  EXPECT_THROW(ad::layernorm(tape.constant(ad::Tensor({2, 1})), tape.constant(ad::Tensor({1})),
                             tape.constant(ad::Tensor({1}))),
               kanslu::DimensionError);
}

TEST(LayerNorm, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  auto r = gradcheck([](ad::Tape&, auto v) { return ad::layernorm(v[0], v[1], v[2]); },
                     {random_tensor({3, 5}, rng), random_tensor({5}, rng), random_tensor({5}, rng)});
  EXPECT_LT(r.max_error(), 1e-5);
}

TEST(MaxPool, WindowMaxAndTieRule) {
  ad::Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
  x.set_requires_grad(true);
  {
    ad::Tape tape;
    auto y = ad::maxpool2d(tape.leaf(x));
    EXPECT_EQ(y.value()[0], 4.0);
  }
  ad::Tensor c({1, 1, 2, 4}, 5.0);
  c.set_requires_grad(true);
  ad::Tape tape;
  auto y = ad::maxpool2d(tape.leaf(c));
  tape.backward(ad::sum(y));
  EXPECT_EQ((std::vector<double>(c.grad().begin(), c.grad().end())), (std::vector<double>{1, 0, 1, 0, 0, 0, 0, 0}));
}

TEST(MaxPool, GradientMatchesFiniteDifferences) {
  Rng rng(6);
  auto r = gradcheck([](ad::Tape&, auto v) { return ad::maxpool2d(v[0]); }, {random_tensor({1, 1, 4, 4}, rng)});
  EXPECT_LT(r.max_error(), 1e-6);
}

TEST(Dropout, IdentityCasesAndMean) {
  Rng rng(7);
  ad::Tape tape;
  auto x = tape.constant(ad::Tensor({1000000}, 1.0));
  auto same = ad::dropout(x, 0.0, true, rng);
  EXPECT_EQ(same.value().data()[17], 1.0);
  auto eval = ad::dropout(x, 0.7, false, rng);
  EXPECT_EQ(eval.value().data()[17], 1.0);
  auto y = ad::dropout(x, 0.5, true, rng);
  double mean = 0;
  for (double v : y.value().data()) mean += v;
  EXPECT_NEAR(mean / 1e6, 1.0, 0.01);
  EXPECT_THROW(ad::dropout(x, 1.0, true, rng), kanslu::ParameterError);
  EXPECT_THROW(ad::dropout(x, -0.1, true, rng), kanslu::ParameterError);
}

TEST(CrossEntropy, ValuesAndErrors) {
  ad::Tape tape;
  std::vector<std::size_t> t{2};
  auto l = ad::softmax_cross_entropy(tape.constant(ad::Tensor({1, 4})), t);
  EXPECT_NEAR(l.value()[0], std::log(4.0), 1e-12);
  auto l2 = ad::softmax_cross_entropy(tape.constant(ad::Tensor({1, 3}, {0, 0, 800})), t);
  EXPECT_NEAR(l2.value()[0], 0.0, 1e-12);
  std::vector<std::size_t> bad{4};
  EXPECT_THROW(ad::softmax_cross_entropy(tape.constant(ad::Tensor({1, 4})), bad), kanslu::IndexError);
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  Rng rng(8);
  std::vector<std::size_t> targets{0, 4, 2};
  auto r = gradcheck([&](ad::Tape&, auto v) { return ad::softmax_cross_entropy(v[0], targets); },
                     {random_tensor({3, 5}, rng, -3, 3)});
  EXPECT_LT(r.max_error(), 1e-6);
}

TEST(Backward, SumGivesOnesAndDisconnectedStaysAbsent) {
  ad::Tensor x({3}, {1, 2, 3});
  ad::Tensor unused({2}, 1.0);
  x.set_requires_grad(true);
  unused.set_requires_grad(true);
  ad::Tape tape;
  auto vx = tape.leaf(x);
  tape.leaf(unused);
  tape.backward(ad::sum(vx));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
  EXPECT_FALSE(unused.has_grad());
}

TEST(Backward, RejectsSecondCallAndNonScalarRoot) {
  ad::Tensor x({3}, 1.0);
  x.set_requires_grad(true);
  ad::Tape tape;
  auto vx = tape.leaf(x);
  EXPECT_THROW(tape.backward(vx), kanslu::ContractError);
  auto s = ad::sum(vx);
  tape.backward(s);
  EXPECT_THROW(tape.backward(s), kanslu::ContractError);
  tape.reset();
  EXPECT_EQ(tape.size(), 0u);
}

TEST(Backward, MatmulChainMatchesFiniteDifferences) {
  Rng rng(9);
  auto r = gradcheck([](ad::Tape&, auto v) { return ad::matmul(ad::matmul(v[0], v[1]), v[2]); },
                     {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng), random_tensor({2, 5}, rng)});
  EXPECT_LT(r.max_error(), 1e-6);
}

TEST(Primitives, GradcheckOverTwentySeeds) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    std::vector<std::size_t> tg{1, 0};
    EXPECT_LT(gradcheck([](ad::Tape&, auto v) { return ad::gelu(v[0]); }, {random_tensor({6}, rng, -3, 3)}, seed)
                  .max_error(),
              1e-4);
    EXPECT_LT(gradcheck([](ad::Tape&, auto v) { return ad::swish(v[0]); }, {random_tensor({6}, rng, -3, 3)}, seed)
                  .max_error(),
              1e-4);
    EXPECT_LT(gradcheck([](ad::Tape&, auto v) { return ad::linear(v[0], v[1], v[2]); },
                        {random_tensor({2, 3}, rng), random_tensor({4, 3}, rng), random_tensor({4}, rng)}, seed)
                  .max_error(),
              1e-4);
    EXPECT_LT(gradcheck([](ad::Tape&, auto v) { return ad::add(v[0], v[1]); },
                        {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)}, seed)
                  .max_error(),
              1e-4);
    EXPECT_LT(gradcheck([](ad::Tape&, auto v) { return ad::scale(v[0], v[1]); },
                        {random_tensor({2, 3}, rng), random_tensor({1}, rng)}, seed)
                  .max_error(),
              1e-4);
    EXPECT_LT(gradcheck([](ad::Tape&, auto v) { return ad::layernorm(v[0], v[1], v[2]); },
                        {random_tensor({2, 4}, rng), random_tensor({4}, rng), random_tensor({4}, rng)}, seed)
                  .max_error(),
              1e-4);
    EXPECT_LT(gradcheck([&](ad::Tape&, auto v) { return ad::softmax_cross_entropy(v[0], tg); },
                        {random_tensor({2, 3}, rng)}, seed)
                  .max_error(),
              1e-4);
    EXPECT_LT(gradcheck([](ad::Tape&, auto v) { return ad::maxpool2d(v[0]); }, {random_tensor({1, 2, 4, 4}, rng)},
                        seed)
                  .max_error(),
              1e-4);
  }
}

TEST(Forward, DeterministicUnderSeed) {
  auto run = [] {
    Rng data(11), drop(12);
    ad::Tape tape;
    auto x = tape.constant(random_tensor({4, 8}, data));
    return ad::dropout(ad::gelu(x), 0.3, true, drop).value().data()[5];
  };
  EXPECT_EQ(run(), run());
}
