#include <gtest/gtest.h>

#include <cmath>

#include "panrestore/grad_check.hpp"
#include "panrestore/ops.hpp"
#include "test_util.hpp"

namespace panrestore {
namespace {

using testing::random_tensor;

TEST(Conv2d, IdentityKernel) {
  Rng rng(1);
  auto p = ConvParams<float>::zeros(1, 1, 1);
  p.weight[0] = 1.0f;
  const auto x = random_tensor<float>({1, 1, 5, 7}, rng);
  EXPECT_TRUE(testing::bit_equal(conv2d(x, p), x));
}

TEST(Conv2d, AllOnesKernelCountsNeighbours) {
  auto p = ConvParams<float>::zeros(1, 1, 3);
  for (float& v : p.weight.data()) v = 1.0f;
  const auto y = conv2d(Tensor<float>::ones({1, 1, 3, 3}), p);
  EXPECT_FLOAT_EQ(y.at(0, 0, 1, 1), 9.0f);
  EXPECT_FLOAT_EQ(y.at(0, 0, 0, 0), 4.0f);
  EXPECT_FLOAT_EQ(y.at(0, 0, 0, 2), 4.0f);
  EXPECT_FLOAT_EQ(y.at(0, 0, 2, 0), 4.0f);
  EXPECT_FLOAT_EQ(y.at(0, 0, 2, 2), 4.0f);
  EXPECT_FLOAT_EQ(y.at(0, 0, 0, 1), 6.0f);
}

TEST(Conv2d, ZeroWeightsGiveZeros) {
  Rng rng(2);
  const auto y = conv2d(random_tensor<float>({2, 3, 4, 4}, rng), ConvParams<float>::zeros(3, 5, 5));
  EXPECT_EQ(y.shape(), (Shape{2, 5, 4, 4}));
  for (float v : y.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Conv2d, RejectsChannelMismatchAndEvenKernels) {
  EXPECT_THROW(conv2d(Tensor<float>::ones({1, 2, 3, 3}), ConvParams<float>::zeros(3, 1, 3)),
               std::invalid_argument);
  EXPECT_THROW(ConvParams<float>::zeros(1, 1, 2), std::invalid_argument);
}

TEST(Activations, ScalarValues) {
  const auto x = Tensor<double>::from_data({1, 1, 1, 3}, {-2.0, 0.0, 4.0});
  const auto r = relu(x);
  EXPECT_EQ(r[0], 0.0);
  const auto s = sigmoid(x);
  EXPECT_DOUBLE_EQ(s[1], 0.5);
  EXPECT_NEAR(s[2], 0.982014, 1e-6);
}

TEST(Activations, SigmoidIsStableForLargeInputs) {
  const auto s = sigmoid(Tensor<double>::from_data({1, 1, 1, 2}, {-800.0, 800.0}));
  EXPECT_EQ(s[0], 0.0);
  EXPECT_EQ(s[1], 1.0);
}

TEST(Pools, HandExample) {
  const auto x = Tensor<float>::from_data({1, 1, 2, 2}, {1, 3, 5, 7});
  EXPECT_FLOAT_EQ(global_avg_pool(x).item(), 4.0f);
  EXPECT_FLOAT_EQ(global_max_pool(x).item(), 7.0f);
  EXPECT_EQ(global_avg_pool(x).shape(), (Shape{1, 1, 1, 1}));
}

TEST(Pools, ConstantAndZero) {
  const auto c = Tensor<float>({2, 3, 4, 4}, 2.5f);
  const auto avg = global_avg_pool(c);
  const auto mx = global_max_pool(c);
  for (float v : avg.data()) EXPECT_FLOAT_EQ(v, 2.5f);
  for (float v : mx.data()) EXPECT_FLOAT_EQ(v, 2.5f);
  const auto z = Tensor<float>::zeros({1, 1, 3, 3});
  EXPECT_EQ(global_avg_pool(z).item(), 0.0f);
  EXPECT_EQ(global_max_pool(z).item(), 0.0f);
}

TEST(Pools, MaxPool2x2) {
  const auto x = Tensor<float>::from_data({1, 1, 2, 4}, {1, 2, 5, 0, 3, 4, -1, -2});
  const auto y = max_pool2x2(x);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1, 2}));
  EXPECT_EQ(y[0], 4.0f);
  EXPECT_EQ(y[1], 5.0f);
}

TEST(Structural, ConcatAddScale) {
  Rng rng(5);
  const auto a = random_tensor<float>({1, 2, 3, 3}, rng);
  const auto b = random_tensor<float>({1, 3, 3, 3}, rng);
  const auto c = concat_channels<float>({a, b});
  EXPECT_EQ(c.shape().c, 5);
  EXPECT_TRUE(testing::bit_equal(slice_channels(c, 2, 3), b));
  EXPECT_TRUE(testing::bit_equal(add(a, Tensor<float>::zeros(a.shape())), a));
  EXPECT_TRUE(testing::bit_equal(mul_channel_scale(a, Tensor<float>::ones({1, 2, 1, 1})), a));
  EXPECT_THROW(add(a, b), std::invalid_argument);
}

TEST(Resize, PixelShuffleDefinition) {
  const auto x = Tensor<float>::from_data({1, 4, 1, 1}, {1, 2, 3, 4});
  const auto y = pixel_shuffle(x, 2);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  EXPECT_EQ(y.at(0, 0, 0, 0), 1.0f);
  EXPECT_EQ(y.at(0, 0, 0, 1), 2.0f);
  EXPECT_EQ(y.at(0, 0, 1, 0), 3.0f);
  EXPECT_EQ(y.at(0, 0, 1, 1), 4.0f);
}

TEST(Resize, ShuffleUnshuffleRoundTrip) {
  Rng rng(6);
  for (int r : {2, 3, 4}) {
    const auto x = random_tensor<float>({2, 2 * r * r, 3, 5}, rng);
    EXPECT_TRUE(testing::bit_equal(pixel_unshuffle(pixel_shuffle(x, r), r), x));
  }
}

TEST(Resize, BilinearKeepsConstants) {
  const auto x = Tensor<float>({1, 2, 8, 8}, 0.375f);
  for (double f : {0.5, 2.0, 4.0}) {
    const auto y = bilinear_resize(x, f);
    EXPECT_EQ(y.shape().h, static_cast<int>(std::lround(8 * f)));
    for (float v : y.data()) EXPECT_FLOAT_EQ(v, 0.375f);
  }
}

TEST(LayerNorm, NormalizesAcrossChannels) {
  Rng rng(7);
  const auto x = random_tensor<double>({1, 4, 3, 3}, rng, -3, 3);
  const auto y = channel_layer_norm(x, Tensor<double>::ones({1, 4, 1, 1}),
                                    Tensor<double>::zeros({1, 4, 1, 1}));
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double m = 0, v = 0;
      for (int c = 0; c < 4; ++c) m += y.at(0, c, i, j) / 4;
      for (int c = 0; c < 4; ++c) v += (y.at(0, c, i, j) - m) * (y.at(0, c, i, j) - m) / 4;
      EXPECT_NEAR(m, 0.0, 1e-12);
      EXPECT_NEAR(v, 1.0, 1e-3);
    }
  }
}

TEST(L1Loss, Examples) {
  const auto a = Tensor<double>::from_data({1, 1, 1, 2}, {1, 2});
  const auto b = Tensor<double>::from_data({1, 1, 1, 2}, {0, 4});
  EXPECT_DOUBLE_EQ(l1_loss(a, b).item(), 1.5);
  EXPECT_DOUBLE_EQ(l1_loss(a, a).item(), 0.0);
  const auto c = Tensor<double>::from_data({1, 1, 1, 2}, {1.25, 2.25});
  EXPECT_DOUBLE_EQ(l1_loss(c, a).item(), 0.25);
}

// Central-difference checks on small random shapes, one suite per op.
class OpGradients : public ::testing::TestWithParam<int> {};

TEST_P(OpGradients, MatchFiniteDifferences) {
  Rng rng(100 + GetParam());
  const Shape s{1, 3, 1 + rng.uniform_int(1, 4), 1 + rng.uniform_int(1, 4)};
  const auto x = testing::random_away_from_zero(s, rng);
  const auto p = testing::random_conv<double>(3, 2, 3, rng);
  const auto gamma = random_tensor<double>({1, 3, 1, 1}, rng, 0.5, 1.5);
  const auto beta = random_tensor<double>({1, 3, 1, 1}, rng);
  const std::pair<const char*, DoubleOp> ops[] = {
      {"conv2d", [&](const Tensor<double>& t) { return conv2d(t, p); }},
      {"relu", [](const Tensor<double>& t) { return relu(t); }},
      {"sigmoid", [](const Tensor<double>& t) { return sigmoid(t); }},
      {"softplus", [](const Tensor<double>& t) { return softplus(t); }},
      {"avg_pool", [](const Tensor<double>& t) { return global_avg_pool(t); }},
      {"max_pool", [](const Tensor<double>& t) { return global_max_pool(t); }},
      {"layer_norm", [&](const Tensor<double>& t) { return channel_layer_norm(t, gamma, beta); }},
      {"channel_scale",
       [](const Tensor<double>& t) { return mul_channel_scale(t, sigmoid(global_avg_pool(t))); }},
      {"bilinear_x2", [](const Tensor<double>& t) { return bilinear_resize(t, 2.0); }},
      {"shuffle", [](const Tensor<double>& t) { return pixel_shuffle(concat_channels<double>({t, t, t, t}), 2); }},
  };
  for (const auto& [name, op] : ops) {
    const auto r = grad_check(op, x, 1e-2, GetParam());
    EXPECT_LT(r.max_rel_error, 1e-4) << name << " on " << s.str();
  }
}

INSTANTIATE_TEST_SUITE_P(Random, OpGradients, ::testing::Range(0, 8));

}  // namespace
}  // namespace panrestore
