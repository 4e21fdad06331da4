#include <gtest/gtest.h>

#include <cmath>

#include "panrestore/dpa.hpp"
#include "panrestore/grad_check.hpp"
#include "test_util.hpp"

namespace panrestore {
namespace {

TEST(Dpa, ZerosStayZero) {
  const auto y = dpa_forward(Tensor<float>::zeros({1, 3, 4, 4}));
  for (float v : y.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Dpa, HandExample) {
  const auto x = Tensor<double>::from_data({1, 1, 2, 2}, {1, 3, 5, 7});
  const auto y = dpa_forward(x);
  const double expect[] = {1.9811, 5.9433, 9.9055, 13.8677};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(y[i], expect[i], 1e-4);
  const double s = 1.0 / (1.0 + std::exp(-4.0)) + 1.0 / (1.0 + std::exp(-7.0));
  EXPECT_NEAR(s, 1.981103, 1e-6);
  EXPECT_NEAR(y[3], 7.0 * s, 1e-12);
}

TEST(Dpa, ConstantInput) {
  for (double c : {-2.0, 0.3, 5.0}) {
    const auto y = dpa_forward(Tensor<double>({1, 2, 3, 3}, c));
    const double expect = 2.0 / (1.0 + std::exp(-c)) * c;
    for (double v : y.data()) EXPECT_NEAR(v, expect, 1e-12);
  }
}

TEST(Dpa, AverageOnlyMode) {
  const auto x = Tensor<double>::from_data({1, 1, 2, 2}, {1, 3, 5, 7});
  const auto y = dpa_forward(x, DpaMode::kAverageOnly);
  const double s = 2.0 / (1.0 + std::exp(-4.0));
  EXPECT_NEAR(y[1], 3.0 * s, 1e-12);
}

TEST(Dpa, ChannelsAreIndependent) {
  Rng rng(1);
  const auto a = testing::random_tensor<double>({1, 1, 3, 3}, rng);
  const auto b = testing::random_tensor<double>({1, 1, 3, 3}, rng);
  const auto joint = dpa_forward(concat_channels<double>({a, b}));
  EXPECT_TRUE(testing::bit_equal(slice_channels(joint, 1, 1), dpa_forward(b)));
}

class DpaGradients : public ::testing::TestWithParam<int> {};

TEST_P(DpaGradients, MatchFiniteDifferences) {
  Rng rng(300 + GetParam());
  const auto x = testing::random_tensor<double>({1, 2, 3, 4}, rng, -2, 2);
  for (DpaMode mode : {DpaMode::kDualStream, DpaMode::kAverageOnly}) {
    const auto r =
        grad_check([&](const Tensor<double>& t) { return dpa_forward(t, mode); }, x, 1e-2, 1);
    EXPECT_LT(r.max_rel_error, 1e-4);
  }
}

INSTANTIATE_TEST_SUITE_P(Random, DpaGradients, ::testing::Range(0, 6));

}  // namespace
}  // namespace panrestore
