#include <gtest/gtest.h>

#include "panrestore/grad_check.hpp"
#include "panrestore/mhcb.hpp"
#include "test_util.hpp"

namespace panrestore {
namespace {

TEST(Mhcb, ZeroWeightsAreIdentity) {
  Rng rng(1);
  const auto x = testing::random_tensor<float>({1, 8, 16, 16}, rng);
  EXPECT_TRUE(testing::bit_equal(mhcb_forward(x, MhcbBlock<float>::zeros(8)), x));
  const std::vector<MhcbBlock<float>> two{MhcbBlock<float>::zeros(8), MhcbBlock<float>::zeros(8)};
  EXPECT_TRUE(testing::bit_equal(mhcb_stack(x, two), x));
  EXPECT_TRUE(testing::bit_equal(mhcb_stack(x, {}), x));
}

TEST(Mhcb, OnlyFirstBranchConvActiveLeavesInputUnchanged) {
  auto blk = MhcbBlock<double>::zeros(1);
  for (double& v : blk.conv3_a.weight.data()) v = 1.0;
  const auto x = Tensor<double>({1, 1, 3, 3}, 0.5);
  // X3 = fuse1_a(...) = 0, so the second stage adds nothing.
  EXPECT_TRUE(testing::bit_equal(mhcb_forward(x, blk), x));
}

TEST(Mhcb, HandEvaluationWithUnitFusion) {
  // fuse1_a picks X1 (first third); fuse1_b picks X3. Then out = X1 + x where
  // X1 = relu(conv3_a(x)) + x and conv3_a is the all-ones 3x3 kernel.
  auto blk = MhcbBlock<double>::zeros(1);
  for (double& v : blk.conv3_a.weight.data()) v = 1.0;
  blk.fuse1_a.weight[0] = 1.0;
  blk.fuse1_b.weight[0] = 1.0;
  const auto x = Tensor<double>({1, 1, 3, 3}, 1.0);
  const auto y = mhcb_forward(x, blk);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 1, 1), 9.0 + 1.0 + 1.0);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 0, 0), 4.0 + 1.0 + 1.0);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 0, 1), 6.0 + 1.0 + 1.0);
}

TEST(Mhcb, ShapeContract) {
  Rng rng(2);
  const std::vector<MhcbBlock<float>> blocks{MhcbBlock<float>::random(32, rng),
                                             MhcbBlock<float>::random(32, rng)};
  const auto y = mhcb_stack(testing::random_tensor<float>({1, 32, 64, 64}, rng), blocks);
  EXPECT_EQ(y.shape(), (Shape{1, 32, 64, 64}));
}

TEST(Mhcb, RejectsChannelMismatch) {
  Rng rng(3);
  EXPECT_THROW(mhcb_forward(Tensor<float>::ones({1, 4, 8, 8}), MhcbBlock<float>::random(8, rng)),
               std::invalid_argument);
}

TEST(Mhcb, ParameterNames) {
  Rng rng(4);
  std::vector<NamedTensor<float>> params;
  MhcbBlock<float>::random(4, rng).collect("stem", params);
  ASSERT_EQ(params.size(), 12u);
  EXPECT_EQ(params.front().name, "stem.conv3_a.weight");
}

class MhcbGradients : public ::testing::TestWithParam<int> {};

TEST_P(MhcbGradients, InputAndParameters) {
  Rng rng(200 + GetParam());
  const int c = 1 + GetParam() % 3;
  const auto blk = MhcbBlock<double>::random(c, rng);
  const auto x = testing::random_tensor<double>({1, c, 4, 5}, rng);
  const auto r = grad_check([&](const Tensor<double>& t) { return mhcb_forward(t, blk); }, x, 1e-2,
                            GetParam());
  EXPECT_LT(r.max_rel_error, 1e-4);
  std::vector<NamedTensor<double>> named;
  blk.collect("m", named);
  std::vector<Tensor<double>> params;
  for (auto& p : named) params.push_back(p.tensor.set_requires_grad(true));
  const auto pr = grad_check_params([&] { return sum(mhcb_forward(x, blk)); }, params, 1e-2, 6);
  EXPECT_LT(pr.max_rel_error, 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Random, MhcbGradients, ::testing::Range(0, 6));

}  // namespace
}  // namespace panrestore
