#include <gtest/gtest.h>

#include "panrestore/grad_check.hpp"
#include "panrestore/ops.hpp"
#include "test_util.hpp"

namespace panrestore {
namespace {

TEST(Shape, IndexIsRowMajor) {
  const Shape s{2, 3, 4, 5};
  EXPECT_EQ(s.numel(), 120u);
  EXPECT_EQ(s.index(1, 2, 3, 4), 119u);
  EXPECT_EQ(s.index(0, 1, 0, 0), 20u);
}

TEST(Tensor, FromDataRejectsWrongSize) {
  EXPECT_THROW(Tensor<float>::from_data({1, 1, 2, 2}, {1, 2, 3}), std::invalid_argument);
}

TEST(Tensor, CloneIsDeep) {
  auto a = Tensor<float>::ones({1, 1, 2, 2});
  auto b = a.clone();
  b[0] = 5;
  EXPECT_EQ(a[0], 1.0f);
}

TEST(Tensor, CastRoundTrips) {
  auto a = Tensor<double>::from_data({1, 1, 1, 3}, {0.5, -1.25, 3.0});
  auto b = a.cast<float>().cast<double>();
  EXPECT_TRUE(testing::bit_equal(a, b));
}

TEST(Autograd, ReluGradient) {
  auto x = Tensor<double>::from_data({1, 1, 1, 2}, {2.0, -2.0});
  x.set_requires_grad(true);
  sum(relu(x)).backward();
  EXPECT_EQ(x.grad()[0], 1.0);
  EXPECT_EQ(x.grad()[1], 0.0);
}

TEST(Autograd, SigmoidGradientAtZero) {
  auto x = Tensor<double>::zeros({1, 1, 1, 1});
  x.set_requires_grad(true);
  sigmoid(x).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.25);
}

TEST(Autograd, GradientAccumulatesOverReuse) {
  auto x = Tensor<double>::from_data({1, 1, 1, 1}, {3.0});
  x.set_requires_grad(true);
  sum(add(x, x)).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
}

TEST(Autograd, NoGradGuardSkipsGraph) {
  auto x = Tensor<double>::ones({1, 1, 2, 2});
  x.set_requires_grad(true);
  Tensor<double> y;
  {
    NoGradGuard guard;
    y = relu(x);
  }
  EXPECT_FALSE(y.requires_grad());
}

TEST(Autograd, BackwardNeedsScalar) {
  auto x = Tensor<double>::ones({1, 1, 2, 2});
  x.set_requires_grad(true);
  EXPECT_THROW(relu(x).backward(), std::exception);
}

TEST(GradCheck, Conv2dSmallInstance) {
  Rng rng(3);
  const auto p = testing::random_conv<double>(2, 3, 3, rng);
  const auto x = testing::random_tensor<double>({1, 2, 4, 4}, rng);
  const auto r = grad_check([&](const Tensor<double>& in) { return conv2d(in, p); }, x, 1e-2, 1);
  EXPECT_LT(r.max_rel_error, 1e-4);
  EXPECT_EQ(r.checked, x.numel());
}

TEST(GradCheck, DetectsWrongGradient) {
  // A forward that silently detaches its input has zero analytic gradient.
  Rng rng(4);
  const auto x = testing::random_tensor<double>({1, 1, 2, 2}, rng, 0.5, 1.0);
  const auto r = grad_check(
      [](const Tensor<double>& in) {
        Tensor<double> d = in.detach();
        return add(d, Tensor<double>::zeros(d.shape()));
      },
      x, 1e-5, 1);
  EXPECT_GT(r.max_rel_error, 0.5);
}

}  // namespace
}  // namespace panrestore
