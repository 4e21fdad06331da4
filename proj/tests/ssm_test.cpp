#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <boost/multiprecision/cpp_dec_float.hpp>

#include "panrestore/grad_check.hpp"
#include "panrestore/ssm.hpp"
#include "test_util.hpp"

namespace panrestore {
namespace {

using testing::random_tensor;
using BigFloat = boost::multiprecision::cpp_dec_float_50;

TEST(Zoh, HalfLifeExample) {
  const auto z = discretize(-1.0, 1.0, std::log(2.0));
  EXPECT_NEAR(z.a_bar, 0.5, 1e-15);
  EXPECT_NEAR(z.b_bar, 0.5, 1e-15);
}

TEST(Zoh, SingularLimitIsContinuous) {
  for (double a : {-1e-3, -1e-5, -1e-8, -1e-12, -1e-300}) {
    const auto z = discretize(a, 0.7, 1.0);
    EXPECT_NEAR(z.a_bar, 1.0, 2e-3);
    EXPECT_NEAR(z.b_bar, 0.7, 1e-3);
  }
  const auto at_zero = discretize(0.0, 0.7, 1.0);
  EXPECT_EQ(at_zero.a_bar, 1.0);
  EXPECT_EQ(at_zero.b_bar, 0.7);
}

TEST(Zoh, TinyStepMatchesSecondOrderExpansion) {
  // b_bar = delta b (1 + delta a / 2 + O((delta a)^2)).
  const double delta = 1e-9;
  for (double a : {-1e-3, -1.0, -50.0}) {
    const auto z = discretize(a, 2.0, delta);
    const double expect = delta * 2.0 * (1.0 + delta * a / 2.0);
    EXPECT_NEAR(z.b_bar / expect, 1.0, 1e-15);
  }
  // For |a| below 2e-3 the first-order form delta * b is itself within 1e-12.
  EXPECT_NEAR(discretize(-1e-3, 2.0, delta).b_bar / (delta * 2.0), 1.0, 1e-12);
}

TEST(Zoh, PhiIsSmoothAcrossTheSeriesThreshold) {
  const double t = kZohSeriesThreshold;
  for (double z : {-t * (1 - 1e-9), -t * (1 + 1e-9), t * (1 - 1e-9), t * (1 + 1e-9)}) {
    const BigFloat zz(z);
    const double exact = static_cast<double>(boost::multiprecision::expm1(zz) / zz);
    EXPECT_NEAR(zoh_phi(z) / exact, 1.0, 1e-15);
    EXPECT_NEAR(zoh_phi_derivative(z), 0.5 + z / 3.0 + z * z / 8.0, 1e-11);
  }
}

TEST(Zoh, MatchesHighPrecisionOracle) {
  Rng rng(11);
  for (int k = 0; k < 200; ++k) {
    const double a = -std::exp(rng.uniform(std::log(1e-6), std::log(20.0)));
    const double delta = std::exp(rng.uniform(std::log(1e-7), std::log(2.0)));
    const double b = rng.uniform(-2.0, 2.0);
    const auto got = discretize(a, b, delta);
    const BigFloat za = BigFloat(delta) * BigFloat(a);
    const BigFloat a_bar = boost::multiprecision::exp(za);
    const BigFloat b_bar = (a_bar - 1) / za * BigFloat(delta) * BigFloat(b);
    EXPECT_NEAR(got.a_bar / static_cast<double>(a_bar), 1.0, 1e-10);
    EXPECT_NEAR(got.b_bar / static_cast<double>(b_bar), 1.0, 1e-10);
  }
}

TEST(Zoh, PrintedVariantDropsTheTimescale) {
  const auto z = discretize(-1.0, 1.0, 0.25, ZohMode::kPrintedExpA);
  EXPECT_NEAR(z.a_bar, std::exp(-0.25), 1e-15);
  EXPECT_NEAR(z.b_bar, 1.0 - std::exp(-1.0), 1e-15);
}

TEST(Zoh, RejectsNonPositiveStep) {
  EXPECT_THROW(discretize(-1.0, 1.0, 0.0), std::invalid_argument);
  EXPECT_THROW(discretize(-1.0, 1.0, -1.0), std::invalid_argument);
}

struct RandomScan {
  std::vector<double> x, a, b, c;
  double d;
  int m;
  ScanInputs<double> inputs() const { return {x, a, b, c, d, m}; }
};

RandomScan random_scan(Rng& rng, int length, int m) {
  RandomScan s;
  s.m = m;
  s.x.resize(length);
  s.a.resize(static_cast<std::size_t>(length) * m);
  s.b.resize(s.a.size());
  s.c.resize(s.a.size());
  for (double& v : s.x) v = rng.uniform(-1, 1);
  for (double& v : s.a) v = rng.uniform(0.0, 1.0);
  for (double& v : s.b) v = rng.uniform(-1, 1);
  for (double& v : s.c) v = rng.uniform(-1, 1);
  s.d = rng.uniform(-1, 1);
  return s;
}

TEST(Scan, HandLoop) {
  const std::vector<double> x{1, 1, 1}, a{0.5, 0.5, 0.5}, b{1, 1, 1}, c{1, 1, 1};
  std::vector<double> y(3), h(3);
  scan_recurrence<double>({x, a, b, c, 0.0, 1}, y, h);
  EXPECT_EQ(y, (std::vector<double>{1, 1.5, 1.75}));
  EXPECT_EQ(h, (std::vector<double>{1, 1.5, 1.75}));
}

TEST(Scan, MemorylessPassthroughAndZeroInput) {
  Rng rng(1);
  auto s = random_scan(rng, 9, 1);
  std::fill(s.a.begin(), s.a.end(), 0.0);
  std::fill(s.b.begin(), s.b.end(), 1.0);
  std::fill(s.c.begin(), s.c.end(), 1.0);
  s.d = 0;
  std::vector<double> y(9);
  scan_recurrence_fast<double>(s.inputs(), y);
  EXPECT_EQ(y, s.x);
  std::fill(s.x.begin(), s.x.end(), 0.0);
  scan_recurrence_fast<double>(s.inputs(), y);
  for (double v : y) EXPECT_EQ(v, 0.0);
}

TEST(Scan, FastMatchesNaiveAcrossBlockBoundaries) {
  Rng rng(2);
  for (int length : {1, 2, 63, 64, 65, 127, 128, 129, 300}) {
    for (int m : {1, 3, 16}) {
      const auto s = random_scan(rng, length, m);
      std::vector<double> y0(length), y1(length), h0(s.a.size()), h1(s.a.size());
      scan_recurrence<double>(s.inputs(), y0, h0);
      scan_recurrence_fast<double>(s.inputs(), y1, h1);
      for (int t = 0; t < length; ++t) EXPECT_NEAR(y0[t], y1[t], 1e-12);
      for (std::size_t i = 0; i < h0.size(); ++i) EXPECT_NEAR(h0[i], h1[i], 1e-12);
    }
  }
}

TEST(Scan, RejectsBadBuffers) {
  const std::vector<double> x{1, 2}, p{1, 2, 3};
  std::vector<double> y(2);
  EXPECT_THROW(scan_recurrence<double>({x, p, p, p, 0.0, 1}, y), std::invalid_argument);
}

TEST(Scan, BackwardMatchesFiniteDifferences) {
  Rng rng(3);
  for (int k = 0; k < 10; ++k) {
    const int length = rng.uniform_int(1, 20), m = rng.uniform_int(1, 4);
    const auto xt = random_tensor<double>({1, 1, length, 1}, rng);
    const auto a = random_tensor<double>({1, 1, 1, m}, rng, -2.0, -0.1);
    const auto b = random_tensor<double>({1, 1, length, m}, rng);
    const auto c = random_tensor<double>({1, 1, length, m}, rng);
    const auto delta = random_tensor<double>({1, 1, length, 1}, rng, 0.05, 1.0);
    const auto d = random_tensor<double>({1, 1, 1, 1}, rng);
    auto run = [&](const Tensor<double>& x, const Tensor<double>& aa, const Tensor<double>& bb,
                   const Tensor<double>& cc, const Tensor<double>& dl, const Tensor<double>& dd) {
      return scan_recurrence(x, discretize(aa, bb, dl), cc, dd);
    };
    EXPECT_LT(grad_check([&](const Tensor<double>& t) { return run(t, a, b, c, delta, d); }, xt,
                         1e-2, k).max_rel_error, 1e-4);
    EXPECT_LT(grad_check([&](const Tensor<double>& t) { return run(xt, t, b, c, delta, d); }, a,
                         1e-2, k).max_rel_error, 1e-4);
    EXPECT_LT(grad_check([&](const Tensor<double>& t) { return run(xt, a, t, c, delta, d); }, b,
                         1e-2, k).max_rel_error, 1e-4);
    EXPECT_LT(grad_check([&](const Tensor<double>& t) { return run(xt, a, b, t, delta, d); }, c,
                         1e-2, k).max_rel_error, 1e-4);
    EXPECT_LT(grad_check([&](const Tensor<double>& t) { return run(xt, a, b, c, t, d); }, delta,
                         1e-2, k).max_rel_error, 1e-4);
    EXPECT_LT(grad_check([&](const Tensor<double>& t) { return run(xt, a, b, c, delta, t); }, d,
                         1e-2, k).max_rel_error, 1e-4);
  }
}

TEST(Directions, Examples) {
  EXPECT_EQ(direction_perm(ScanDirection::kRowForward, 2, 2), (std::vector<int>{0, 1, 2, 3}));
  EXPECT_EQ(direction_perm(ScanDirection::kDiagForward, 2, 3),
            (std::vector<int>{0, 1, 3, 2, 4, 5}));
  EXPECT_EQ(direction_perm(ScanDirection::kColForward, 2, 3),
            (std::vector<int>{0, 3, 1, 4, 2, 5}));
}

TEST(Directions, BijectionsWithReversalSymmetry) {
  const std::pair<ScanDirection, ScanDirection> pairs[] = {
      {ScanDirection::kRowForward, ScanDirection::kRowBackward},
      {ScanDirection::kColForward, ScanDirection::kColBackward},
      {ScanDirection::kDiagForward, ScanDirection::kDiagBackward}};
  for (int h : {1, 2, 3, 7, 16}) {
    for (int w : {1, 4, 5, 16}) {
      for (const auto& [fwd, bwd] : pairs) {
        auto p = direction_perm(fwd, h, w);
        auto q = direction_perm(bwd, h, w);
        std::reverse(q.begin(), q.end());
        EXPECT_EQ(p, q);
        const auto inv = invert_perm(p);
        for (int i = 0; i < h * w; ++i) EXPECT_EQ(p[inv[i]], i);
        std::sort(p.begin(), p.end());
        for (int i = 0; i < h * w; ++i) EXPECT_EQ(p[i], i);
      }
    }
  }
}

TEST(Directions, ParseAndFormat) {
  EXPECT_EQ(parse_direction_set("all").size(), 6u);
  const auto two = parse_direction_set("row_fwd,diag_bwd");
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[1], ScanDirection::kDiagBackward);
  EXPECT_EQ(format_direction_set(two), "row_fwd,diag_bwd");
  EXPECT_THROW(parse_direction_set("row_fwd,sideways"), std::invalid_argument);
  EXPECT_THROW(parse_direction_set(""), std::invalid_argument);
  EXPECT_THROW(parse_direction_set("row_fwd,row_fwd"), std::invalid_argument);
}

struct ScanMaps {
  Tensor<double> u, delta, a_log, b, c, d;
};

ScanMaps random_maps(Rng& rng, int ch, int m, int h, int w) {
  return {random_tensor<double>({1, ch, h, w}, rng),
          random_tensor<double>({1, ch, h, w}, rng, 0.05, 0.5),
          random_tensor<double>({1, 1, ch, m}, rng, -1.0, 1.0),
          random_tensor<double>({1, m, h, w}, rng),
          random_tensor<double>({1, m, h, w}, rng),
          random_tensor<double>({1, ch, 1, 1}, rng)};
}

TEST(SelectiveScan2d, MemorylessCaseIsPositionIndependent) {
  // a_log large makes a_bar underflow to zero, so y = (d + sum_m c_m b_bar_m) u.
  const int ch = 2, m = 3, h = 3, w = 4;
  Rng rng(4);
  ScanMaps s = random_maps(rng, ch, m, h, w);
  for (double& v : s.a_log.data()) v = std::log(1e6);
  for (double& v : s.delta.data()) v = 0.01;  // delta * |A| = 1e4, exp underflows
  const double bm[] = {0.3, -0.2, 0.5}, cm[] = {1.0, 0.5, -2.0};
  for (int k = 0; k < m; ++k) {
    for (int p = 0; p < h * w; ++p) {
      s.b[k * h * w + p] = bm[k];
      s.c[k * h * w + p] = cm[k];
    }
  }
  const ScanDirection dir[] = {ScanDirection::kRowForward};
  const auto y = selective_scan_2d(s.u, s.delta, s.a_log, s.b, s.c, s.d, dir);
  for (int c = 0; c < ch; ++c) {
    double gain = s.d[c];
    for (int k = 0; k < m; ++k) gain += cm[k] * discretize(-1e6, bm[k], 0.01).b_bar;
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) EXPECT_NEAR(y.at(0, c, i, j), gain * s.u.at(0, c, i, j), 1e-14);
    }
  }
}

TEST(SelectiveScan2d, SixDirectionsSumSingleDirectionCalls) {
  Rng rng(5);
  const ScanMaps s = random_maps(rng, 3, 4, 2, 2);
  const auto all = selective_scan_2d(s.u, s.delta, s.a_log, s.b, s.c, s.d, kAllDirections);
  Tensor<double> total = Tensor<double>::zeros(all.shape());
  for (ScanDirection dir : kAllDirections) {
    const ScanDirection one[] = {dir};
    total = add(total, selective_scan_2d(s.u, s.delta, s.a_log, s.b, s.c, s.d, one));
  }
  EXPECT_TRUE(testing::bit_equal(all, total));
  const auto mean = selective_scan_2d(s.u, s.delta, s.a_log, s.b, s.c, s.d, kAllDirections,
                                      DirectionMerge::kMean);
  for (std::size_t i = 0; i < mean.numel(); ++i) EXPECT_NEAR(mean[i] * 6.0, all[i], 1e-12);
}

TEST(SelectiveScan2d, RowForwardMatchesScalarRecurrence) {
  Rng rng(6);
  const int ch = 2, m = 3, h = 2, w = 3;
  const ScanMaps s = random_maps(rng, ch, m, h, w);
  const ScanDirection dir[] = {ScanDirection::kRowForward};
  const auto y = selective_scan_2d(s.u, s.delta, s.a_log, s.b, s.c, s.d, dir);
  for (int c = 0; c < ch; ++c) {
    std::vector<double> state(m, 0.0);
    for (int t = 0; t < h * w; ++t) {
      const double dt = s.delta[c * h * w + t];
      double out = s.d[c] * s.u[c * h * w + t];
      for (int k = 0; k < m; ++k) {
        const auto z = discretize(-std::exp(s.a_log[c * m + k]), s.b[k * h * w + t], dt);
        state[k] = z.a_bar * state[k] + z.b_bar * s.u[c * h * w + t];
        out += s.c[k * h * w + t] * state[k];
      }
      EXPECT_NEAR(y[c * h * w + t], out, 1e-12);
    }
  }
}

TEST(Ssm2d, ShapeContract) {
  Rng rng(7);
  const auto blk = Ssm2dBlock<float>::random(16, 8, parse_direction_set("all"), rng);
  const auto y = ssm_2d(random_tensor<float>({1, 16, 8, 8}, rng), blk);
  EXPECT_EQ(y.shape(), (Shape{1, 16, 8, 8}));
}

class Ssm2dGradients : public ::testing::TestWithParam<int> {};

TEST_P(Ssm2dGradients, InputsAndParameters) {
  Rng rng(400 + GetParam());
  const int ch = 1 + GetParam() % 3, m = 1 + GetParam() % 4;
  const int h = 1 + rng.uniform_int(1, 3), w = 1 + rng.uniform_int(1, 3);
  const ScanMaps s = random_maps(rng, ch, m, h, w);
  const auto dirs = parse_direction_set("all");
  auto op = [&](int which) {
    return [&, which](const Tensor<double>& t) {
      const Tensor<double>* in[] = {&s.u, &s.delta, &s.a_log, &s.b, &s.c, &s.d};
      auto pick = [&](int k) { return k == which ? t : *in[k]; };
      return selective_scan_2d(pick(0), pick(1), pick(2), pick(3), pick(4), pick(5), dirs);
    };
  };
  const Tensor<double>* in[] = {&s.u, &s.delta, &s.a_log, &s.b, &s.c, &s.d};
  for (int k = 0; k < 6; ++k) {
    EXPECT_LT(grad_check(op(k), *in[k], 1e-2, GetParam()).max_rel_error, 1e-4) << "input " << k;
  }
  const auto blk = Ssm2dBlock<double>::random(ch, m, dirs, rng);
  const auto x = random_tensor<double>({1, ch, h, w}, rng);
  EXPECT_LT(grad_check([&](const Tensor<double>& t) { return ssm_2d(t, blk); }, x, 1e-2, 1)
                .max_rel_error,
            1e-4);
}

INSTANTIATE_TEST_SUITE_P(Random, Ssm2dGradients, ::testing::Range(0, 6));

}  // namespace
}  // namespace panrestore
