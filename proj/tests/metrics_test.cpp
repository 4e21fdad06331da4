#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "panrestore/metrics.hpp"
#include "test_util.hpp"

namespace panrestore {
namespace {

Tensor<float> constant(Shape s, float v) { return Tensor<float>(s, v); }

// Direct single-plane SSIM: Gaussian-weighted statistics over every valid
// 11x11 window, recomputed from scratch per window.
double ssim_oracle(const std::vector<double>& a, const std::vector<double>& b, int h, int w) {
  double g[11], norm = 0;
  for (int k = 0; k < 11; ++k) norm += g[k] = std::exp(-(k - 5) * (k - 5) / (2 * 1.5 * 1.5));
  const double c1 = (0.01 * 255) * (0.01 * 255), c2 = (0.03 * 255) * (0.03 * 255);
  double total = 0;
  int count = 0;
  for (int y = 0; y + 11 <= h; ++y) {
    for (int x = 0; x + 11 <= w; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < 11; ++i) {
        for (int j = 0; j < 11; ++j) {
          const double wt = g[i] * g[j] / (norm * norm);
          const double va = a[(y + i) * w + x + j], vb = b[(y + i) * w + x + j];
          ma += wt * va;
          mb += wt * vb;
          saa += wt * va * va;
          sbb += wt * vb * vb;
          sab += wt * va * vb;
        }
      }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return total / count;
}

TEST(Mse, Examples) {
  const Shape s{1, 1, 4, 4};
  EXPECT_EQ(mse(constant(s, 10), constant(s, 10)), 0.0);
  EXPECT_DOUBLE_EQ(mse(constant(s, 100), constant(s, 116)), 256.0);
  EXPECT_DOUBLE_EQ(mae(constant(s, 100), constant(s, 116)), 16.0);
  const auto a = Tensor<float>::from_data({1, 1, 1, 2}, {0, 255});
  const auto b = Tensor<float>::from_data({1, 1, 1, 2}, {255, 0});
  EXPECT_DOUBLE_EQ(mse(a, b), 65025.0);
  EXPECT_DOUBLE_EQ(mae(a, b), 255.0);
  EXPECT_THROW(mse(a, constant(s, 0)), std::invalid_argument);
}

TEST(Psnr, Examples) {
  const Shape s{1, 3, 4, 4};
  EXPECT_EQ(psnr(constant(s, 7), constant(s, 7)), 100.0);
  EXPECT_NEAR(psnr(constant(s, 100), constant(s, 116)), 24.048404, 1e-6);
  EXPECT_NEAR(psnr(constant(s, 100), constant(s, 116)), 10 * std::log10(65025.0 / 256.0), 1e-12);
  EXPECT_NEAR(psnr_from_mse(65025.0), 0.0, 1e-12);
  EXPECT_EQ(psnr_from_mse(1e-11), 100.0);
}

TEST(Ssim, SelfComparisonIsOne) {
  Rng rng(1);
  const auto x = testing::random_tensor<float>({1, 3, 16, 16}, rng, 0, 255);
  EXPECT_NEAR(ssim(x, x), 1.0, 1e-12);
}

TEST(Ssim, ConstantImagesClosedForm) {
  const Shape s{1, 1, 16, 16};
  const double c1 = std::pow(0.01 * 255, 2);
  const double expect = (2 * 100.0 * 150.0 + c1) / (100.0 * 100.0 + 150.0 * 150.0 + c1);
  EXPECT_NEAR(expect, 0.923092, 1e-6);
  EXPECT_NEAR(ssim(constant(s, 100), constant(s, 150)), expect, 1e-10);
}

TEST(Ssim, MatchesDirectWindowOracle) {
  Rng rng(2);
  for (int k = 0; k < 5; ++k) {
    const int h = 11 + rng.uniform_int(0, 8), w = 11 + rng.uniform_int(0, 8);
    const auto a = testing::random_tensor<float>({1, 2, h, w}, rng, 0, 255);
    auto b = a.clone();
    for (float& v : b.data()) v = std::clamp(v + static_cast<float>(rng.normal(0, 20)), 0.f, 255.f);
    double expect = 0;
    for (int c = 0; c < 2; ++c) {
      std::vector<double> pa, pb;
      for (int i = 0; i < h * w; ++i) {
        pa.push_back(a[c * h * w + i]);
        pb.push_back(b[c * h * w + i]);
      }
      expect += ssim_oracle(pa, pb, h, w) / 2;
    }
    EXPECT_NEAR(ssim(a, b), expect, 1e-9);
  }
}

TEST(Ssim, ColourImagesUseLuma) {
  Rng rng(3);
  const auto a = testing::random_tensor<float>({1, 3, 12, 12}, rng, 0, 255);
  const auto b = testing::random_tensor<float>({1, 3, 12, 12}, rng, 0, 255);
  auto luma = [](const Tensor<float>& t) {
    std::vector<double> out(144);
    for (int i = 0; i < 144; ++i) out[i] = 0.299 * t[i] + 0.587 * t[144 + i] + 0.114 * t[288 + i];
    return out;
  };
  EXPECT_NEAR(ssim(a, b), ssim_oracle(luma(a), luma(b), 12, 12), 1e-5);
}

TEST(Ssim, DistortionLowersScoreAndSmallImagesAreRejected) {
  Rng rng(4);
  const auto x = testing::random_tensor<float>({1, 1, 16, 16}, rng, 0, 255);
  auto inv = x.clone();
  for (float& v : inv.data()) v = 255 - v;
  EXPECT_LT(ssim(x, inv), 1.0);
  EXPECT_THROW(ssim(constant({1, 1, 8, 8}, 1), constant({1, 1, 8, 8}, 1)), std::invalid_argument);
}

Tensor<float> rgb_everywhere(float r, float g, float b) {
  Tensor<float> t({1, 3, 3, 3});
  for (int i = 0; i < 9; ++i) {
    t[i] = r;
    t[9 + i] = g;
    t[18 + i] = b;
  }
  return t;
}

TEST(Sam, Examples) {
  const auto red = rgb_everywhere(1, 0, 0);
  EXPECT_EQ(sam(red, red), 0.0);
  EXPECT_NEAR(sam(red, rgb_everywhere(0, 1, 0)), M_PI / 2, 1e-12);
  EXPECT_NEAR(sam(rgb_everywhere(1, 1, 0), red), 0.785398, 1e-6);
  EXPECT_NEAR(sam(rgb_everywhere(1, 1, 0), red), std::acos(1 / std::sqrt(2.0)), 1e-15);
  EXPECT_NEAR(sam(rgb_everywhere(-1, 0, 0), red), M_PI, 1e-15);
}

TEST(Sam, AgreesWithArccosOnRandomVectors) {
  Rng rng(6);
  const auto a = testing::random_tensor<float>({1, 4, 5, 5}, rng, 0.1, 1);
  const auto b = testing::random_tensor<float>({1, 4, 5, 5}, rng, 0.1, 1);
  double expect = 0;
  for (int i = 0; i < 25; ++i) {
    double dot = 0, na = 0, nb = 0;
    for (int c = 0; c < 4; ++c) {
      dot += double(a[c * 25 + i]) * b[c * 25 + i];
      na += double(a[c * 25 + i]) * a[c * 25 + i];
      nb += double(b[c * 25 + i]) * b[c * 25 + i];
    }
    expect += std::acos(dot / std::sqrt(na * nb)) / 25;
  }
  EXPECT_NEAR(sam(a, b), expect, 1e-12);
}

TEST(Sam, ZeroVectorsAreSkipped) {
  auto a = rgb_everywhere(1, 0, 0);
  auto b = rgb_everywhere(0, 1, 0);
  for (int c = 0; c < 3; ++c) a[c * 9] = 0;  // pixel 0 is black in a
  const auto r = sam_detailed(a, b);
  EXPECT_EQ(r.skipped, 1u);
  EXPECT_NEAR(r.mean_rad, M_PI / 2, 1e-12);
  EXPECT_THROW(sam(Tensor<float>::zeros({1, 3, 2, 2}), Tensor<float>::zeros({1, 3, 2, 2})),
               std::invalid_argument);
}

TEST(Metrics, SelfComparisonFixedPoint) {
  Rng rng(5);
  const auto x = testing::random_tensor<float>({1, 3, 16, 16}, rng, 1, 255);
  const auto m = compute_metrics("x", x, x);
  EXPECT_EQ(m.psnr, 100.0);
  EXPECT_NEAR(m.ssim, 1.0, 1e-12);
  EXPECT_EQ(m.mse, 0.0);
  EXPECT_EQ(m.mae, 0.0);
  EXPECT_EQ(m.sam, 0.0);
}

TEST(Metrics, ReportMeanAndCsv) {
  MetricsReport report;
  report.images.push_back({"a", 30, 0.9, 10, 2, 0.1});
  report.images.push_back({"b", 40, 0.7, 20, 4, 0.3});
  const auto m = report.mean();
  EXPECT_DOUBLE_EQ(m.psnr, 35);
  EXPECT_DOUBLE_EQ(m.mae, 3);
  const auto path = std::filesystem::temp_directory_path() / "panrestore_report.csv";
  report.write_csv(path);
  std::ifstream is(path);
  std::string header, first;
  std::getline(is, header);
  std::getline(is, first);
  EXPECT_EQ(header, "image_id,psnr,ssim,mse,mae,sam");
  EXPECT_EQ(first.substr(0, 5), "a,30,");
  std::filesystem::remove(path);
}

int warmth(std::array<std::uint8_t, 3> c) { return c[0] + (255 - c[1]) + (255 - c[2]); }

TEST(Heatmap, Colormap) {
  EXPECT_EQ(heat_color(0.0), (std::array<std::uint8_t, 3>{0, 0, 255}));
  EXPECT_EQ(heat_color(0.5), (std::array<std::uint8_t, 3>{255, 255, 0}));
  EXPECT_EQ(heat_color(1.0), (std::array<std::uint8_t, 3>{255, 0, 0}));
}

TEST(Heatmap, EqualImagesAreUniformBlue) {
  const auto x = constant({1, 3, 4, 5}, 42);
  const auto img = error_heatmap(x, x);
  EXPECT_EQ(img.width, 5);
  EXPECT_EQ(img.height, 4);
  for (int y = 0; y < 4; ++y) {
    for (int x2 = 0; x2 < 5; ++x2) EXPECT_EQ(img.pixel(x2, y), heat_color(0));
  }
}

TEST(Heatmap, SingleDifferingPixel) {
  const auto a = constant({1, 1, 4, 4}, 10);
  auto b = a.clone();
  b[1 * 4 + 2] = 200;
  const auto img = error_heatmap(b, a);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      EXPECT_EQ(img.pixel(x, y), (y == 1 && x == 2) ? heat_color(1) : heat_color(0));
    }
  }
}

TEST(Heatmap, RampIsMonotone) {
  const int w = 64;
  const auto label = constant({1, 1, 2, w}, 0);
  auto pred = label.clone();
  for (int y = 0; y < 2; ++y) {
    for (int x = 0; x < w; ++x) pred[y * w + x] = static_cast<float>(x);
  }
  const auto img = error_heatmap(pred, label);
  for (int x = 1; x < w; ++x) EXPECT_GT(warmth(img.pixel(x, 0)), warmth(img.pixel(x - 1, 0)));
}

}  // namespace
}  // namespace panrestore
