#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "panrestore/tensor.hpp"

namespace panrestore {

// All metrics take images on the [0, 255] evaluation scale (N x C x H x W)
// and accumulate in f64.
inline constexpr double kPixelMax = 255.0;
inline constexpr double kPsnrCapDb = 100.0;

double mse(const Tensor<float>& a, const Tensor<float>& b);
double mae(const Tensor<float>& a, const Tensor<float>& b);
// 10 log10(255^2 / mse), capped at 100 dB when mse < 1e-10.
double psnr(const Tensor<float>& a, const Tensor<float>& b);
double psnr_from_mse(double mse_value);

// Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5, K1 0.01, K2 0.03).
// Three-channel images are compared on BT.601 luma, other channel counts by
// averaging per-channel SSIM.
double ssim(const Tensor<float>& a, const Tensor<float>& b);

struct SamResult {
  double mean_rad = 0.0;
  std::size_t skipped = 0;  // pixels where either spectral vector is zero
};
SamResult sam_detailed(const Tensor<float>& a, const Tensor<float>& b);
double sam(const Tensor<float>& a, const Tensor<float>& b);

struct ImageMetrics {
  std::string image_id;
  double psnr = 0, ssim = 0, mse = 0, mae = 0, sam = 0;
};

ImageMetrics compute_metrics(const std::string& image_id, const Tensor<float>& pred,
                             const Tensor<float>& label);

struct MetricsReport {
  std::vector<ImageMetrics> images;

  std::size_t count() const { return images.size(); }
  ImageMetrics mean() const;
  // Header: image_id,psnr,ssim,mse,mae,sam
  void write_csv(const std::filesystem::path& path) const;
};

struct Rgb8Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // interleaved, row-major

  std::array<std::uint8_t, 3> pixel(int x, int y) const;
};

// Blue (0) -> yellow (0.5) -> red (1).
std::array<std::uint8_t, 3> heat_color(double t);

// Per-pixel mean absolute error across channels, normalized by the image's
// own maximum error and mapped through heat_color. Uses the first batch item.
Rgb8Image error_heatmap(const Tensor<float>& pred, const Tensor<float>& label);

}  // namespace panrestore
