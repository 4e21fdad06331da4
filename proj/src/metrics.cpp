#include "panrestore/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>

namespace panrestore {

namespace {

void require_same(const Tensor<float>& a, const Tensor<float>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ConfigError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                      b.shape().str());
  }
  if (a.numel() == 0) throw ConfigError(std::string(op) + ": empty images");
}

// One plane of doubles.
struct Plane {
  int h = 0, w = 0;
  std::vector<double> v;
  double at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

Plane extract_plane(const Tensor<float>& t, int n, int c) {
  const Shape s = t.shape();
  Plane p{s.h, s.w, std::vector<double>(s.plane())};
  const float* src = t.data().data() + s.index(n, c, 0, 0);
  std::copy(src, src + s.plane(), p.v.begin());
  return p;
}

Plane luma_plane(const Tensor<float>& t, int n) {
  const Shape s = t.shape();
  Plane p{s.h, s.w, std::vector<double>(s.plane())};
  const float* r = t.data().data() + s.index(n, 0, 0, 0);
  const float* g = t.data().data() + s.index(n, 1, 0, 0);
  const float* b = t.data().data() + s.index(n, 2, 0, 0);
  for (std::size_t i = 0; i < p.v.size(); ++i) p.v[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
  return p;
}

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

std::array<double, kWindow> gaussian_window() {
  std::array<double, kWindow> g{};
  double total = 0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    g[i] = std::exp(-(d * d) / (2 * kSigma * kSigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

// Separable valid-mode filtering: output is (h - 10) x (w - 10).
Plane filter_valid(const Plane& in, const std::array<double, kWindow>& g) {
  const int oh = in.h - kWindow + 1, ow = in.w - kWindow + 1;
  Plane rows{in.h, ow, std::vector<double>(static_cast<std::size_t>(in.h) * ow)};
  for (int y = 0; y < in.h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int k = 0; k < kWindow; ++k) acc += g[k] * in.at(y, x + k);
      rows.v[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  Plane out{oh, ow, std::vector<double>(static_cast<std::size_t>(oh) * ow)};
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int k = 0; k < kWindow; ++k) acc += g[k] * rows.at(y + k, x);
      out.v[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  return out;
}

double ssim_plane(const Plane& a, const Plane& b) {
  const auto g = gaussian_window();
  const double c1 = std::pow(0.01 * kPixelMax, 2);
  const double c2 = std::pow(0.03 * kPixelMax, 2);
  Plane aa = a, bb = b, ab = a;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    aa.v[i] = a.v[i] * a.v[i];
    bb.v[i] = b.v[i] * b.v[i];
    ab.v[i] = a.v[i] * b.v[i];
  }
  const Plane mu_a = filter_valid(a, g), mu_b = filter_valid(b, g);
  const Plane e_aa = filter_valid(aa, g), e_bb = filter_valid(bb, g), e_ab = filter_valid(ab, g);
  double total = 0;
  for (std::size_t i = 0; i < mu_a.v.size(); ++i) {
    const double ma = mu_a.v[i], mb = mu_b.v[i];
    const double va = e_aa.v[i] - ma * ma;
    const double vb = e_bb.v[i] - mb * mb;
    const double cov = e_ab.v[i] - ma * mb;
    total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.v.size());
}

}  // namespace

double mse(const Tensor<float>& a, const Tensor<float>& b) {
  require_same(a, b, "mse");
  double acc = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.numel());
}

double mae(const Tensor<float>& a, const Tensor<float>& b) {
  require_same(a, b, "mae");
  double acc = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) acc += std::abs(static_cast<double>(a[i]) - b[i]);
  return acc / static_cast<double>(a.numel());
}

double psnr_from_mse(double mse_value) {
  if (mse_value < 1e-10) return kPsnrCapDb;
  return 10.0 * std::log10(kPixelMax * kPixelMax / mse_value);
}

double psnr(const Tensor<float>& a, const Tensor<float>& b) { return psnr_from_mse(mse(a, b)); }

double ssim(const Tensor<float>& a, const Tensor<float>& b) {
  require_same(a, b, "ssim");
  const Shape s = a.shape();
  if (s.h < kWindow || s.w < kWindow) {
    throw ConfigError("ssim: image " + s.str() + " is smaller than the 11x11 window");
  }
  double total = 0;
  for (int n = 0; n < s.n; ++n) {
    if (s.c == 3) {
      total += ssim_plane(luma_plane(a, n), luma_plane(b, n));
    } else {
      double per = 0;
      for (int c = 0; c < s.c; ++c) per += ssim_plane(extract_plane(a, n, c), extract_plane(b, n, c));
      total += per / s.c;
    }
  }
  return total / s.n;
}

SamResult sam_detailed(const Tensor<float>& a, const Tensor<float>& b) {
  require_same(a, b, "sam");
  const Shape s = a.shape();
  const std::size_t plane = s.plane();
  SamResult result;
  double total = 0;
  std::size_t used = 0;
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      double na = 0, nb = 0;
      for (int c = 0; c < s.c; ++c) {
        const std::size_t j = s.index(n, c, 0, 0) + i;
        na += static_cast<double>(a[j]) * a[j];
        nb += static_cast<double>(b[j]) * b[j];
      }
      if (na == 0 || nb == 0) {
        ++result.skipped;
        continue;
      }
      // 2 atan2(|u - v|, |u + v|) on the unit vectors; exact at zero angle,
      // unlike acos of the cosine.
      const double ia = 1.0 / std::sqrt(na), ib = 1.0 / std::sqrt(nb);
      double diff = 0, sum = 0;
      for (int c = 0; c < s.c; ++c) {
        const std::size_t j = s.index(n, c, 0, 0) + i;
        const double u = a[j] * ia, v = b[j] * ib;
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
      }
      total += 2.0 * std::atan2(std::sqrt(diff), std::sqrt(sum));
      ++used;
    }
  }
  if (used == 0) throw ConfigError("sam: every pixel has a zero spectral vector");
  result.mean_rad = total / static_cast<double>(used);
  return result;
}

double sam(const Tensor<float>& a, const Tensor<float>& b) { return sam_detailed(a, b).mean_rad; }

ImageMetrics compute_metrics(const std::string& image_id, const Tensor<float>& pred,
                             const Tensor<float>& label) {
  ImageMetrics m;
  m.image_id = image_id;
  m.mse = mse(pred, label);
  m.mae = mae(pred, label);
  m.psnr = psnr_from_mse(m.mse);
  m.ssim = ssim(pred, label);
  // Degenerate (all-black) images have no spectral angle; report 0.
  try {
    m.sam = sam(pred, label);
  } catch (const ConfigError&) {
    m.sam = 0.0;
  }
  return m;
}

ImageMetrics MetricsReport::mean() const {
  ImageMetrics m;
  m.image_id = "mean";
  if (images.empty()) return m;
  for (const auto& r : images) {
    m.psnr += r.psnr;
    m.ssim += r.ssim;
    m.mse += r.mse;
    m.mae += r.mae;
    m.sam += r.sam;
  }
  const double n = static_cast<double>(images.size());
  m.psnr /= n;
  m.ssim /= n;
  m.mse /= n;
  m.mae /= n;
  m.sam /= n;
  return m;
}

void MetricsReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw RuntimeFailure("cannot write metrics report: " + path.string());
  os << "image_id,psnr,ssim,mse,mae,sam\n" << std::setprecision(10);
  for (const auto& r : images) {
    os << r.image_id << ',' << r.psnr << ',' << r.ssim << ',' << r.mse << ',' << r.mae << ','
       << r.sam << '\n';
  }
}

std::array<std::uint8_t, 3> Rgb8Image::pixel(int x, int y) const {
  const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
  return {rgb[i], rgb[i + 1], rgb[i + 2]};
}

std::array<std::uint8_t, 3> heat_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const auto q = [](double v) { return static_cast<std::uint8_t>(std::lround(255.0 * v)); };
  if (t < 0.5) {
    const double s = 2 * t;
    return {q(s), q(s), q(1 - s)};
  }
  const double s = 2 * t - 1;
  return {255, q(1 - s), 0};
}

Rgb8Image error_heatmap(const Tensor<float>& pred, const Tensor<float>& label) {
  require_same(pred, label, "error_heatmap");
  const Shape s = pred.shape();
  const std::size_t plane = s.plane();
  std::vector<double> err(plane, 0.0);
  for (int c = 0; c < s.c; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t j = s.index(0, c, 0, 0) + i;
      err[i] += std::abs(static_cast<double>(pred[j]) - label[j]) / s.c;
    }
  }
  const double peak = *std::max_element(err.begin(), err.end());
  Rgb8Image img{s.w, s.h, std::vector<std::uint8_t>(plane * 3)};
  for (std::size_t i = 0; i < plane; ++i) {
    const auto rgb = heat_color(peak > 0 ? err[i] / peak : 0.0);
    std::copy(rgb.begin(), rgb.end(), img.rgb.begin() + i * 3);
  }
  return img;
}

}  // namespace panrestore
