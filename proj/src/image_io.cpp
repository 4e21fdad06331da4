#include <algorithm>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "panrestore/pipeline.hpp"

namespace panrestore {

namespace {

// 1 x C x H x W float tensor <-> OpenCV float image (BGR order for 3 channels).
cv::Mat to_mat(const Tensor<float>& t) {
  const Shape s = t.shape();
  std::vector<cv::Mat> planes;
  for (int c = 0; c < s.c; ++c) {
    cv::Mat plane(s.h, s.w, CV_32F);
    std::copy_n(t.data().data() + s.index(0, c, 0, 0), s.plane(), plane.ptr<float>());
    planes.push_back(plane);
  }
  if (s.c == 3) std::swap(planes[0], planes[2]);
  cv::Mat merged;
  cv::merge(planes, merged);
  return merged;
}

Tensor<float> from_mat(const cv::Mat& mat) {
  std::vector<cv::Mat> planes;
  cv::split(mat, planes);
  if (planes.size() == 3) std::swap(planes[0], planes[2]);
  const int c = static_cast<int>(planes.size());
  Tensor<float> t({1, c, mat.rows, mat.cols});
  for (int k = 0; k < c; ++k) {
    cv::Mat plane = planes[k].isContinuous() ? planes[k] : planes[k].clone();
    std::copy_n(plane.ptr<float>(), t.shape().plane(), t.data().data() + t.shape().index(0, k, 0, 0));
  }
  return t;
}

}  // namespace

Tensor<float> read_image(const std::filesystem::path& path, int channels) {
  if (channels != 1 && channels != 3) throw ConfigError("read_image: channels must be 1 or 3");
  const cv::Mat raw =
      cv::imread(path.string(), channels == 1 ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR);
  if (raw.empty()) throw RuntimeFailure("cannot read image: " + path.string());
  cv::Mat scaled;
  raw.convertTo(scaled, CV_32F, 1.0 / 255.0);
  return from_mat(scaled);
}

void write_image(const std::filesystem::path& path, const Tensor<float>& image) {
  const Shape s = image.shape();
  if (s.n != 1 || (s.c != 1 && s.c != 3)) {
    throw ConfigError("write_image: expected 1 x {1,3} x H x W, got " + s.str());
  }
  cv::Mat out;
  to_mat(image).convertTo(out, CV_8U, 255.0);  // saturating
  if (!cv::imwrite(path.string(), out)) throw RuntimeFailure("cannot write image: " + path.string());
}

void write_rgb8(const std::filesystem::path& path, const Rgb8Image& image) {
  cv::Mat rgb(image.height, image.width, CV_8UC3,
              const_cast<std::uint8_t*>(image.rgb.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path.string(), bgr)) throw RuntimeFailure("cannot write image: " + path.string());
}

Tensor<float> rgb_to_pan(const Tensor<float>& rgb) {
  const Shape s = rgb.shape();
  if (s.c != 3) throw ConfigError("rgb_to_pan: expected 3 channels, got " + s.str());
  Tensor<float> pan({s.n, 1, s.h, s.w});
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < s.plane(); ++i) {
      const float r = rgb[s.index(n, 0, 0, 0) + i];
      const float g = rgb[s.index(n, 1, 0, 0) + i];
      const float b = rgb[s.index(n, 2, 0, 0) + i];
      pan[static_cast<std::size_t>(n) * s.plane() + i] = 0.299f * r + 0.587f * g + 0.114f * b;
    }
  }
  return pan;
}

Tensor<float> bicubic_resize(const Tensor<float>& image, int size) {
  if (image.shape().h == size && image.shape().w == size) return image.clone();
  cv::Mat resized;
  cv::resize(to_mat(image), resized, cv::Size(size, size), 0, 0, cv::INTER_CUBIC);
  Tensor<float> out = from_mat(resized);
  for (float& v : out.data()) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

}  // namespace panrestore
