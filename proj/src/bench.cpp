#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "panrestore/pipeline.hpp"
#include "panrestore/rng.hpp"

namespace panrestore {

void quadratic_attention(std::span<const float> q, std::span<const float> k,
                         std::span<const float> v, int length, int dim, std::span<float> out) {
  const std::size_t need = static_cast<std::size_t>(length) * dim;
  if (q.size() != need || k.size() != need || v.size() != need || out.size() != need) {
    throw ConfigError("quadratic_attention: buffers must hold length * dim values");
  }
  const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(dim));
  std::vector<float> scores(length);
  for (int i = 0; i < length; ++i) {
    const float* qi = q.data() + static_cast<std::size_t>(i) * dim;
    float top = -INFINITY;
    for (int j = 0; j < length; ++j) {
      const float* kj = k.data() + static_cast<std::size_t>(j) * dim;
      float s = 0;
      for (int e = 0; e < dim; ++e) s += qi[e] * kj[e];
      scores[j] = s * inv_sqrt;
      top = std::max(top, scores[j]);
    }
    float total = 0;
    for (float& s : scores) total += (s = std::exp(s - top));
    float* oi = out.data() + static_cast<std::size_t>(i) * dim;
    std::fill_n(oi, dim, 0.0f);
    for (int j = 0; j < length; ++j) {
      const float w = scores[j] / total;
      const float* vj = v.data() + static_cast<std::size_t>(j) * dim;
      for (int e = 0; e < dim; ++e) oi[e] += w * vj[e];
    }
  }
}

namespace {

template <typename F>
BenchRow time_kernel(std::string kernel, int length, int repeats, F&& run) {
  run();  // warm-up
  std::vector<double> ns;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    run();
    const auto t1 = std::chrono::steady_clock::now();
    ns.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
  }
  const double mean = std::accumulate(ns.begin(), ns.end(), 0.0) / ns.size();
  double var = 0;
  for (double x : ns) var += (x - mean) * (x - mean);
  const double sd = ns.size() > 1 ? std::sqrt(var / (ns.size() - 1)) : 0.0;
  std::sort(ns.begin(), ns.end());
  const std::size_t mid = ns.size() / 2;
  const double median = ns.size() % 2 ? ns[mid] : 0.5 * (ns[mid - 1] + ns[mid]);
  return {std::move(kernel), length, mean, sd, median};
}

}  // namespace

std::vector<BenchRow> bench_scan(const std::vector<int>& lengths, const BenchOptions& opts) {
  if (opts.repeats < 1 || opts.channels < 1 || opts.state_size < 1 || opts.head_dim < 1) {
    throw ConfigError("bench: repeats, channels, state_size and head_dim must be positive");
  }
  Rng rng(opts.seed);
  std::vector<BenchRow> rows;
  for (const int length : lengths) {
    if (length < 1) throw ConfigError("bench: lengths must be positive");
    const std::size_t lm = static_cast<std::size_t>(length) * opts.state_size;
    std::vector<float> x(static_cast<std::size_t>(length) * opts.channels), a(lm), b(lm), c(lm),
        y(length);
    for (float& v : x) v = static_cast<float>(rng.normal(0, 1));
    for (float& v : a) v = static_cast<float>(rng.uniform(0.5, 0.999));
    for (float& v : b) v = static_cast<float>(rng.normal(0, 0.1));
    for (float& v : c) v = static_cast<float>(rng.normal(0, 1));
    volatile float sink = 0;
    rows.push_back(time_kernel("scan", length, opts.repeats, [&] {
      for (int ch = 0; ch < opts.channels; ++ch) {
        ScanInputs<float> in{
            std::span<const float>(x).subspan(static_cast<std::size_t>(ch) * length, length), a, b,
            c, 1.0f, opts.state_size};
        scan_recurrence_fast<float>(in, y);
        sink = sink + y.back();
      }
    }));
    if (opts.include_attention) {
      const std::size_t ld = static_cast<std::size_t>(length) * opts.head_dim;
      std::vector<float> q(ld), k(ld), v(ld), out(ld);
      for (auto* buf : {&q, &k, &v}) {
        for (float& e : *buf) e = static_cast<float>(rng.normal(0, 1));
      }
      rows.push_back(time_kernel("attention", length, opts.repeats, [&] {
        quadratic_attention(q, k, v, length, opts.head_dim, out);
        sink = sink + out.back();
      }));
    }
  }
  return rows;
}

void write_bench_csv(const std::filesystem::path& path, const std::vector<BenchRow>& rows) {
  std::ofstream os(path);
  if (!os) throw RuntimeFailure("cannot write benchmark csv: " + path.string());
  os << "kernel,L,mean_ns,std_ns\n" << std::fixed << std::setprecision(1);
  for (const auto& r : rows) os << r.kernel << ',' << r.length << ',' << r.mean_ns << ',' << r.std_ns << '\n';
}

}  // namespace panrestore
