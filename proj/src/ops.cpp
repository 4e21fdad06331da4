#include "panrestore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace panrestore {

namespace {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ConfigError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                      b.shape().str());
  }
}

template <typename T>
detail::Node<T>& parent(detail::Node<T>& self, std::size_t i) {
  return *self.parents[i];
}

}  // namespace

template <typename T>
ConvParams<T> ConvParams<T>::kaiming(int in_ch, int out_ch, int k, Rng& rng) {
  ConvParams p = zeros(in_ch, out_ch, k);
  const double fan_in = static_cast<double>(in_ch) * k * k;
  const double bound = 1.0 / std::sqrt(fan_in);
  for (T& v : p.weight.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  return p;
}

template <typename T>
ConvParams<T> ConvParams<T>::zeros(int in_ch, int out_ch, int k) {
  if (k != 1 && k != 3 && k != 5) {
    throw ConfigError("conv kernel size must be 1, 3 or 5, got " + std::to_string(k));
  }
  if (in_ch < 1 || out_ch < 1) throw ConfigError("conv channel counts must be positive");
  ConvParams p;
  p.weight = Tensor<T>::zeros({out_ch, in_ch, k, k});
  p.bias = Tensor<T>::zeros({1, out_ch, 1, 1});
  p.weight.set_requires_grad(true);
  p.bias.set_requires_grad(true);
  return p;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvParams<T>& p) {
  const Shape xs = x.shape();
  const Shape ws = p.weight.shape();
  if (xs.c != ws.c) {
    throw ConfigError("conv2d: input has " + std::to_string(xs.c) + " channels, kernel expects " +
                      std::to_string(ws.c));
  }
  if (ws.h != ws.w || (ws.h != 1 && ws.h != 3 && ws.h != 5)) {
    throw ConfigError("conv2d: unsupported kernel " + ws.str());
  }
  const int n_batch = xs.n, in_ch = xs.c, height = xs.h, width = xs.w;
  const int out_ch = ws.n, k = ws.h, pad = (k - 1) / 2;
  const std::size_t plane = xs.plane();
  const Shape os{n_batch, out_ch, height, width};

  // Calls fn(dy, dx, y0, y1, x0, x1) for every kernel tap with the output
  // range whose shifted input stays inside the image.
  auto for_each_tap = [=](auto&& fn) {
    for (int ky = 0; ky < k; ++ky) {
      const int dy = ky - pad;
      const int y0 = std::max(0, -dy), y1 = std::min(height, height - dy);
      for (int kx = 0; kx < k; ++kx) {
        const int dx = kx - pad;
        const int x0 = std::max(0, -dx), x1 = std::min(width, width - dx);
        fn(ky, kx, dy, dx, y0, y1, x0, x1);
      }
    }
  };

  std::vector<T> out(os.numel());
  const T* in = x.data().data();
  const T* wt = p.weight.data().data();
  const T* bias = p.bias.data().data();
  for (int n = 0; n < n_batch; ++n) {
    for (int oc = 0; oc < out_ch; ++oc) {
      T* o = out.data() + (static_cast<std::size_t>(n) * out_ch + oc) * plane;
      std::fill(o, o + plane, bias[oc]);
      for (int ic = 0; ic < in_ch; ++ic) {
        const T* src = in + (static_cast<std::size_t>(n) * in_ch + ic) * plane;
        const T* wk = wt + (static_cast<std::size_t>(oc) * in_ch + ic) * k * k;
        for_each_tap([&](int ky, int kx, int dy, int dx, int y0, int y1, int x0, int x1) {
          const T wv = wk[ky * k + kx];
          if (wv == T(0)) return;
          for (int y = y0; y < y1; ++y) {
            T* orow = o + static_cast<std::size_t>(y) * width;
            const T* irow = src + static_cast<std::size_t>(y + dy) * width + dx;
            for (int xx = x0; xx < x1; ++xx) orow[xx] += wv * irow[xx];
          }
        });
      }
    }
  }

  return make_result<T>(
      os, std::move(out), {&x, &p.weight, &p.bias},
      [=](detail::Node<T>& self) {
        detail::Node<T>& xin = parent(self, 0);
        detail::Node<T>& wn = parent(self, 1);
        detail::Node<T>& bn = parent(self, 2);
        const T* gout = self.grad.data();
        const T* inv = xin.value.data();
        const T* wv_all = wn.value.data();
        if (bn.requires_grad) {
          bn.ensure_grad();
          for (int n = 0; n < n_batch; ++n) {
            for (int oc = 0; oc < out_ch; ++oc) {
              const T* g = gout + (static_cast<std::size_t>(n) * out_ch + oc) * plane;
              T acc = 0;
              for (std::size_t i = 0; i < plane; ++i) acc += g[i];
              bn.grad[oc] += acc;
            }
          }
        }
        if (wn.requires_grad) {
          wn.ensure_grad();
          for (int n = 0; n < n_batch; ++n) {
            for (int oc = 0; oc < out_ch; ++oc) {
              const T* g = gout + (static_cast<std::size_t>(n) * out_ch + oc) * plane;
              for (int ic = 0; ic < in_ch; ++ic) {
                const T* src = inv + (static_cast<std::size_t>(n) * in_ch + ic) * plane;
                T* gw = wn.grad.data() + (static_cast<std::size_t>(oc) * in_ch + ic) * k * k;
                for_each_tap([&](int ky, int kx, int dy, int dx, int y0, int y1, int x0, int x1) {
                  T acc = 0;
                  for (int y = y0; y < y1; ++y) {
                    const T* grow = g + static_cast<std::size_t>(y) * width;
                    const T* irow = src + static_cast<std::size_t>(y + dy) * width + dx;
                    for (int xx = x0; xx < x1; ++xx) acc += grow[xx] * irow[xx];
                  }
                  gw[ky * k + kx] += acc;
                });
              }
            }
          }
        }
        if (xin.requires_grad) {
          xin.ensure_grad();
          for (int n = 0; n < n_batch; ++n) {
            for (int oc = 0; oc < out_ch; ++oc) {
              const T* g = gout + (static_cast<std::size_t>(n) * out_ch + oc) * plane;
              for (int ic = 0; ic < in_ch; ++ic) {
                T* gi = xin.grad.data() + (static_cast<std::size_t>(n) * in_ch + ic) * plane;
                const T* wk = wv_all + (static_cast<std::size_t>(oc) * in_ch + ic) * k * k;
                for_each_tap([&](int ky, int kx, int dy, int dx, int y0, int y1, int x0, int x1) {
                  const T wv = wk[ky * k + kx];
                  if (wv == T(0)) return;
                  for (int y = y0; y < y1; ++y) {
                    const T* grow = g + static_cast<std::size_t>(y) * width;
                    T* irow = gi + static_cast<std::size_t>(y + dy) * width + dx;
                    for (int xx = x0; xx < x1; ++xx) irow[xx] += wv * grow[xx];
                  }
                });
              }
            }
          }
        }
      });
}

namespace {

// Elementwise op whose derivative is expressed through input and output.
template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(const Tensor<T>& x, Fwd fwd, Deriv deriv) {
  std::vector<T> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  return make_result<T>(x.shape(), std::move(out), {&x}, [deriv](detail::Node<T>& self) {
    detail::Node<T>& xin = *self.parents[0];
    if (!xin.requires_grad) return;
    xin.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      xin.grad[i] += self.grad[i] * deriv(xin.value[i], self.value[i]);
    }
  });
}

}  // namespace

namespace {
thread_local BranchTrace* g_trace = nullptr;
}  // namespace

BranchTrace::BranchTrace() : previous_(g_trace) { g_trace = this; }
BranchTrace::~BranchTrace() { g_trace = previous_; }
BranchTrace* BranchTrace::active() { return g_trace; }

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  if (BranchTrace* trace = BranchTrace::active()) {
    for (T v : x.data()) trace->record(v > T(0));
  }
  return unary(
      x, [](T v) { return v > T(0) ? v : T(0); },
      [](T in, T) { return in > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary(
      x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T out) { return out * (T(1) - out); });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return v > T(20) ? v : std::log1p(std::exp(v)); },
      [](T in, T) {
        if (in >= T(0)) return T(1) / (T(1) + std::exp(-in));
        const T e = std::exp(in);
        return e / (T(1) + e);
      });
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  const Shape s = x.shape();
  if (s.h < 1 || s.w < 1) throw ConfigError("global_avg_pool: empty spatial extent");
  const std::size_t plane = s.plane();
  std::vector<T> out(static_cast<std::size_t>(s.n) * s.c);
  for (std::size_t p = 0; p < out.size(); ++p) {
    T acc = 0;
    for (std::size_t i = 0; i < plane; ++i) acc += x[p * plane + i];
    out[p] = acc / static_cast<T>(plane);
  }
  return make_result<T>({s.n, s.c, 1, 1}, std::move(out), {&x}, [plane](detail::Node<T>& self) {
    detail::Node<T>& xin = *self.parents[0];
    if (!xin.requires_grad) return;
    xin.ensure_grad();
    for (std::size_t p = 0; p < self.grad.size(); ++p) {
      const T g = self.grad[p] / static_cast<T>(plane);
      for (std::size_t i = 0; i < plane; ++i) xin.grad[p * plane + i] += g;
    }
  });
}

template <typename T>
Tensor<T> global_max_pool(const Tensor<T>& x) {
  const Shape s = x.shape();
  if (s.h < 1 || s.w < 1) throw ConfigError("global_max_pool: empty spatial extent");
  const std::size_t plane = s.plane();
  const std::size_t count = static_cast<std::size_t>(s.n) * s.c;
  std::vector<T> out(count);
  std::vector<std::size_t> arg(count);
  for (std::size_t p = 0; p < count; ++p) {
    std::size_t best = p * plane;
    for (std::size_t i = 1; i < plane; ++i) {
      if (x[p * plane + i] > x[best]) best = p * plane + i;
    }
    arg[p] = best;
    out[p] = x[best];
  }
  if (BranchTrace* trace = BranchTrace::active()) {
    for (std::size_t a : arg) trace->record(a);
  }
  return make_result<T>({s.n, s.c, 1, 1}, std::move(out), {&x},
                        [arg = std::move(arg)](detail::Node<T>& self) {
                          detail::Node<T>& xin = *self.parents[0];
                          if (!xin.requires_grad) return;
                          xin.ensure_grad();
                          for (std::size_t p = 0; p < arg.size(); ++p) {
                            xin.grad[arg[p]] += self.grad[p];
                          }
                        });
}

template <typename T>
Tensor<T> max_pool2x2(const Tensor<T>& x) {
  const Shape s = x.shape();
  const Shape os{s.n, s.c, s.h / 2, s.w / 2};
  if (os.h < 1 || os.w < 1) throw ConfigError("max_pool2x2: input too small " + s.str());
  std::vector<T> out(os.numel());
  std::vector<std::size_t> arg(os.numel());
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < os.h; ++y) {
        for (int xx = 0; xx < os.w; ++xx) {
          std::size_t best = s.index(n, c, 2 * y, 2 * xx);
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t i = s.index(n, c, 2 * y + dy, 2 * xx + dx);
              if (x[i] > x[best]) best = i;
            }
          }
          const std::size_t o = os.index(n, c, y, xx);
          out[o] = x[best];
          arg[o] = best;
        }
      }
    }
  }
  if (BranchTrace* trace = BranchTrace::active()) {
    for (std::size_t a : arg) trace->record(a);
  }
  return make_result<T>(os, std::move(out), {&x}, [arg = std::move(arg)](detail::Node<T>& self) {
    detail::Node<T>& xin = *self.parents[0];
    if (!xin.requires_grad) return;
    xin.ensure_grad();
    for (std::size_t o = 0; o < arg.size(); ++o) xin.grad[arg[o]] += self.grad[o];
  });
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs) {
  if (xs.empty()) throw ConfigError("concat_channels: no inputs");
  const Shape first = xs.front().shape();
  int channels = 0;
  for (const auto& t : xs) {
    const Shape s = t.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw ConfigError("concat_channels: incompatible shapes " + first.str() + " and " + s.str());
    }
    channels += s.c;
  }
  const Shape os{first.n, channels, first.h, first.w};
  const std::size_t plane = os.plane();
  std::vector<T> out(os.numel());
  std::vector<int> offsets;
  int offset = 0;
  for (const auto& t : xs) {
    offsets.push_back(offset);
    const int c = t.shape().c;
    for (int n = 0; n < os.n; ++n) {
      const T* src = t.data().data() + static_cast<std::size_t>(n) * c * plane;
      std::copy(src, src + c * plane, out.data() + os.index(n, offset, 0, 0));
    }
    offset += c;
  }
  return make_result<T>(os, std::move(out), xs, [os, offsets](detail::Node<T>& self) {
    const std::size_t plane = os.plane();
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      detail::Node<T>& in = *self.parents[k];
      if (!in.requires_grad) continue;
      in.ensure_grad();
      const int c = in.shape.c;
      for (int n = 0; n < os.n; ++n) {
        const T* g = self.grad.data() + os.index(n, offsets[k], 0, 0);
        T* dst = in.grad.data() + static_cast<std::size_t>(n) * c * plane;
        for (std::size_t i = 0; i < c * plane; ++i) dst[i] += g[i];
      }
    }
  });
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int begin, int count) {
  const Shape s = x.shape();
  if (begin < 0 || count < 0 || begin + count > s.c) {
    throw ConfigError("slice_channels: range out of bounds for " + s.str());
  }
  const Shape os{s.n, count, s.h, s.w};
  const std::size_t plane = s.plane();
  std::vector<T> out(os.numel());
  for (int n = 0; n < s.n; ++n) {
    const T* src = x.data().data() + s.index(n, begin, 0, 0);
    std::copy(src, src + count * plane, out.data() + os.index(n, 0, 0, 0));
  }
  return make_result<T>(os, std::move(out), {&x}, [s, os, begin](detail::Node<T>& self) {
    detail::Node<T>& xin = *self.parents[0];
    if (!xin.requires_grad) return;
    xin.ensure_grad();
    const std::size_t len = static_cast<std::size_t>(os.c) * os.plane();
    for (int n = 0; n < s.n; ++n) {
      const T* g = self.grad.data() + os.index(n, 0, 0, 0);
      T* dst = xin.grad.data() + s.index(n, begin, 0, 0);
      for (std::size_t i = 0; i < len; ++i) dst[i] += g[i];
    }
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& x, const Tensor<T>& y) {
  require_same_shape(x, y, "add");
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_result<T>(x.shape(), std::move(out), {&x, &y}, [](detail::Node<T>& self) {
    for (int k = 0; k < 2; ++k) {
      detail::Node<T>& in = *self.parents[k];
      if (!in.requires_grad) continue;
      in.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  return make_result<T>(x.shape(), std::move(out), {&x}, [factor](detail::Node<T>& self) {
    detail::Node<T>& xin = *self.parents[0];
    if (!xin.requires_grad) return;
    xin.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) xin.grad[i] += self.grad[i] * factor;
  });
}

template <typename T>
Tensor<T> mul_channel_scale(const Tensor<T>& x, const Tensor<T>& s) {
  const Shape xs = x.shape();
  const Shape ss = s.shape();
  if (ss.n != xs.n || ss.c != xs.c || ss.h != 1 || ss.w != 1) {
    throw ConfigError("mul_channel_scale: scale " + ss.str() + " does not broadcast over " +
                      xs.str());
  }
  const std::size_t plane = xs.plane();
  std::vector<T> out(x.numel());
  for (std::size_t p = 0; p < s.numel(); ++p) {
    for (std::size_t i = 0; i < plane; ++i) out[p * plane + i] = x[p * plane + i] * s[p];
  }
  return make_result<T>(xs, std::move(out), {&x, &s}, [plane](detail::Node<T>& self) {
    detail::Node<T>& xin = *self.parents[0];
    detail::Node<T>& sin = *self.parents[1];
    if (xin.requires_grad) xin.ensure_grad();
    if (sin.requires_grad) sin.ensure_grad();
    for (std::size_t p = 0; p < sin.value.size(); ++p) {
      T acc = 0;
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t j = p * plane + i;
        if (xin.requires_grad) xin.grad[j] += self.grad[j] * sin.value[p];
        acc += self.grad[j] * xin.value[j];
      }
      if (sin.requires_grad) sin.grad[p] += acc;
    }
  });
}

namespace {

struct LinearTap {
  int i0;
  int i1;
  double w1;  // weight of i1; i0 receives 1 - w1
};

std::vector<LinearTap> bilinear_taps(int in_size, int out_size) {
  std::vector<LinearTap> taps(out_size);
  const double ratio = static_cast<double>(in_size) / out_size;
  for (int o = 0; o < out_size; ++o) {
    double src = (o + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in_size - 1) i0 = in_size - 1;
    const int i1 = std::min(i0 + 1, in_size - 1);
    taps[o] = {i0, i1, src - i0};
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, double factor) {
  if (!(factor > 0)) throw ConfigError("bilinear_resize: factor must be positive");
  const Shape s = x.shape();
  const Shape os{s.n, s.c, static_cast<int>(std::lround(s.h * factor)),
                 static_cast<int>(std::lround(s.w * factor))};
  if (os.h < 1 || os.w < 1) throw ConfigError("bilinear_resize: output would be empty");
  const auto ty = bilinear_taps(s.h, os.h);
  const auto tx = bilinear_taps(s.w, os.w);
  std::vector<T> out(os.numel());
  const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x.data().data() + p * s.plane();
    T* dst = out.data() + p * os.plane();
    for (int y = 0; y < os.h; ++y) {
      const T wy1 = static_cast<T>(ty[y].w1), wy0 = T(1) - wy1;
      const T* r0 = src + static_cast<std::size_t>(ty[y].i0) * s.w;
      const T* r1 = src + static_cast<std::size_t>(ty[y].i1) * s.w;
      for (int xx = 0; xx < os.w; ++xx) {
        const T wx1 = static_cast<T>(tx[xx].w1), wx0 = T(1) - wx1;
        dst[static_cast<std::size_t>(y) * os.w + xx] =
            wy0 * (wx0 * r0[tx[xx].i0] + wx1 * r0[tx[xx].i1]) +
            wy1 * (wx0 * r1[tx[xx].i0] + wx1 * r1[tx[xx].i1]);
      }
    }
  }
  return make_result<T>(os, std::move(out), {&x}, [s, os, ty, tx](detail::Node<T>& self) {
    detail::Node<T>& xin = *self.parents[0];
    if (!xin.requires_grad) return;
    xin.ensure_grad();
    const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
    for (std::size_t p = 0; p < planes; ++p) {
      T* gsrc = xin.grad.data() + p * s.plane();
      const T* g = self.grad.data() + p * os.plane();
      for (int y = 0; y < os.h; ++y) {
        const T wy1 = static_cast<T>(ty[y].w1), wy0 = T(1) - wy1;
        T* r0 = gsrc + static_cast<std::size_t>(ty[y].i0) * s.w;
        T* r1 = gsrc + static_cast<std::size_t>(ty[y].i1) * s.w;
        for (int xx = 0; xx < os.w; ++xx) {
          const T wx1 = static_cast<T>(tx[xx].w1), wx0 = T(1) - wx1;
          const T gv = g[static_cast<std::size_t>(y) * os.w + xx];
          r0[tx[xx].i0] += gv * wy0 * wx0;
          r0[tx[xx].i1] += gv * wy0 * wx1;
          r1[tx[xx].i0] += gv * wy1 * wx0;
          r1[tx[xx].i1] += gv * wy1 * wx1;
        }
      }
    }
  });
}

namespace {

// Output index -> input index map for a pure permutation op; backward is the
// scatter through the same map.
template <typename T>
Tensor<T> permute_elements(const Tensor<T>& x, Shape os, std::vector<std::size_t> source) {
  std::vector<T> out(os.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[source[i]];
  return make_result<T>(os, std::move(out), {&x},
                        [source = std::move(source)](detail::Node<T>& self) {
                          detail::Node<T>& xin = *self.parents[0];
                          if (!xin.requires_grad) return;
                          xin.ensure_grad();
                          for (std::size_t i = 0; i < source.size(); ++i) {
                            xin.grad[source[i]] += self.grad[i];
                          }
                        });
}

}  // namespace

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int r) {
  const Shape s = x.shape();
  if (r < 1 || s.c % (r * r) != 0) {
    throw ConfigError("pixel_shuffle: channels " + std::to_string(s.c) +
                      " not divisible by r^2 = " + std::to_string(r * r));
  }
  const Shape os{s.n, s.c / (r * r), s.h * r, s.w * r};
  std::vector<std::size_t> source(os.numel());
  for (int n = 0; n < os.n; ++n) {
    for (int c = 0; c < os.c; ++c) {
      for (int y = 0; y < os.h; ++y) {
        for (int xx = 0; xx < os.w; ++xx) {
          const int ic = c * r * r + (y % r) * r + (xx % r);
          source[os.index(n, c, y, xx)] = s.index(n, ic, y / r, xx / r);
        }
      }
    }
  }
  return permute_elements(x, os, std::move(source));
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int r) {
  const Shape s = x.shape();
  if (r < 1 || s.h % r != 0 || s.w % r != 0) {
    throw ConfigError("pixel_unshuffle: spatial dims of " + s.str() + " not divisible by " +
                      std::to_string(r));
  }
  const Shape os{s.n, s.c * r * r, s.h / r, s.w / r};
  std::vector<std::size_t> source(os.numel());
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < s.h; ++y) {
        for (int xx = 0; xx < s.w; ++xx) {
          const int oc = c * r * r + (y % r) * r + (xx % r);
          source[os.index(n, oc, y / r, xx / r)] = s.index(n, c, y, xx);
        }
      }
    }
  }
  return permute_elements(x, os, std::move(source));
}

template <typename T>
Tensor<T> channel_layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                             T eps) {
  const Shape s = x.shape();
  const Shape ps{1, s.c, 1, 1};
  if (gamma.shape() != ps || beta.shape() != ps) {
    throw ConfigError("channel_layer_norm: affine parameters must be " + ps.str());
  }
  const std::size_t plane = s.plane();
  std::vector<T> out(x.numel());
  std::vector<T> xhat(x.numel());
  std::vector<T> rstd(static_cast<std::size_t>(s.n) * plane);
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t base = s.index(n, 0, 0, 0) + i;
      T mean = 0;
      for (int c = 0; c < s.c; ++c) mean += x[base + c * plane];
      mean /= static_cast<T>(s.c);
      T var = 0;
      for (int c = 0; c < s.c; ++c) {
        const T d = x[base + c * plane] - mean;
        var += d * d;
      }
      var /= static_cast<T>(s.c);
      const T r = T(1) / std::sqrt(var + eps);
      rstd[static_cast<std::size_t>(n) * plane + i] = r;
      for (int c = 0; c < s.c; ++c) {
        const std::size_t j = base + c * plane;
        xhat[j] = (x[j] - mean) * r;
        out[j] = xhat[j] * gamma[c] + beta[c];
      }
    }
  }
  return make_result<T>(
      s, std::move(out), {&x, &gamma, &beta},
      [s, xhat = std::move(xhat), rstd = std::move(rstd)](detail::Node<T>& self) {
        detail::Node<T>& xin = *self.parents[0];
        detail::Node<T>& gn = *self.parents[1];
        detail::Node<T>& bn = *self.parents[2];
        const std::size_t plane = s.plane();
        if (gn.requires_grad) gn.ensure_grad();
        if (bn.requires_grad) bn.ensure_grad();
        if (xin.requires_grad) xin.ensure_grad();
        for (int n = 0; n < s.n; ++n) {
          for (std::size_t i = 0; i < plane; ++i) {
            const std::size_t base = s.index(n, 0, 0, 0) + i;
            T mean_d = 0, mean_dx = 0;
            for (int c = 0; c < s.c; ++c) {
              const std::size_t j = base + c * plane;
              const T g = self.grad[j];
              if (gn.requires_grad) gn.grad[c] += g * xhat[j];
              if (bn.requires_grad) bn.grad[c] += g;
              const T d = g * gn.value[c];
              mean_d += d;
              mean_dx += d * xhat[j];
            }
            if (!xin.requires_grad) continue;
            mean_d /= static_cast<T>(s.c);
            mean_dx /= static_cast<T>(s.c);
            const T r = rstd[static_cast<std::size_t>(n) * plane + i];
            for (int c = 0; c < s.c; ++c) {
              const std::size_t j = base + c * plane;
              const T d = self.grad[j] * gn.value[c];
              xin.grad[j] += r * (d - mean_d - xhat[j] * mean_dx);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  require_same_shape(pred, target, "l1_loss");
  const std::size_t count = pred.numel();
  if (count == 0) throw ConfigError("l1_loss: empty tensors");
  T acc = 0;
  for (std::size_t i = 0; i < count; ++i) acc += std::abs(pred[i] - target[i]);
  if (BranchTrace* trace = BranchTrace::active()) {
    for (std::size_t i = 0; i < count; ++i) trace->record(pred[i] > target[i]);
  }
  std::vector<T> out{acc / static_cast<T>(count)};
  return make_result<T>({1, 1, 1, 1}, std::move(out), {&pred, &target},
                        [count](detail::Node<T>& self) {
                          detail::Node<T>& p = *self.parents[0];
                          detail::Node<T>& t = *self.parents[1];
                          const T g = self.grad[0] / static_cast<T>(count);
                          if (p.requires_grad) p.ensure_grad();
                          if (t.requires_grad) t.ensure_grad();
                          for (std::size_t i = 0; i < count; ++i) {
                            const T d = p.value[i] - t.value[i];
                            const T sgn = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
                            if (p.requires_grad) p.grad[i] += g * sgn;
                            if (t.requires_grad) t.grad[i] -= g * sgn;
                          }
                        });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  return weighted_sum(x, std::vector<T>(x.numel(), T(1)));
}

template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, const std::vector<T>& weights) {
  if (weights.size() != x.numel()) throw ConfigError("weighted_sum: weight count mismatch");
  T acc = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) acc += x[i] * weights[i];
  return make_result<T>({1, 1, 1, 1}, {acc}, {&x}, [weights](detail::Node<T>& self) {
    detail::Node<T>& xin = *self.parents[0];
    if (!xin.requires_grad) return;
    xin.ensure_grad();
    for (std::size_t i = 0; i < weights.size(); ++i) xin.grad[i] += self.grad[0] * weights[i];
  });
}

#define PANRESTORE_INSTANTIATE_OPS(T)                                                           \
  template struct ConvParams<T>;                                                             \
  template Tensor<T> conv2d(const Tensor<T>&, const ConvParams<T>&);                         \
  template Tensor<T> relu(const Tensor<T>&);                                                 \
  template Tensor<T> sigmoid(const Tensor<T>&);                                              \
  template Tensor<T> softplus(const Tensor<T>&);                                             \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                      \
  template Tensor<T> global_max_pool(const Tensor<T>&);                                      \
  template Tensor<T> max_pool2x2(const Tensor<T>&);                                          \
  template Tensor<T> concat_channels(const std::vector<Tensor<T>>&);                         \
  template Tensor<T> slice_channels(const Tensor<T>&, int, int);                             \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> scale(const Tensor<T>&, T);                                             \
  template Tensor<T> mul_channel_scale(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> bilinear_resize(const Tensor<T>&, double);                              \
  template Tensor<T> pixel_shuffle(const Tensor<T>&, int);                                   \
  template Tensor<T> pixel_unshuffle(const Tensor<T>&, int);                                 \
  template Tensor<T> channel_layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                        T);                                                  \
  template Tensor<T> l1_loss(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> sum(const Tensor<T>&);                                                  \
  template Tensor<T> weighted_sum(const Tensor<T>&, const std::vector<T>&);

PANRESTORE_INSTANTIATE_OPS(float)
PANRESTORE_INSTANTIATE_OPS(double)

#undef PANRESTORE_INSTANTIATE_OPS

}  // namespace panrestore
