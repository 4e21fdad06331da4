#include "panrestore/mub.hpp"

namespace panrestore {

namespace {

void check_divisible(const Shape& s, int p, const char* op) {
  if (p < 1) throw ConfigError(std::string(op) + ": patch grid must be positive");
  if (s.h % p != 0) {
    throw ConfigError(std::string(op) + ": height " + std::to_string(s.h) +
                      " is not divisible by patch grid " + std::to_string(p));
  }
  if (s.w % p != 0) {
    throw ConfigError(std::string(op) + ": width " + std::to_string(s.w) +
                      " is not divisible by patch grid " + std::to_string(p));
  }
}

template <typename T>
Tensor<T> crop(const Tensor<T>& x, int y0, int x0, int th, int tw) {
  const Shape s = x.shape();
  const Shape os{s.n, s.c, th, tw};
  std::vector<T> out(os.numel());
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < th; ++y) {
        const T* src = x.data().data() + s.index(n, c, y0 + y, x0);
        std::copy(src, src + tw, out.data() + os.index(n, c, y, 0));
      }
    }
  }
  return make_result<T>(os, std::move(out), {&x}, [s, os, y0, x0](detail::Node<T>& self) {
    detail::Node<T>& xin = *self.parents[0];
    if (!xin.requires_grad) return;
    xin.ensure_grad();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        for (int y = 0; y < os.h; ++y) {
          const T* g = self.grad.data() + os.index(n, c, y, 0);
          T* dst = xin.grad.data() + s.index(n, c, y0 + y, x0);
          for (int xx = 0; xx < os.w; ++xx) dst[xx] += g[xx];
        }
      }
    }
  });
}

}  // namespace

template <typename T>
std::vector<Tensor<T>> patch_split(const Tensor<T>& x, int p) {
  const Shape s = x.shape();
  check_divisible(s, p, "patch_split");
  const int th = s.h / p, tw = s.w / p;
  std::vector<Tensor<T>> tiles;
  tiles.reserve(static_cast<std::size_t>(p) * p);
  for (int ty = 0; ty < p; ++ty) {
    for (int tx = 0; tx < p; ++tx) tiles.push_back(crop(x, ty * th, tx * tw, th, tw));
  }
  return tiles;
}

template <typename T>
Tensor<T> patch_merge(const std::vector<Tensor<T>>& tiles, int p) {
  if (p < 1 || tiles.size() != static_cast<std::size_t>(p) * p) {
    throw ConfigError("patch_merge: expected " + std::to_string(p * p) + " tiles, got " +
                      std::to_string(tiles.size()));
  }
  const Shape ts = tiles.front().shape();
  for (const auto& t : tiles) {
    if (t.shape() != ts) throw ConfigError("patch_merge: tiles differ in shape");
  }
  const Shape os{ts.n, ts.c, ts.h * p, ts.w * p};
  std::vector<T> out(os.numel());
  for (int k = 0; k < p * p; ++k) {
    const int y0 = (k / p) * ts.h, x0 = (k % p) * ts.w;
    for (int n = 0; n < ts.n; ++n) {
      for (int c = 0; c < ts.c; ++c) {
        for (int y = 0; y < ts.h; ++y) {
          const T* src = tiles[k].data().data() + ts.index(n, c, y, 0);
          std::copy(src, src + ts.w, out.data() + os.index(n, c, y0 + y, x0));
        }
      }
    }
  }
  return make_result<T>(os, std::move(out), tiles, [ts, os, p](detail::Node<T>& self) {
    for (int k = 0; k < p * p; ++k) {
      detail::Node<T>& tile = *self.parents[k];
      if (!tile.requires_grad) continue;
      tile.ensure_grad();
      const int y0 = (k / p) * ts.h, x0 = (k % p) * ts.w;
      for (int n = 0; n < ts.n; ++n) {
        for (int c = 0; c < ts.c; ++c) {
          for (int y = 0; y < ts.h; ++y) {
            const T* g = self.grad.data() + os.index(n, c, y0 + y, x0);
            T* dst = tile.grad.data() + ts.index(n, c, y, 0);
            for (int xx = 0; xx < ts.w; ++xx) dst[xx] += g[xx];
          }
        }
      }
    }
  });
}

template <typename T>
MubBlock<T> MubBlock<T>::random(int in_ch, int out_ch, int scale, const MubOptions& opts,
                                Rng& rng) {
  if (opts.patch_grid < 1 || opts.patch_grid > 3) {
    throw ConfigError("MUB patch grid must be 1, 2 or 3, got " + std::to_string(opts.patch_grid));
  }
  if (scale < 1) throw ConfigError("MUB scale must be positive");
  MubBlock blk;
  blk.patch_grid = opts.patch_grid;
  blk.scale = scale;
  blk.norm_gamma = Tensor<T>::ones({1, in_ch, 1, 1});
  blk.norm_gamma.set_requires_grad(true);
  blk.norm_beta = Tensor<T>::zeros({1, in_ch, 1, 1});
  blk.norm_beta.set_requires_grad(true);
  blk.ssm = Ssm2dBlock<T>::random(in_ch, opts.state_size, opts.dirs, rng);
  blk.ssm.merge = opts.merge;
  blk.ssm.zoh = opts.zoh;
  blk.out_proj = ConvParams<T>::kaiming(in_ch, in_ch, 1, rng);
  blk.up_conv = ConvParams<T>::kaiming(in_ch, out_ch * scale * scale, 3, rng);
  return blk;
}

template <typename T>
void MubBlock<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const {
  out.push_back({prefix + ".norm.gamma", norm_gamma});
  out.push_back({prefix + ".norm.beta", norm_beta});
  ssm.collect(prefix + ".ssm", out);
  collect_conv(prefix + ".out_proj", out_proj, out);
  collect_conv(prefix + ".up_conv", up_conv, out);
}

template <typename T>
Tensor<T> mub_forward(const Tensor<T>& x, const MubBlock<T>& blk) {
  if (x.shape().c != blk.in_channels()) {
    throw ConfigError("mub_forward: input has " + std::to_string(x.shape().c) +
                      " channels, block expects " + std::to_string(blk.in_channels()));
  }
  std::vector<Tensor<T>> outs;
  for (const Tensor<T>& tile : patch_split(x, blk.patch_grid)) {
    const Tensor<T> normed = channel_layer_norm(tile, blk.norm_gamma, blk.norm_beta);
    const Tensor<T> mixed = add(ssm_2d(normed, blk.ssm), tile);
    outs.push_back(conv2d(mixed, blk.out_proj));
  }
  const Tensor<T> merged = patch_merge(outs, blk.patch_grid);
  return pixel_shuffle(conv2d(merged, blk.up_conv), blk.scale);
}

template <typename T>
BilinearUpsample<T> BilinearUpsample<T>::random(int in_ch, int out_ch, int scale, Rng& rng) {
  BilinearUpsample blk;
  blk.scale = scale;
  blk.proj = ConvParams<T>::kaiming(in_ch, out_ch, 1, rng);
  return blk;
}

template <typename T>
void BilinearUpsample<T>::collect(const std::string& prefix,
                                  std::vector<NamedTensor<T>>& out) const {
  collect_conv(prefix + ".proj", proj, out);
}

template <typename T>
Tensor<T> bilinear_upsample_forward(const Tensor<T>& x, const BilinearUpsample<T>& blk) {
  return conv2d(bilinear_resize(x, static_cast<double>(blk.scale)), blk.proj);
}

#define PANRESTORE_INSTANTIATE_MUB(T)                                                         \
  template std::vector<Tensor<T>> patch_split(const Tensor<T>&, int);                      \
  template Tensor<T> patch_merge(const std::vector<Tensor<T>>&, int);                      \
  template struct MubBlock<T>;                                                             \
  template Tensor<T> mub_forward(const Tensor<T>&, const MubBlock<T>&);                    \
  template struct BilinearUpsample<T>;                                                     \
  template Tensor<T> bilinear_upsample_forward(const Tensor<T>&, const BilinearUpsample<T>&);

PANRESTORE_INSTANTIATE_MUB(float)
PANRESTORE_INSTANTIATE_MUB(double)

#undef PANRESTORE_INSTANTIATE_MUB

}  // namespace panrestore
