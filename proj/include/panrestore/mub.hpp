#pragma once

#include <string>
#include <vector>

#include "panrestore/ssm.hpp"

namespace panrestore {

// Non-overlapping p x p tiling in row-major tile order. Throws ConfigError
// naming the dimension that is not divisible by p.
template <typename T>
std::vector<Tensor<T>> patch_split(const Tensor<T>& x, int p);
template <typename T>
Tensor<T> patch_merge(const std::vector<Tensor<T>>& tiles, int p);

struct MubOptions {
  int patch_grid = 2;
  int state_size = 16;
  std::vector<ScanDirection> dirs{std::begin(kAllDirections), std::end(kAllDirections)};
  DirectionMerge merge = DirectionMerge::kSum;
  ZohMode zoh = ZohMode::kStandard;
};

// Mamba upsample block. Each patch goes through layer norm, 2-D selective
// scan, a residual add and a 1x1 projection; the reassembled map is then
// upsampled by a 3x3 conv to out_ch * r^2 channels and a pixel shuffle.
template <typename T>
struct MubBlock {
  int patch_grid = 2;
  int scale = 2;
  Tensor<T> norm_gamma;
  Tensor<T> norm_beta;
  Ssm2dBlock<T> ssm;
  ConvParams<T> out_proj;
  ConvParams<T> up_conv;

  int in_channels() const { return out_proj.in_channels(); }
  int out_channels() const { return up_conv.out_channels() / (scale * scale); }

  static MubBlock random(int in_ch, int out_ch, int scale, const MubOptions& opts, Rng& rng);

  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const;
};

template <typename T>
Tensor<T> mub_forward(const Tensor<T>& x, const MubBlock<T>& blk);

// Structural stand-in for the MUB: bilinear upscale then a 1x1 conv.
template <typename T>
struct BilinearUpsample {
  int scale = 2;
  ConvParams<T> proj;

  static BilinearUpsample random(int in_ch, int out_ch, int scale, Rng& rng);
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const;
};

template <typename T>
Tensor<T> bilinear_upsample_forward(const Tensor<T>& x, const BilinearUpsample<T>& blk);

}  // namespace panrestore
