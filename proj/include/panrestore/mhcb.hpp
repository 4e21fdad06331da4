#pragma once

#include <string>
#include <vector>

#include "panrestore/ops.hpp"

namespace panrestore {

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

// Multi-scale hybrid cross block. Every conv preserves the channel width c
// except the two 1x1 fusions, which map 3c -> c.
//
//   X1  = ReLU(conv3_a(x)) + x         X2 = ReLU(conv5_a(x)) + x
//   X3  = fuse1_a([X1, X2, x])
//   X4  = ReLU(conv3_b(X3))            X5 = ReLU(conv5_b(X3))
//   out = fuse1_b([X3, X4, X5]) + x
template <typename T>
struct MhcbBlock {
  ConvParams<T> conv3_a, conv5_a, fuse1_a;
  ConvParams<T> conv3_b, conv5_b, fuse1_b;

  int channels() const { return conv3_a.in_channels(); }

  static MhcbBlock random(int channels, Rng& rng);
  static MhcbBlock zeros(int channels);

  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const;
};

template <typename T>
Tensor<T> mhcb_forward(const Tensor<T>& x, const MhcbBlock<T>& blk);

// Sequential composition of blocks; an empty list is the identity.
template <typename T>
Tensor<T> mhcb_stack(const Tensor<T>& x, const std::vector<MhcbBlock<T>>& blocks);

template <typename T>
void collect_conv(const std::string& prefix, const ConvParams<T>& p,
                  std::vector<NamedTensor<T>>& out) {
  out.push_back({prefix + ".weight", p.weight});
  out.push_back({prefix + ".bias", p.bias});
}

}  // namespace panrestore
