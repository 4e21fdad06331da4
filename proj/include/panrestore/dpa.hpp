#pragma once

#include "panrestore/ops.hpp"

namespace panrestore {

enum class DpaMode {
  // x * sigmoid(avg) + x * sigmoid(max)
  kDualStream,
  // Both terms use the average-pool stream, i.e. 2 * x * sigmoid(avg).
  kAverageOnly,
};

// Dual pool attention. Parameter-free: global average and global max pooling
// produce two channel descriptors, each squashed by a sigmoid and applied to
// the input; the two recalibrated maps are summed.
template <typename T>
Tensor<T> dpa_forward(const Tensor<T>& x, DpaMode mode = DpaMode::kDualStream);

}  // namespace panrestore
