#pragma once

#include <cstdint>

#include <vector>

#include "panrestore/rng.hpp"
#include "panrestore/tensor.hpp"

namespace panrestore {

// Convolution weights (out_ch x in_ch x k x k) and bias (1 x out_ch x 1 x 1).
// Stride 1 with zero "same" padding (k - 1) / 2, k in {1, 3, 5}.
// While alive, the piecewise-linear ops (relu, max pools, l1_loss) fold their
// branch decisions on the current thread into a running hash. Finite-difference
// checks compare hashes to spot probes that straddle a kink.
class BranchTrace {
 public:
  BranchTrace();
  ~BranchTrace();
  BranchTrace(const BranchTrace&) = delete;
  BranchTrace& operator=(const BranchTrace&) = delete;

  static BranchTrace* active();
  void record(std::uint64_t v) { hash_ = (hash_ ^ v) * 1099511628211ull; }
  std::uint64_t signature() const { return hash_; }

 private:
  BranchTrace* previous_;
  std::uint64_t hash_ = 1469598103934665603ull;
};

template <typename T>
struct ConvParams {
  Tensor<T> weight;
  Tensor<T> bias;

  int in_channels() const { return weight.shape().c; }
  int out_channels() const { return weight.shape().n; }
  int kernel() const { return weight.shape().h; }
  int padding() const { return (kernel() - 1) / 2; }

  // Kaiming-uniform over fan-in with negative slope sqrt(5), i.e. bound
  // 1 / sqrt(fan_in); zero bias.
  static ConvParams kaiming(int in_ch, int out_ch, int k, Rng& rng);
  static ConvParams zeros(int in_ch, int out_ch, int k);
};

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvParams<T>& p);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T>
Tensor<T> softplus(const Tensor<T>& x);

// Per-channel mean / max over all spatial positions; result is b x c x 1 x 1.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);
template <typename T>
Tensor<T> global_max_pool(const Tensor<T>& x);

// 2x2 window, stride 2. Odd trailing rows/columns are dropped.
template <typename T>
Tensor<T> max_pool2x2(const Tensor<T>& x);

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs);
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int begin, int count);

template <typename T>
Tensor<T> add(const Tensor<T>& x, const Tensor<T>& y);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);
// x * s with s of shape b x c x 1 x 1 broadcast over the spatial dims.
template <typename T>
Tensor<T> mul_channel_scale(const Tensor<T>& x, const Tensor<T>& s);

// Half-pixel-centred bilinear interpolation; output dims = round(dim * factor).
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, double factor);

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int r);
template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int r);

// Normalizes across channels at every pixel, then applies per-channel
// gamma / beta (both 1 x c x 1 x 1).
template <typename T>
Tensor<T> channel_layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                             T eps = T(1e-5));

// Mean absolute error over all elements; 1 x 1 x 1 x 1.
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
// Sum of x * weights with constant (non-differentiated) weights.
template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, const std::vector<T>& weights);

}  // namespace panrestore
