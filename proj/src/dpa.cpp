#include "panrestore/dpa.hpp"

namespace panrestore {

template <typename T>
Tensor<T> dpa_forward(const Tensor<T>& x, DpaMode mode) {
  const Tensor<T> avg_scale = sigmoid(global_avg_pool(x));
  const Tensor<T> second = mode == DpaMode::kDualStream ? sigmoid(global_max_pool(x)) : avg_scale;
  return add(mul_channel_scale(x, avg_scale), mul_channel_scale(x, second));
}

template Tensor<float> dpa_forward(const Tensor<float>&, DpaMode);
template Tensor<double> dpa_forward(const Tensor<double>&, DpaMode);

}  // namespace panrestore
