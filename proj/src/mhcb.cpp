#include "panrestore/mhcb.hpp"

namespace panrestore {

template <typename T>
MhcbBlock<T> MhcbBlock<T>::random(int c, Rng& rng) {
  MhcbBlock b;
  b.conv3_a = ConvParams<T>::kaiming(c, c, 3, rng);
  b.conv5_a = ConvParams<T>::kaiming(c, c, 5, rng);
  b.fuse1_a = ConvParams<T>::kaiming(3 * c, c, 1, rng);
  b.conv3_b = ConvParams<T>::kaiming(c, c, 3, rng);
  b.conv5_b = ConvParams<T>::kaiming(c, c, 5, rng);
  b.fuse1_b = ConvParams<T>::kaiming(3 * c, c, 1, rng);
  return b;
}

template <typename T>
MhcbBlock<T> MhcbBlock<T>::zeros(int c) {
  MhcbBlock b;
  b.conv3_a = ConvParams<T>::zeros(c, c, 3);
  b.conv5_a = ConvParams<T>::zeros(c, c, 5);
  b.fuse1_a = ConvParams<T>::zeros(3 * c, c, 1);
  b.conv3_b = ConvParams<T>::zeros(c, c, 3);
  b.conv5_b = ConvParams<T>::zeros(c, c, 5);
  b.fuse1_b = ConvParams<T>::zeros(3 * c, c, 1);
  return b;
}

template <typename T>
void MhcbBlock<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const {
  collect_conv(prefix + ".conv3_a", conv3_a, out);
  collect_conv(prefix + ".conv5_a", conv5_a, out);
  collect_conv(prefix + ".fuse1_a", fuse1_a, out);
  collect_conv(prefix + ".conv3_b", conv3_b, out);
  collect_conv(prefix + ".conv5_b", conv5_b, out);
  collect_conv(prefix + ".fuse1_b", fuse1_b, out);
}

template <typename T>
Tensor<T> mhcb_forward(const Tensor<T>& x, const MhcbBlock<T>& blk) {
  if (x.shape().c != blk.channels()) {
    throw ConfigError("mhcb_forward: input has " + std::to_string(x.shape().c) +
                      " channels, block expects " + std::to_string(blk.channels()));
  }
  const Tensor<T> x1 = add(relu(conv2d(x, blk.conv3_a)), x);
  const Tensor<T> x2 = add(relu(conv2d(x, blk.conv5_a)), x);
  const Tensor<T> x3 = conv2d(concat_channels<T>({x1, x2, x}), blk.fuse1_a);
  const Tensor<T> x4 = relu(conv2d(x3, blk.conv3_b));
  const Tensor<T> x5 = relu(conv2d(x3, blk.conv5_b));
  return add(conv2d(concat_channels<T>({x3, x4, x5}), blk.fuse1_b), x);
}

template <typename T>
Tensor<T> mhcb_stack(const Tensor<T>& x, const std::vector<MhcbBlock<T>>& blocks) {
  Tensor<T> y = x;
  for (const auto& b : blocks) y = mhcb_forward(y, b);
  return y;
}

template struct MhcbBlock<float>;
template struct MhcbBlock<double>;
template Tensor<float> mhcb_forward(const Tensor<float>&, const MhcbBlock<float>&);
template Tensor<double> mhcb_forward(const Tensor<double>&, const MhcbBlock<double>&);
template Tensor<float> mhcb_stack(const Tensor<float>&, const std::vector<MhcbBlock<float>>&);
template Tensor<double> mhcb_stack(const Tensor<double>&, const std::vector<MhcbBlock<double>>&);

}  // namespace panrestore
