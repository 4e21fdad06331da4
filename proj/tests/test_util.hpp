#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "panrestore/ops.hpp"
#include "panrestore/rng.hpp"

namespace panrestore::testing {

template <typename T>
Tensor<T> random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(s);
  for (T& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Random tensor whose entries stay at least `gap` away from zero, so ReLU
// kinks and max-pool ties are not crossed by a finite-difference probe.
inline Tensor<double> random_away_from_zero(Shape s, Rng& rng, double gap = 0.05) {
  Tensor<double> t(s);
  for (double& v : t.data()) {
    const double mag = rng.uniform(gap, 1.0);
    v = rng.uniform(0.0, 1.0) < 0.5 ? -mag : mag;
  }
  return t;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return worst;
}

template <typename T>
bool bit_equal(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) return false;
  return std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

template <typename T>
ConvParams<T> random_conv(int in, int out, int k, Rng& rng, double scale = 0.5) {
  ConvParams<T> p = ConvParams<T>::zeros(in, out, k);
  for (T& v : p.weight.data()) v = static_cast<T>(rng.uniform(-scale, scale));
  for (T& v : p.bias.data()) v = static_cast<T>(rng.uniform(-0.1, 0.1));
  return p;
}

}  // namespace panrestore::testing
