#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "panrestore/tensor.hpp"

namespace panrestore {

struct GradCheckResult {
  // max_i |analytic_i - numeric_i| / max(|numeric_i|, 1e-6)
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  // Probes for which no finite-difference step kept every relu / max-pool /
  // abs branch of the base point. They are not compared.
  std::size_t skipped = 0;
};

using DoubleOp = std::function<Tensor<double>(const Tensor<double>&)>;

// Compares the reverse-mode gradient of a scalar loss built from op(x) with
// central differences in f64, extrapolated with Ridders' method from an
// initial step `eps` downwards.
// Non-scalar outputs are reduced with a fixed random projection drawn from
// `seed`.
GradCheckResult grad_check(const DoubleOp& op, const Tensor<double>& x, double eps = 1e-2,
                           std::uint64_t seed = 0);

// Same check against parameters captured by `loss`. At most `max_per_tensor`
// evenly spaced coordinates of each tensor are probed (0 means all).
GradCheckResult grad_check_params(const std::function<Tensor<double>()>& loss,
                                  std::vector<Tensor<double>> params, double eps = 1e-2,
                                  std::size_t max_per_tensor = 0);

}  // namespace panrestore
