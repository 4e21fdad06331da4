#include "panrestore/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "panrestore/ops.hpp"
#include "panrestore/rng.hpp"

namespace panrestore {

namespace {

Tensor<double> reduce_to_scalar(const Tensor<double>& y, const std::vector<double>& projection) {
  if (y.numel() == 1) return y;
  return weighted_sum(y, projection);
}

void record(GradCheckResult& result, double analytic, double numeric, std::size_t index) {
  const double rel = std::abs(analytic - numeric) / std::max(std::abs(numeric), 1e-6);
  if (result.checked == 0 || rel > result.max_rel_error) {
    result.max_rel_error = rel;
    result.worst_index = index;
    result.worst_analytic = analytic;
    result.worst_numeric = numeric;
  }
  ++result.checked;
}

struct Traced {
  double value;
  std::uint64_t signature;
};

template <typename F>
Traced traced(F&& eval) {
  BranchTrace trace;
  const double v = eval();
  return {v, trace.signature()};
}

// Ridders' extrapolation of central differences over steps eps, eps / 1.4,
// ... down to about eps * 1e-4. Each tableau entry combines at most
// kMaxOrder + 1 neighbouring steps. Its error estimate is the spread against
// its neighbours plus the round-off it carries (about 4 ulp of f per step,
// divided by h and amplified by the extrapolation weights), and the entry
// with the smallest estimate wins. Large steps then serve smooth coordinates
// and small steps serve sharply curved ones without trusting steps that only
// resolve noise. Steps whose evaluations leave the base branch signature are
// dropped and restart the tableau. Returns false when no clean step exists.
template <typename F>
bool central_difference(double& slot, double eps, std::uint64_t base, F&& eval, double& out) {
  constexpr int kColumns = 28, kMaxOrder = 6;
  constexpr double kShrink = 1.4, kShrink2 = kShrink * kShrink;
  constexpr double kRound = 4 * std::numeric_limits<double>::epsilon();
  const double saved = slot;
  auto diff = [&](double h, double& d, double& noise) {
    slot = saved + h;
    const Traced plus = traced(eval);
    slot = saved - h;
    const Traced minus = traced(eval);
    slot = saved;
    d = (plus.value - minus.value) / (2 * h);
    noise = kRound * std::max(std::abs(plus.value), std::abs(minus.value)) / h;
    return plus.signature == base && minus.signature == base;
  };

  // prev / cur: order-j estimates (and their round-off) ending at the
  // previous / current step.
  double prev[kMaxOrder + 1], cur[kMaxOrder + 1];
  double prev_noise[kMaxOrder + 1], cur_noise[kMaxOrder + 1];
  int run = 0;  // clean consecutive steps so far
  double err = std::numeric_limits<double>::infinity();
  bool found = false;
  double h = eps;
  for (int i = 0; i < kColumns; ++i, h /= kShrink) {
    if (!diff(h, cur[0], cur_noise[0])) {
      run = 0;
      continue;
    }
    if (!found) out = cur[0];
    found = true;
    double fac = kShrink2;
    const int orders = std::min(run, kMaxOrder);
    for (int j = 1; j <= orders; ++j) {
      cur[j] = (cur[j - 1] * fac - prev[j - 1]) / (fac - 1);
      cur_noise[j] = (cur_noise[j - 1] * fac + prev_noise[j - 1]) / (fac - 1);
      fac *= kShrink2;
      const double e =
          std::max(std::abs(cur[j] - cur[j - 1]), std::abs(cur[j] - prev[j - 1])) + cur_noise[j];
      if (e <= err) {
        err = e;
        out = cur[j];
      }
    }
    std::copy(cur, cur + orders + 1, prev);
    std::copy(cur_noise, cur_noise + orders + 1, prev_noise);
    ++run;
  }
  return found;
}

}  // namespace

GradCheckResult grad_check(const DoubleOp& op, const Tensor<double>& x, double eps,
                           std::uint64_t seed) {
  if (!(eps > 0)) throw ConfigError("grad_check: eps must be positive");
  Tensor<double> input = x.clone();
  input.set_requires_grad(true);

  std::vector<double> projection;
  std::uint64_t base = 0;
  {
    NoGradGuard guard;
    BranchTrace trace;
    const Tensor<double> probe = op(input);
    base = trace.signature();
    Rng rng(seed);
    projection.resize(probe.numel());
    for (double& v : projection) v = rng.uniform(-1.0, 1.0);
  }

  const Tensor<double> loss = reduce_to_scalar(op(input), projection);
  loss.backward();
  std::vector<double> analytic(input.numel(), 0.0);
  if (input.has_grad()) std::copy(input.grad().begin(), input.grad().end(), analytic.begin());

  GradCheckResult result;
  NoGradGuard guard;
  const auto eval = [&] { return reduce_to_scalar(op(input), projection).item(); };
  for (std::size_t i = 0; i < input.numel(); ++i) {
    double numeric = 0;
    if (central_difference(input[i], eps, base, eval, numeric)) {
      record(result, analytic[i], numeric, i);
    } else {
      ++result.skipped;
    }
  }
  return result;
}

GradCheckResult grad_check_params(const std::function<Tensor<double>()>& loss_fn,
                                  std::vector<Tensor<double>> params, double eps,
                                  std::size_t max_per_tensor) {
  if (!(eps > 0)) throw ConfigError("grad_check_params: eps must be positive");
  for (auto& p : params) {
    p.set_requires_grad(true);
    if (p.has_grad()) p.zero_grad();
  }
  const Tensor<double> loss = loss_fn();
  if (loss.numel() != 1) throw ConfigError("grad_check_params: loss must be scalar");
  loss.backward();

  GradCheckResult result;
  NoGradGuard guard;
  const auto eval = [&] { return loss_fn().item(); };
  const std::uint64_t base = traced(eval).signature;
  std::size_t flat_offset = 0;
  for (auto& p : params) {
    const std::size_t count = p.numel();
    const std::size_t probes = max_per_tensor == 0 ? count : std::min(count, max_per_tensor);
    for (std::size_t k = 0; k < probes; ++k) {
      const std::size_t i = probes == count ? k : (k * count) / probes;
      const double analytic = p.has_grad() ? p.grad()[i] : 0.0;
      double numeric = 0;
      if (central_difference(p[i], eps, base, eval, numeric)) {
        record(result, analytic, numeric, flat_offset + i);
      } else {
        ++result.skipped;
      }
    }
    flat_offset += count;
  }
  return result;
}

}  // namespace panrestore
