#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "panrestore/pipeline.hpp"
#include "panrestore/rng.hpp"

namespace panrestore {

void TrainConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("lr must be positive");
  if (!(step_gamma > 0 && step_gamma < 1)) throw ConfigError("step_gamma must lie in (0, 1)");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (step_every < 1) throw ConfigError("step_every must be at least 1");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch < 1) throw ConfigError("batch must be at least 1");
  if (max_iterations < 0 || checkpoint_every < 0) {
    throw ConfigError("max_iterations and checkpoint_every must be non-negative");
  }
}

namespace {

double parse_double(std::string_view key, std::string_view v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(std::string(v), &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw ConfigError("invalid number for " + std::string(key) + ": '" + std::string(v) + "'");
}

template <typename I>
I parse_integer(std::string_view key, std::string_view v) {
  I out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("invalid integer for " + std::string(key) + ": '" + std::string(v) + "'");
  }
  return out;
}

}  // namespace

bool TrainConfig::set(std::string_view key, std::string_view value) {
  if (key == "lr") lr = parse_double(key, value);
  else if (key == "beta1") beta1 = parse_double(key, value);
  else if (key == "beta2") beta2 = parse_double(key, value);
  else if (key == "adam_eps") adam_eps = parse_double(key, value);
  else if (key == "step_every") step_every = parse_integer<int>(key, value);
  else if (key == "step_gamma") step_gamma = parse_double(key, value);
  else if (key == "epochs") epochs = parse_integer<int>(key, value);
  else if (key == "batch") batch = parse_integer<int>(key, value);
  else if (key == "seed") seed = parse_integer<std::uint64_t>(key, value);
  else if (key == "max_iterations") max_iterations = parse_integer<int>(key, value);
  else if (key == "checkpoint_every") checkpoint_every = parse_integer<int>(key, value);
  else return false;
  return true;
}

double TrainConfig::lr_at_epoch(int epoch) const {
  return lr * std::pow(step_gamma, epoch / step_every);
}

Adam::Adam(std::vector<Tensor<float>> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor<float>& p = params_[k];
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double gi = g[i];
      m[i] = beta1_ * m[i] + (1 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1 - beta2_) * gi * gi;
      const double update = lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
      p[i] = static_cast<float>(p[i] - update);
    }
  }
}

double dataset_loss(const Model<float>& model, const std::vector<Sample>& data) {
  NoGradGuard guard;
  double total = 0;
  for (const auto& s : data) total += l1_loss(model.forward(s.input), s.target).item();
  return data.empty() ? 0.0 : total / static_cast<double>(data.size());
}

void write_loss_curve(const std::filesystem::path& path, const std::vector<LossPoint>& curve) {
  std::ofstream os(path);
  if (!os) throw RuntimeFailure("cannot write loss curve: " + path.string());
  os << "iteration,l1\n" << std::setprecision(10);
  for (const auto& p : curve) os << p.iteration << ',' << p.l1 << '\n';
}

TrainResult train(Model<float>& model, const std::vector<Sample>& data, const TrainConfig& tc,
                  const std::optional<std::filesystem::path>& out_dir) {
  tc.validate();
  if (data.empty()) throw ConfigError("train: empty dataset");
  const TaskSpec spec = task_spec(model.config().task);
  for (const auto& s : data) {
    if (s.input.shape().c != spec.in_channels || s.target.shape().c != spec.out_channels) {
      throw ConfigError("train: sample '" + s.id + "' does not match task " +
                        std::string(to_string(model.config().task)));
    }
  }
  if (out_dir) std::filesystem::create_directories(*out_dir);

  std::vector<Tensor<float>> params;
  for (const auto& p : model.parameters()) params.push_back(p.tensor);
  Adam adam(params, tc.beta1, tc.beta2, tc.adam_eps);

  Rng rng(tc.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  bool done = false;
  for (int epoch = 0; epoch < tc.epochs && !done; ++epoch) {
    const double lr = tc.lr_at_epoch(epoch);
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (std::size_t start = 0; start < order.size() && !done; start += tc.batch) {
      const std::size_t stop = std::min(order.size(), start + tc.batch);
      const float inv = 1.0f / static_cast<float>(stop - start);
      adam.zero_grad();
      double batch_loss = 0;
      for (std::size_t k = start; k < stop; ++k) {
        const Sample& s = data[order[k]];
        const Tensor<float> loss = l1_loss(model.forward(s.input), s.target);
        batch_loss += loss.item();
        scale(loss, inv).backward();
      }
      batch_loss /= static_cast<double>(stop - start);
      if (!std::isfinite(batch_loss)) {
        if (out_dir) write_loss_curve(*out_dir / "loss_curve.csv", result.curve);
        throw RuntimeFailure("non-finite loss at iteration " + std::to_string(result.iterations));
      }
      adam.step(lr);
      result.curve.push_back({result.iterations, batch_loss});
      ++result.iterations;
      if (tc.max_iterations > 0 && result.iterations >= tc.max_iterations) done = true;
    }
    if (out_dir && tc.checkpoint_every > 0 && (epoch + 1) % tc.checkpoint_every == 0) {
      save_checkpoint(*out_dir / ("checkpoint_" + std::to_string(epoch + 1) + ".pnrs"), model);
    }
  }
  if (out_dir) {
    write_loss_curve(*out_dir / "loss_curve.csv", result.curve);
    save_checkpoint(*out_dir / "model.pnrs", model);
  }
  return result;
}

}  // namespace panrestore
