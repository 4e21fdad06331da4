#include "panrestore/model.hpp"

#include <charconv>
#include <sstream>

namespace panrestore {

std::string_view to_string(Task task) {
  switch (task) {
    case Task::kSrX2: return "sr_x2";
    case Task::kSrX4: return "sr_x4";
    case Task::kColorize: return "colorize";
    case Task::kJointX2: return "joint_x2";
  }
  return "?";
}

std::optional<Task> parse_task(std::string_view name) {
  for (Task t : kAllTasks) {
    if (to_string(t) == name) return t;
  }
  return std::nullopt;
}

TaskSpec task_spec(Task task) {
  switch (task) {
    case Task::kSrX2: return {1, 1, 2, 128, 256};
    case Task::kSrX4: return {1, 1, 4, 64, 256};
    case Task::kColorize: return {1, 3, 1, 256, 256};
    case Task::kJointX2: return {1, 3, 2, 128, 256};
  }
  throw ConfigError("unknown task");
}

void ModelConfig::validate() const {
  if (depth < 2 || depth > 4) {
    throw ConfigError("depth must be 2, 3 or 4, got " + std::to_string(depth));
  }
  if (growth < 1) throw ConfigError("growth must be at least 1, got " + std::to_string(growth));
  if (mhcb_count < 0) throw ConfigError("mhcb_count must be non-negative");
  if (patch_grid < 1 || patch_grid > 3) {
    throw ConfigError("patch grid must be 1, 2 or 3, got " + std::to_string(patch_grid));
  }
  if (state_size < 1) throw ConfigError("state size must be positive");
  if (scan_dirs.empty()) throw ConfigError("scan direction set must be non-empty");
}

std::vector<int> ModelConfig::level_widths() const {
  std::vector<int> widths;
  for (int l = 0; l < depth; ++l) widths.push_back(level_width(l));
  return widths;
}

int ModelConfig::input_multiple() const {
  return (1 << (depth - 1)) * (enable_mub ? patch_grid : 1);
}

namespace {

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError("invalid boolean for " + std::string(key) + ": '" + std::string(v) + "'");
}

template <typename I>
I parse_int(std::string_view key, std::string_view v) {
  I out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("invalid integer for " + std::string(key) + ": '" + std::string(v) + "'");
  }
  return out;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

bool ModelConfig::set(std::string_view key, std::string_view value) {
  if (key == "task") {
    const auto t = parse_task(value);
    if (!t) throw ConfigError("unknown task '" + std::string(value) + "'");
    task = *t;
  } else if (key == "depth") {
    depth = parse_int<int>(key, value);
  } else if (key == "growth") {
    growth = parse_int<int>(key, value);
  } else if (key == "mhcb_count") {
    mhcb_count = parse_int<int>(key, value);
  } else if (key == "enable_dpa") {
    enable_dpa = parse_bool(key, value);
  } else if (key == "enable_mub") {
    enable_mub = parse_bool(key, value);
  } else if (key == "enable_mhcb") {
    enable_mhcb = parse_bool(key, value);
  } else if (key == "scan_dirs") {
    scan_dirs = parse_direction_set(value);
  } else if (key == "patch_grid") {
    patch_grid = parse_int<int>(key, value);
  } else if (key == "state_size") {
    state_size = parse_int<int>(key, value);
  } else if (key == "seed") {
    seed = parse_int<std::uint64_t>(key, value);
  } else if (key == "dir_merge") {
    if (value == "sum") merge = DirectionMerge::kSum;
    else if (value == "mean") merge = DirectionMerge::kMean;
    else throw ConfigError("dir_merge must be sum or mean");
  } else if (key == "zoh_mode") {
    if (value == "standard") zoh = ZohMode::kStandard;
    else if (value == "printed") zoh = ZohMode::kPrintedExpA;
    else throw ConfigError("zoh_mode must be standard or printed");
  } else if (key == "dpa_mode") {
    if (value == "dual") dpa_mode = DpaMode::kDualStream;
    else if (value == "avg_only") dpa_mode = DpaMode::kAverageOnly;
    else throw ConfigError("dpa_mode must be dual or avg_only");
  } else {
    return false;
  }
  return true;
}

std::string ModelConfig::serialize() const {
  std::ostringstream os;
  os << "task = " << to_string(task) << "\n"
     << "depth = " << depth << "\n"
     << "growth = " << growth << "\n"
     << "mhcb_count = " << mhcb_count << "\n"
     << "enable_dpa = " << (enable_dpa ? "true" : "false") << "\n"
     << "enable_mub = " << (enable_mub ? "true" : "false") << "\n"
     << "enable_mhcb = " << (enable_mhcb ? "true" : "false") << "\n"
     << "scan_dirs = " << format_direction_set(scan_dirs) << "\n"
     << "patch_grid = " << patch_grid << "\n"
     << "state_size = " << state_size << "\n"
     << "seed = " << seed << "\n"
     << "dir_merge = " << (merge == DirectionMerge::kSum ? "sum" : "mean") << "\n"
     << "zoh_mode = " << (zoh == ZohMode::kStandard ? "standard" : "printed") << "\n"
     << "dpa_mode = " << (dpa_mode == DpaMode::kDualStream ? "dual" : "avg_only") << "\n";
  return os.str();
}

ModelConfig ModelConfig::parse(std::string_view text) {
  ModelConfig cfg;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    const std::string_view line = trim(text.substr(pos, eol - pos));
    pos = eol + 1;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line without '=': '" + std::string(line) + "'");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (!cfg.set(key, value)) throw ConfigError("unknown model config key '" + std::string(key) + "'");
  }
  cfg.validate();
  return cfg;
}

ModelConfig ablate(ModelConfig cfg, std::string_view flag) {
  if (flag == "dpa") {
    cfg.enable_dpa = false;
  } else if (flag == "mub") {
    cfg.enable_mub = false;
  } else if (flag == "mhcb") {
    cfg.enable_mhcb = false;
    cfg.mhcb_count = 0;
  } else {
    throw ConfigError("unknown ablation flag '" + std::string(flag) + "'");
  }
  return cfg;
}

// ---------------------------------------------------------------------------

template <typename T>
typename Model<T>::Upsampler Model<T>::make_upsampler(const ModelConfig& cfg, int channels,
                                                      Rng& rng) {
  Upsampler up;
  if (cfg.enable_mub) {
    MubOptions opts;
    opts.patch_grid = cfg.patch_grid;
    opts.state_size = cfg.state_size;
    opts.dirs = cfg.scan_dirs;
    opts.merge = cfg.merge;
    opts.zoh = cfg.zoh;
    up.mub = MubBlock<T>::random(channels, channels, 2, opts, rng);
  } else {
    up.bilinear = BilinearUpsample<T>::random(channels, channels, 2, rng);
  }
  return up;
}

template <typename T>
Tensor<T> Model<T>::run(const Upsampler& up, const Tensor<T>& x) {
  return up.mub ? mub_forward(x, *up.mub) : bilinear_upsample_forward(x, *up.bilinear);
}

template <typename T>
Tensor<T> Model<T>::run(const ConvBlock& blk, const Tensor<T>& x) {
  return relu(conv2d(relu(conv2d(x, blk.first)), blk.second));
}

template <typename T>
void Model<T>::collect(const std::string& prefix, const Upsampler& up,
                       std::vector<NamedTensor<T>>& out) {
  if (up.mub) up.mub->collect(prefix + ".mub", out);
  if (up.bilinear) up.bilinear->collect(prefix + ".bilinear", out);
}

template <typename T>
Model<T> Model<T>::build(const ModelConfig& cfg) {
  cfg.validate();
  const TaskSpec spec = task_spec(cfg.task);
  Rng rng(cfg.seed);
  Model m;
  m.cfg_ = cfg;
  const int d = cfg.depth;
  const auto width = [&](int level) { return cfg.level_width(level); };

  m.stem_conv_ = ConvParams<T>::kaiming(spec.in_channels, width(0), 3, rng);
  if (cfg.enable_mhcb) {
    for (int k = 0; k < cfg.mhcb_count; ++k) {
      m.stem_blocks_.push_back(MhcbBlock<T>::random(width(0), rng));
    }
  }

  m.blocks_.resize(d);
  m.ups_.resize(d);
  for (int i = 0; i < d; ++i) {
    m.blocks_[i].resize(d - i);
    m.ups_[i].resize(d - i);
  }
  for (int i = 1; i < d; ++i) {
    m.blocks_[i][0] = {ConvParams<T>::kaiming(width(i - 1), width(i), 3, rng),
                       ConvParams<T>::kaiming(width(i), width(i), 3, rng)};
  }
  for (int j = 1; j < d; ++j) {
    for (int i = 0; i + j < d; ++i) {
      m.ups_[i][j] = make_upsampler(cfg, width(i + 1), rng);
      const int in_ch = j * width(i) + width(i + 1);
      m.blocks_[i][j] = {ConvParams<T>::kaiming(in_ch, width(i), 3, rng),
                         ConvParams<T>::kaiming(width(i), width(i), 3, rng)};
    }
  }

  const int head_steps = spec.sr_factor == 4 ? 2 : (spec.sr_factor == 2 ? 1 : 0);
  for (int s = 0; s < head_steps; ++s) m.head_ups_.push_back(make_upsampler(cfg, width(0), rng));
  m.head_proj_ = ConvParams<T>::kaiming(width(0), spec.out_channels, 1, rng);
  return m;
}

template <typename T>
void Model<T>::check_input(const Tensor<T>& x) const {
  const TaskSpec spec = task_spec(cfg_.task);
  const Shape s = x.shape();
  const int mult = cfg_.input_multiple();
  if (s.n < 1 || s.c != spec.in_channels || s.h < mult || s.w < mult || s.h % mult != 0 ||
      s.w % mult != 0) {
    throw ConfigError("task " + std::string(to_string(cfg_.task)) + " expects input N x " +
                      std::to_string(spec.in_channels) + " x H x W with H, W multiples of " +
                      std::to_string(mult) + " (reference 1x" + std::to_string(spec.in_channels) +
                      "x" + std::to_string(spec.input_size) + "x" +
                      std::to_string(spec.input_size) + "), got " + s.str());
  }
}

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& x) const {
  check_input(x);
  const int d = cfg_.depth;
  std::vector<std::vector<Tensor<T>>> nodes(d);
  std::vector<std::vector<Tensor<T>>> skips(d);
  for (int i = 0; i < d; ++i) nodes[i].resize(d - i);

  nodes[0][0] = mhcb_stack(conv2d(x, stem_conv_), stem_blocks_);
  for (int i = 1; i < d; ++i) nodes[i][0] = run(blocks_[i][0], max_pool2x2(nodes[i - 1][0]));

  const auto skip = [&](int i, int k) -> const Tensor<T>& {
    if (!cfg_.enable_dpa) return nodes[i][k];
    while (static_cast<int>(skips[i].size()) <= k) {
      const int next = static_cast<int>(skips[i].size());
      skips[i].push_back(dpa_forward(nodes[i][next], cfg_.dpa_mode));
    }
    return skips[i][k];
  };

  for (int j = 1; j < d; ++j) {
    for (int i = 0; i + j < d; ++i) {
      std::vector<Tensor<T>> inputs;
      for (int k = 0; k < j; ++k) inputs.push_back(skip(i, k));
      inputs.push_back(run(ups_[i][j], nodes[i + 1][j - 1]));
      nodes[i][j] = run(blocks_[i][j], concat_channels(inputs));
    }
  }

  Tensor<T> y = nodes[0][d - 1];
  for (const auto& up : head_ups_) y = run(up, y);
  return conv2d(y, head_proj_);
}

template <typename T>
std::vector<NamedTensor<T>> Model<T>::parameters() const {
  std::vector<NamedTensor<T>> out;
  collect_conv("stem.conv", stem_conv_, out);
  for (std::size_t k = 0; k < stem_blocks_.size(); ++k) {
    stem_blocks_[k].collect("stem.mhcb" + std::to_string(k), out);
  }
  const int d = cfg_.depth;
  for (int j = 0; j < d; ++j) {
    for (int i = 0; i + j < d; ++i) {
      if (i == 0 && j == 0) continue;
      const std::string node = "node" + std::to_string(i) + "_" + std::to_string(j);
      if (j > 0) collect(node + ".up", ups_[i][j], out);
      collect_conv(node + ".conv1", blocks_[i][j].first, out);
      collect_conv(node + ".conv2", blocks_[i][j].second, out);
    }
  }
  for (std::size_t k = 0; k < head_ups_.size(); ++k) {
    collect("head.up" + std::to_string(k), head_ups_[k], out);
  }
  collect_conv("head.proj", head_proj_, out);
  return out;
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : parameters()) total += p.tensor.numel();
  return total;
}

template class Model<float>;
template class Model<double>;

}  // namespace panrestore
