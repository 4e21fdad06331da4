#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "panrestore/dpa.hpp"
#include "panrestore/mhcb.hpp"
#include "panrestore/mub.hpp"

namespace panrestore {

enum class Task { kSrX2, kSrX4, kColorize, kJointX2 };

inline constexpr Task kAllTasks[] = {Task::kSrX2, Task::kSrX4, Task::kColorize, Task::kJointX2};

std::string_view to_string(Task task);
std::optional<Task> parse_task(std::string_view name);

// Channel and resolution contract of a task. input_size / output_size are the
// reference tile sizes; any size meeting the model's divisibility works.
struct TaskSpec {
  int in_channels;
  int out_channels;
  int sr_factor;
  int input_size;
  int output_size;
};

TaskSpec task_spec(Task task);

struct ModelConfig {
  Task task = Task::kJointX2;
  int depth = 4;
  int growth = 32;
  int mhcb_count = 2;
  bool enable_dpa = true;
  bool enable_mub = true;
  bool enable_mhcb = true;
  std::vector<ScanDirection> scan_dirs{std::begin(kAllDirections), std::end(kAllDirections)};
  int patch_grid = 2;
  int state_size = 16;
  std::uint64_t seed = 10;
  DirectionMerge merge = DirectionMerge::kSum;
  ZohMode zoh = ZohMode::kStandard;
  DpaMode dpa_mode = DpaMode::kDualStream;

  void validate() const;
  int level_width(int level) const { return growth << level; }
  std::vector<int> level_widths() const;
  int node_count() const { return depth * (depth + 1) / 2; }
  // Input height and width must be multiples of this.
  int input_multiple() const;

  // Flat "key = value" lines; parse() rejects unknown keys.
  std::string serialize() const;
  static ModelConfig parse(std::string_view text);
  // Applies one key; returns false when the key is not a model field.
  bool set(std::string_view key, std::string_view value);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Disables one module ("dpa", "mub" or "mhcb") and installs its fallback:
// identity skips, bilinear + 1x1 upsampling, or a plain 3x3 conv stem.
ModelConfig ablate(ModelConfig cfg, std::string_view flag);

// Nested UNet++ with an MHCB stem, DPA on every horizontal skip and MUB
// upsampling between levels and in the super-resolution head.
template <typename T>
class Model {
 public:
  static Model build(const ModelConfig& cfg);

  Tensor<T> forward(const Tensor<T>& x) const;

  const ModelConfig& config() const { return cfg_; }
  std::vector<NamedTensor<T>> parameters() const;
  std::size_t parameter_count() const;

 private:
  struct ConvBlock {
    ConvParams<T> first;
    ConvParams<T> second;
  };
  struct Upsampler {
    std::optional<MubBlock<T>> mub;
    std::optional<BilinearUpsample<T>> bilinear;
  };

  static Upsampler make_upsampler(const ModelConfig& cfg, int channels, Rng& rng);
  static Tensor<T> run(const Upsampler& up, const Tensor<T>& x);
  static Tensor<T> run(const ConvBlock& blk, const Tensor<T>& x);
  static void collect(const std::string& prefix, const Upsampler& up,
                      std::vector<NamedTensor<T>>& out);

  void check_input(const Tensor<T>& x) const;

  ModelConfig cfg_;
  ConvParams<T> stem_conv_;
  std::vector<MhcbBlock<T>> stem_blocks_;
  // blocks_[i][j] builds node X(i, j); blocks_[0][0] is unused (stem).
  std::vector<std::vector<ConvBlock>> blocks_;
  // ups_[i][j] lifts X(i + 1, j - 1) into node X(i, j), j >= 1.
  std::vector<std::vector<Upsampler>> ups_;
  std::vector<Upsampler> head_ups_;
  ConvParams<T> head_proj_;
};

// Checkpoint layout (little-endian): "PNRS", u32 version, u32 length +
// serialized ModelConfig, u32 entry count, then per entry u32 name length,
// name bytes, four u32 dims and f32 data.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Model<float>& model);
Model<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace panrestore
