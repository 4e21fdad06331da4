#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "panrestore/metrics.hpp"
#include "panrestore/model.hpp"

namespace panrestore {

// ---------------------------------------------------------------------------
// Image I/O (8-bit PNG). Tensors are 1 x C x H x W in [0, 1], RGB order.
// ---------------------------------------------------------------------------

Tensor<float> read_image(const std::filesystem::path& path, int channels);
void write_image(const std::filesystem::path& path, const Tensor<float>& image);
void write_rgb8(const std::filesystem::path& path, const Rgb8Image& image);

// BT.601 luma of a 1 x 3 x H x W image.
Tensor<float> rgb_to_pan(const Tensor<float>& rgb);
// Bicubic resize to size x size.
Tensor<float> bicubic_resize(const Tensor<float>& image, int size);

// ---------------------------------------------------------------------------
// Dataset ingestion.
// ---------------------------------------------------------------------------

enum class Split { kTrain, kVal, kTest, kAll };
std::optional<Split> parse_split(std::string_view name);

struct DatasetSpec {
  std::filesystem::path root;  // holds rgb/ and optionally pan/
  Split split = Split::kTrain;
  int tile_size = 0;  // 0 keeps the stored size; otherwise centre-crop
  Task task = Task::kJointX2;
};

struct Sample {
  std::string id;
  Tensor<float> input;
  Tensor<float> target;
};

// Builds one training pair from an RGB tile (and an optional PAN plane).
Sample make_sample(std::string id, const Tensor<float>& rgb, Task task,
                   const std::optional<Tensor<float>>& pan = std::nullopt);

// Deterministic 90/10 train/holdout assignment by filename hash.
bool in_holdout(std::string_view filename);

// Reads rgb/*.png in lexicographic order; unreadable or undersized tiles are
// skipped with a warning on stderr.
std::vector<Sample> ingest(const DatasetSpec& spec);

// Smooth, colourful synthetic RGB tiles for smoke runs.
std::vector<Tensor<float>> make_toy_tiles(int count, int size, std::uint64_t seed);
void write_toy_corpus(const std::filesystem::path& root, int count, int size, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Training.
// ---------------------------------------------------------------------------

struct TrainConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double adam_eps = 1e-8;
  int step_every = 10;  // epochs between learning-rate decays
  double step_gamma = 0.5;
  int epochs = 32;
  int batch = 1;
  std::uint64_t seed = 10;
  // Stops after this many optimizer steps when positive.
  int max_iterations = 0;
  // Writes checkpoint_<epoch>.pnrs every N epochs when positive and an output
  // directory is given.
  int checkpoint_every = 0;

  void validate() const;
  bool set(std::string_view key, std::string_view value);
  double lr_at_epoch(int epoch) const;
};

struct LossPoint {
  int iteration;
  double l1;
};

struct TrainResult {
  std::vector<LossPoint> curve;
  int iterations = 0;

  double initial_loss() const { return curve.empty() ? 0.0 : curve.front().l1; }
  double final_loss() const { return curve.empty() ? 0.0 : curve.back().l1; }
};

class Adam {
 public:
  Adam(std::vector<Tensor<float>> params, double beta1, double beta2, double eps);
  void step(double lr);
  void zero_grad();

 private:
  std::vector<Tensor<float>> params_;
  std::vector<std::vector<double>> m_, v_;
  double beta1_, beta2_, eps_;
  int t_ = 0;
};

// Mean L1 over the batch of samples currently held by the model.
double dataset_loss(const Model<float>& model, const std::vector<Sample>& data);

// Trains in place. Writes loss_curve.csv (iteration,l1) and checkpoints into
// out_dir when given. Throws RuntimeFailure on a non-finite loss.
TrainResult train(Model<float>& model, const std::vector<Sample>& data, const TrainConfig& tc,
                  const std::optional<std::filesystem::path>& out_dir = std::nullopt);

void write_loss_curve(const std::filesystem::path& path, const std::vector<LossPoint>& curve);

// ---------------------------------------------------------------------------
// Evaluation and inference.
// ---------------------------------------------------------------------------

// Clamps to [0, 1] and rescales to [0, 255].
Tensor<float> to_eval_scale(const Tensor<float>& image);

MetricsReport evaluate(const Model<float>& model, const std::vector<Sample>& data,
                       const std::optional<std::filesystem::path>& out_dir = std::nullopt);

// Metrics of ready-made predictions against labels (both in [0, 1]).
MetricsReport evaluate_predictions(const std::vector<std::string>& ids,
                                   const std::vector<Tensor<float>>& preds,
                                   const std::vector<Tensor<float>>& labels,
                                   const std::optional<std::filesystem::path>& out_dir);

Tensor<float> infer(const Model<float>& model, const Tensor<float>& input);
void infer_file(const Model<float>& model, const std::filesystem::path& input,
                const std::filesystem::path& output);

// ---------------------------------------------------------------------------
// Scan benchmark: linear recurrence vs. quadratic attention.
// ---------------------------------------------------------------------------

struct BenchRow {
  std::string kernel;  // "scan" or "attention"
  int length;
  double mean_ns;
  double std_ns;
  double median_ns;
};

struct BenchOptions {
  int repeats = 5;
  int channels = 16;
  int state_size = 16;
  int head_dim = 16;
  std::uint64_t seed = 10;
  bool include_attention = true;
};

// Single-head softmax(Q K^T / sqrt(d)) V, computed row by row.
void quadratic_attention(std::span<const float> q, std::span<const float> k,
                         std::span<const float> v, int length, int dim, std::span<float> out);

std::vector<BenchRow> bench_scan(const std::vector<int>& lengths, const BenchOptions& opts = {});
// Columns: kernel,L,mean_ns,std_ns
void write_bench_csv(const std::filesystem::path& path, const std::vector<BenchRow>& rows);

// ---------------------------------------------------------------------------
// Ablation sweep.
// ---------------------------------------------------------------------------

struct AblationRun {
  std::string group;  // "modules", "depth", "patch_scan"
  std::string label;
  ModelConfig config;
};

// Module rows (six), depths 2-4, then patch grid and scan-direction rows.
std::vector<AblationRun> ablation_plan(const ModelConfig& base);

struct AblationResult {
  AblationRun run;
  double initial_loss = 0;
  double final_loss = 0;
  bool finite = true;
  ImageMetrics metrics;
};

// Smallest input edge that every configuration in the plan accepts.
int common_input_multiple(const std::vector<AblationRun>& plan);

std::vector<AblationResult> ablation_sweep(
    const std::vector<AblationRun>& plan, const std::vector<Sample>& data, const TrainConfig& tc,
    const std::function<void(const AblationResult&)>& on_result = {});

std::string ablation_markdown(const std::vector<AblationResult>& results);
void write_ablation_csv(const std::filesystem::path& path,
                        const std::vector<AblationResult>& results);

// Flat "key = value" file; '#' starts a comment line.
std::vector<std::pair<std::string, std::string>> read_key_values(const std::filesystem::path& path);

}  // namespace panrestore
