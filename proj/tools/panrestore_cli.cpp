#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "panrestore/grad_check.hpp"
#include "panrestore/pipeline.hpp"

namespace fs = std::filesystem;
using namespace panrestore;

namespace {

// Flags shared by every model-building subcommand. Empty optionals leave the
// config file (or default) value in place.
struct ModelFlags {
  std::optional<std::string> task, dirs;
  std::optional<int> depth, growth, patches;
  std::optional<std::uint64_t> seed;

  void add(CLI::App* app) {
    app->add_option("--task", task, "sr_x2 | sr_x4 | colorize | joint_x2");
    app->add_option("--depth", depth, "UNet++ depth (2-4)");
    app->add_option("--growth", growth, "base channel width");
    app->add_option("--patches", patches, "MUB patch grid per side");
    app->add_option("--dirs", dirs, "scan directions: all or a comma list");
    app->add_option("--seed", seed, "random seed");
  }

  void apply(ModelConfig& cfg, TrainConfig* tc) const {
    if (task) cfg.set("task", *task);
    if (depth) cfg.set("depth", std::to_string(*depth));
    if (growth) cfg.set("growth", std::to_string(*growth));
    if (patches) cfg.set("patch_grid", std::to_string(*patches));
    if (dirs) cfg.set("scan_dirs", *dirs);
    if (seed) {
      cfg.set("seed", std::to_string(*seed));
      if (tc) tc->seed = *seed;
    }
  }
};

struct TrainFlags {
  std::optional<double> lr;
  std::optional<int> epochs, iterations, batch, checkpoint_every;

  void add(CLI::App* app) {
    app->add_option("--lr", lr, "learning rate");
    app->add_option("--epochs", epochs, "training epochs");
    app->add_option("--iterations", iterations, "stop after this many optimizer steps");
    app->add_option("--batch", batch, "batch size");
    app->add_option("--checkpoint-every", checkpoint_every, "checkpoint period in epochs");
  }

  void apply(TrainConfig& tc) const {
    if (lr) tc.lr = *lr;
    if (epochs) tc.epochs = *epochs;
    if (iterations) tc.max_iterations = *iterations;
    if (batch) tc.batch = *batch;
    if (checkpoint_every) tc.checkpoint_every = *checkpoint_every;
  }
};

void load_config_file(const std::string& path, ModelConfig& cfg, TrainConfig& tc) {
  if (path.empty()) return;
  for (const auto& [key, value] : read_key_values(path)) {
    // "seed" feeds both the model initialisation and the data order.
    const bool model_key = cfg.set(key, value);
    const bool train_key = tc.set(key, value);
    if (!model_key && !train_key) throw ConfigError(path + ": unknown key '" + key + "'");
  }
}

Split split_or_throw(const std::string& name) {
  const auto split = parse_split(name);
  if (!split) throw ConfigError("unknown split '" + name + "' (train, val, test, all)");
  return *split;
}

void print_metrics(const MetricsReport& report) {
  const ImageMetrics m = report.mean();
  std::cout << std::fixed << std::setprecision(4) << "images " << report.count() << "  psnr "
            << m.psnr << "  ssim " << m.ssim << "  mse " << m.mse << "  mae " << m.mae << "  sam "
            << m.sam << "\n";
}

std::vector<Sample> load_data(const std::string& data, int toy, int tile, Split split, Task task) {
  if (!data.empty()) return ingest({data, split, tile, task});
  if (toy <= 0) throw ConfigError("provide --data <dir> or --toy <count>");
  std::vector<Sample> out;
  const auto tiles = make_toy_tiles(toy, tile > 0 ? tile : 64, 10);
  for (std::size_t k = 0; k < tiles.size(); ++k) {
    out.push_back(make_sample("toy_" + std::to_string(k), tiles[k], task));
  }
  return out;
}

// Composite gradient checks on a tiny depth-2 model, in double precision.
int run_gradcheck(const ModelConfig& base, int instances, double tolerance) {
  ModelConfig cfg = base;
  cfg.task = Task::kSrX2;
  cfg.depth = 2;
  cfg.growth = 4;
  cfg.state_size = 4;
  cfg.mhcb_count = 1;
  Rng rng(cfg.seed);
  const int edge = cfg.input_multiple() * 2;
  double worst = 0;
  for (int k = 0; k < instances; ++k) {
    cfg.seed = base.seed + k;
    const Model<double> model = Model<double>::build(cfg);
    Tensor<double> x({1, 1, edge, edge});
    for (double& v : x.data()) v = rng.uniform(0.0, 1.0);
    std::vector<Tensor<double>> params;
    for (const auto& p : model.parameters()) params.push_back(p.tensor);
    const auto result = grad_check_params(
        [&] { return sum(model.forward(x)); }, params, 1e-2, 8);
    worst = std::max(worst, result.max_rel_error);
    std::cout << "instance " << k << "  max_rel_error " << std::scientific << result.max_rel_error
              << "  checked " << result.checked << "  kink-skipped " << result.skipped << "\n";
  }
  std::cout << "worst " << std::scientific << worst << (worst < tolerance ? "  PASS" : "  FAIL")
            << "\n";
  return worst < tolerance ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Panchromatic super-resolution and colorization with a selective-scan UNet++"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out";
  ModelFlags model_flags;
  TrainFlags train_flags;
  std::string data_dir, split_name = "train", checkpoint, input, output;
  int toy = 0, tile = 0;

  auto* train_cmd = app.add_subcommand("train", "train a model and write loss_curve.csv + model.pnrs");
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint; writes report.csv and heatmaps");
  auto* infer_cmd = app.add_subcommand("infer", "run a checkpoint on one PNG");
  auto* bench_cmd = app.add_subcommand("bench-scan", "time the scan against quadratic attention");
  auto* ablate_cmd = app.add_subcommand("ablate", "train every ablation configuration");
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of a small model");
  auto* toy_cmd = app.add_subcommand("make-toy", "write a synthetic rgb/ tile corpus");

  for (auto* cmd : {train_cmd, eval_cmd, infer_cmd, bench_cmd, ablate_cmd, grad_cmd, toy_cmd}) {
    cmd->add_option("--config", config_path, "flat key = value file")->check(CLI::ExistingFile);
    cmd->add_option("--out", out_dir, "output directory");
  }
  for (auto* cmd : {train_cmd, ablate_cmd, grad_cmd}) model_flags.add(cmd);
  for (auto* cmd : {train_cmd, ablate_cmd}) train_flags.add(cmd);
  for (auto* cmd : {train_cmd, eval_cmd, ablate_cmd}) {
    cmd->add_option("--data", data_dir, "dataset root holding rgb/ (and optionally pan/)");
    cmd->add_option("--toy", toy, "use this many synthetic tiles instead of --data");
    cmd->add_option("--tile", tile, "centre-crop tiles to this edge");
    cmd->add_option("--split", split_name, "train | val | test | all");
  }
  eval_cmd->add_option("--checkpoint", checkpoint, "model.pnrs")->required();
  infer_cmd->add_option("--checkpoint", checkpoint, "model.pnrs")->required();
  infer_cmd->add_option("--input", input, "input PNG")->required();
  infer_cmd->add_option("--output", output, "output PNG")->required();

  std::vector<int> lengths{1024, 2048, 4096, 8192};
  BenchOptions bench;
  bench_cmd->add_option("--lengths", lengths, "sequence lengths, ascending");
  bench_cmd->add_option("--repeats", bench.repeats, "timed runs per kernel and length");
  bench_cmd->add_option("--channels", bench.channels, "independent scan channels");
  bench_cmd->add_option("--state-size", bench.state_size, "state size M");

  int grad_instances = 3;
  double grad_tol = 1e-3;
  grad_cmd->add_option("--instances", grad_instances, "random models to check");
  grad_cmd->add_option("--tolerance", grad_tol, "maximum relative error");

  int toy_count = 4, toy_size = 64;
  toy_cmd->add_option("--count", toy_count, "number of tiles");
  toy_cmd->add_option("--size", toy_size, "tile edge");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    ModelConfig cfg;
    TrainConfig tc;
    load_config_file(config_path, cfg, tc);
    model_flags.apply(cfg, &tc);
    train_flags.apply(tc);
    cfg.validate();
    tc.validate();
    const fs::path out(out_dir);

    if (*train_cmd) {
      const auto data = load_data(data_dir, toy, tile, split_or_throw(split_name), cfg.task);
      Model<float> model = Model<float>::build(cfg);
      std::cout << "parameters " << model.parameter_count() << ", samples " << data.size() << "\n";
      const double before = dataset_loss(model, data);
      const TrainResult r = train(model, data, tc, out);
      std::cout << "iterations " << r.iterations << "  batch l1 " << r.initial_loss() << " -> "
                << r.final_loss() << "  dataset l1 " << before << " -> " << dataset_loss(model, data)
                << "\n";
      std::cout << "wrote " << (out / "model.pnrs").string() << "\n";
    } else if (*eval_cmd) {
      const Model<float> model = load_checkpoint(checkpoint);
      const auto data = load_data(data_dir, toy, tile, split_or_throw(split_name), model.config().task);
      print_metrics(evaluate(model, data, out));
      std::cout << "wrote " << (out / "report.csv").string() << "\n";
    } else if (*infer_cmd) {
      infer_file(load_checkpoint(checkpoint), input, output);
    } else if (*bench_cmd) {
      if (!std::is_sorted(lengths.begin(), lengths.end())) {
        throw ConfigError("bench-scan: lengths must be ascending");
      }
      const auto rows = bench_scan(lengths, bench);
      fs::create_directories(out);
      write_bench_csv(out / "bench_scan.csv", rows);
      for (const auto& r : rows) {
        std::cout << std::setw(10) << r.kernel << std::setw(8) << r.length << std::setw(16)
                  << std::fixed << std::setprecision(0) << r.median_ns << " ns\n";
      }
    } else if (*ablate_cmd) {
      const auto plan = ablation_plan(cfg);
      if (tile == 0 && data_dir.empty()) {
        tile = std::max(64, common_input_multiple(plan) * task_spec(cfg.task).sr_factor);
      }
      const auto data = load_data(data_dir, toy, tile, split_or_throw(split_name), cfg.task);
      const auto results = ablation_sweep(plan, data, tc, [](const AblationResult& r) {
        std::cout << r.run.group << "  " << r.run.label << "  l1 " << r.initial_loss << " -> "
                  << r.final_loss << "\n";
      });
      fs::create_directories(out);
      write_ablation_csv(out / "ablation.csv", results);
      std::ofstream(out / "ablation.md") << ablation_markdown(results);
      std::cout << ablation_markdown(results);
    } else if (*grad_cmd) {
      return run_gradcheck(cfg, grad_instances, grad_tol);
    } else if (*toy_cmd) {
      write_toy_corpus(out, toy_count, toy_size, tc.seed);
      std::cout << "wrote " << toy_count << " tiles under " << (out / "rgb").string() << "\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
