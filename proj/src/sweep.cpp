#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "panrestore/pipeline.hpp"

namespace panrestore {

std::vector<AblationRun> ablation_plan(const ModelConfig& base) {
  std::vector<AblationRun> plan;
  auto add = [&](const char* group, std::string label, ModelConfig cfg) {
    plan.push_back({group, std::move(label), std::move(cfg)});
  };
  ModelConfig ours = base;
  ours.enable_dpa = ours.enable_mub = ours.enable_mhcb = true;

  add("modules", "w/o DPA", ablate(ours, "dpa"));
  add("modules", "w/o MUB", ablate(ours, "mub"));
  add("modules", "w/o MHCB", ablate(ours, "mhcb"));
  for (int count = 1; count <= 3; ++count) {
    ModelConfig cfg = ours;
    cfg.mhcb_count = count;
    add("modules", "w/ MHCB-" + std::to_string(count), cfg);
  }

  for (int depth = 2; depth <= 4; ++depth) {
    ModelConfig cfg = ours;
    cfg.depth = depth;
    add("depth", "depth " + std::to_string(depth), cfg);
  }

  ModelConfig patch3 = ours;
  patch3.patch_grid = 3;
  add("patch_scan", "3x3 patch MUB", patch3);
  add("patch_scan", "w/o MUB", ablate(ours, "mub"));
  ModelConfig five = ours;
  five.scan_dirs = parse_direction_set("row_fwd,row_bwd,col_fwd,col_bwd,diag_fwd");
  add("patch_scan", "2x2 MUB, 5 scans", five);
  ModelConfig five_rev = ours;
  five_rev.scan_dirs = parse_direction_set("row_fwd,row_bwd,col_fwd,col_bwd,diag_bwd");
  add("patch_scan", "2x2 MUB, 5 scans (reverse diagonal)", five_rev);
  add("patch_scan", "2x2 MUB, 6 scans", ours);

  for (const auto& run : plan) run.config.validate();
  return plan;
}

int common_input_multiple(const std::vector<AblationRun>& plan) {
  int m = 1;
  for (const auto& run : plan) {
    m = std::lcm(m, run.config.input_multiple());
  }
  return m;
}

std::vector<AblationResult> ablation_sweep(
    const std::vector<AblationRun>& plan, const std::vector<Sample>& data, const TrainConfig& tc,
    const std::function<void(const AblationResult&)>& on_result) {
  std::vector<AblationResult> results;
  for (const auto& run : plan) {
    AblationResult r;
    r.run = run;
    Model<float> model = Model<float>::build(run.config);
    r.initial_loss = dataset_loss(model, data);
    try {
      train(model, data, tc);
      r.final_loss = dataset_loss(model, data);
      r.finite = std::isfinite(r.final_loss);
      if (r.finite) r.metrics = evaluate(model, data).mean();
    } catch (const RuntimeFailure&) {
      r.finite = false;
      r.final_loss = NAN;
    }
    if (on_result) on_result(r);
    results.push_back(std::move(r));
  }
  return results;
}

std::string ablation_markdown(const std::vector<AblationResult>& results) {
  std::ostringstream os;
  os << std::fixed;
  const std::pair<const char*, const char*> tables[] = {
      {"modules", "Module ablation"},
      {"depth", "UNet++ depth"},
      {"patch_scan", "Patch grid and scan directions"},
  };
  for (const auto& [key, title] : tables) {
    bool any = false;
    for (const auto& r : results) any = any || r.run.group == key;
    if (!any) continue;
    os << "### " << title << "\n\n";
    os << "| Configuration | MHCB | DPA | MUB | PSNR | SSIM | MSE | MAE | SAM | L1 start | L1 end |\n";
    os << "|---|---|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& r : results) {
      if (r.run.group != key) continue;
      const ModelConfig& c = r.run.config;
      os << "| " << r.run.label << " | "
         << (c.enable_mhcb ? std::to_string(c.mhcb_count) : std::string("-")) << " | "
         << (c.enable_dpa ? "yes" : "no") << " | " << (c.enable_mub ? "yes" : "no") << " | ";
      if (r.finite) {
        os << std::setprecision(2) << r.metrics.psnr << " | " << std::setprecision(4)
           << r.metrics.ssim << " | " << std::setprecision(2) << r.metrics.mse << " | "
           << r.metrics.mae << " | " << std::setprecision(4) << r.metrics.sam << " | ";
      } else {
        os << "nan | nan | nan | nan | nan | ";
      }
      os << std::setprecision(5) << r.initial_loss << " | " << r.final_loss << " |\n";
    }
    os << "\n";
  }
  return os.str();
}

void write_ablation_csv(const std::filesystem::path& path,
                        const std::vector<AblationResult>& results) {
  std::ofstream os(path);
  if (!os) throw RuntimeFailure("cannot write ablation csv: " + path.string());
  os << "group,label,depth,growth,mhcb,dpa,mub,patch_grid,scan_dirs,initial_l1,final_l1,finite,"
        "psnr,ssim,mse,mae,sam\n"
     << std::setprecision(8);
  for (const auto& r : results) {
    const ModelConfig& c = r.run.config;
    os << r.run.group << ",\"" << r.run.label << "\"," << c.depth << ',' << c.growth << ','
       << (c.enable_mhcb ? c.mhcb_count : 0) << ',' << c.enable_dpa << ',' << c.enable_mub << ','
       << c.patch_grid << ",\"" << format_direction_set(c.scan_dirs) << "\"," << r.initial_loss
       << ',' << r.final_loss << ',' << r.finite << ',' << r.metrics.psnr << ',' << r.metrics.ssim
       << ',' << r.metrics.mse << ',' << r.metrics.mae << ',' << r.metrics.sam << '\n';
  }
}

}  // namespace panrestore
