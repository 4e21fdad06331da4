#include <algorithm>

#include "panrestore/pipeline.hpp"

namespace panrestore {

Tensor<float> to_eval_scale(const Tensor<float>& image) {
  Tensor<float> out = image.clone();
  for (float& v : out.data()) v = std::clamp(v, 0.0f, 1.0f) * 255.0f;
  return out;
}

Tensor<float> infer(const Model<float>& model, const Tensor<float>& input) {
  NoGradGuard guard;
  return model.forward(input);
}

MetricsReport evaluate_predictions(const std::vector<std::string>& ids,
                                   const std::vector<Tensor<float>>& preds,
                                   const std::vector<Tensor<float>>& labels,
                                   const std::optional<std::filesystem::path>& out_dir) {
  if (ids.size() != preds.size() || preds.size() != labels.size()) {
    throw ConfigError("evaluate: ids, predictions and labels differ in count");
  }
  if (out_dir) std::filesystem::create_directories(*out_dir);
  MetricsReport report;
  for (std::size_t k = 0; k < preds.size(); ++k) {
    const Tensor<float> pred = to_eval_scale(preds[k]);
    const Tensor<float> label = to_eval_scale(labels[k]);
    report.images.push_back(compute_metrics(ids[k], pred, label));
    if (out_dir) write_rgb8(*out_dir / (ids[k] + "_err.png"), error_heatmap(pred, label));
  }
  if (out_dir) report.write_csv(*out_dir / "report.csv");
  return report;
}

MetricsReport evaluate(const Model<float>& model, const std::vector<Sample>& data,
                       const std::optional<std::filesystem::path>& out_dir) {
  std::vector<std::string> ids;
  std::vector<Tensor<float>> preds, labels;
  for (const auto& s : data) {
    const Tensor<float> pred = infer(model, s.input);
    if (pred.shape() != s.target.shape()) {
      throw ConfigError("evaluate: model output " + pred.shape().str() + " does not match label " +
                        s.target.shape().str() + " for '" + s.id + "'");
    }
    ids.push_back(s.id);
    preds.push_back(pred);
    labels.push_back(s.target);
  }
  return evaluate_predictions(ids, preds, labels, out_dir);
}

void infer_file(const Model<float>& model, const std::filesystem::path& input,
                const std::filesystem::path& output) {
  const TaskSpec spec = task_spec(model.config().task);
  const Tensor<float> image = read_image(input, spec.in_channels);
  Tensor<float> out = infer(model, image);
  for (float& v : out.data()) v = std::clamp(v, 0.0f, 1.0f);
  write_image(output, out);
}

}  // namespace panrestore
