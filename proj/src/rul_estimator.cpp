#include "rulrl/rul_estimator.hpp"

#include <cmath>

#include "rulrl/labeling.hpp"

namespace rulrl {

Eigen::MatrixXd rul_features(const Trajectory& traj, int window) {
  if (window < 1) throw ValidationError("rul_features: window must be >= 1");
  if (traj.cycles.empty()) throw ValidationError("rul_features: empty trajectory");
  const auto n = static_cast<Eigen::Index>(traj.size());
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(window) * kNumSensors);
  for (Eigen::Index k = 0; k < n; ++k) {
    for (int t = 0; t < window; ++t) {
      const Eigen::Index src = std::max<Eigen::Index>(0, k - (window - 1) + t);
      x.block(k, t * kNumSensors, 1, kNumSensors) = traj.cycles[static_cast<std::size_t>(src)].sensors.transpose();
    }
  }
  return x;
}

RulModel train_rul(const std::vector<Trajectory>& train, const RulConfig& config) {
  if (train.empty()) throw ValidationError("train_rul: no trajectories");
  if (config.sample_stride < 1) throw ValidationError("train_rul: sample_stride must be >= 1");
  std::vector<Eigen::MatrixXd> blocks;
  std::vector<double> labels;
  Eigen::Index rows = 0;
  for (const Trajectory& t : train) {
    if (!t.ends_in_failure) throw ValidationError("train_rul: unit " + std::to_string(t.unit_id) + " did not fail");
    const Eigen::MatrixXd x = rul_features(t, config.window);
    const std::vector<double> y = label_rul(t, config.cap);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index k = 0; k < x.rows(); k += config.sample_stride) keep.push_back(k);
    Eigen::MatrixXd sel(static_cast<Eigen::Index>(keep.size()), x.cols());
    for (std::size_t i = 0; i < keep.size(); ++i) {
      sel.row(static_cast<Eigen::Index>(i)) = x.row(keep[i]);
      labels.push_back(y[static_cast<std::size_t>(keep[i])]);
    }
    rows += sel.rows();
    blocks.push_back(std::move(sel));
  }

  RulModel model;
  model.window = config.window;
  model.cap = config.cap;
  double max_label = 0.0;
  for (double v : labels) max_label = std::max(max_label, std::abs(v));
  model.target_scale = max_label > 0.0 ? max_label : 1.0;

  nn::TrainingSet<double> data;
  data.inputs.resize(rows, static_cast<Eigen::Index>(config.window) * kNumSensors);
  data.targets.resize(rows, 1);
  Eigen::Index r = 0;
  for (const Eigen::MatrixXd& b : blocks) {
    data.inputs.middleRows(r, b.rows()) = b;
    r += b.rows();
  }
  for (Eigen::Index i = 0; i < rows; ++i) data.targets(i, 0) = labels[static_cast<std::size_t>(i)] / model.target_scale;

  std::vector<int> sizes{static_cast<int>(data.inputs.cols())};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(1);
  nn::MlpModel net = nn::mlp_init(sizes, nn::OutputHead::Linear, derive_seed(config.train.seed, "rul-init"));
  model.net = nn::train(std::move(net), data, config.train, nn::Loss::SquaredError).model;
  return model;
}

std::vector<double> predict_rul_raw(const RulModel& model, const Trajectory& traj) {
  const Eigen::MatrixXd x = rul_features(traj, model.window);
  if (x.cols() != model.net.input_size()) throw ValidationError("predict_rul: feature width does not match model");
  const Eigen::MatrixXd out = nn::forward_batch(model.net, x);
  std::vector<double> raw(static_cast<std::size_t>(out.rows()));
  for (Eigen::Index i = 0; i < out.rows(); ++i) raw[static_cast<std::size_t>(i)] = out(i, 0) * model.target_scale;
  return raw;
}

std::vector<double> predict_rul(const RulModel& model, const Trajectory& traj) {
  std::vector<double> v = predict_rul_raw(model, traj);
  for (double& x : v) x = clamp_rul(x);
  return v;
}

void save_rul_model(const std::string& path, const RulModel& model) {
  nn::ModelFile file{model.net, "rul", {}};
  file.meta["window_length"] = std::to_string(model.window);
  file.meta["target_scale"] = format_exact(model.target_scale);
  file.meta["cap"] = model.cap ? format_exact(*model.cap) : "none";
  nn::save_model(path, file);
}

RulModel load_rul_model(const std::string& path) {
  nn::ModelFile file = nn::load_model(path);
  if (file.role != "rul") throw ValidationError(path + ": not an RUL model (role " + file.role + ")");
  RulModel model;
  model.net = std::move(file.model);
  model.window = std::stoi(file.meta.at("window_length"));
  model.target_scale = parse_double(file.meta.at("target_scale"), 0);
  if (const auto it = file.meta.find("cap"); it != file.meta.end() && it->second != "none") {
    model.cap = parse_double(it->second, 0);
  }
  if (model.net.input_size() != model.window * kNumSensors) {
    throw ValidationError(path + ": window_length does not match network input");
  }
  return model;
}

}  // namespace rulrl
