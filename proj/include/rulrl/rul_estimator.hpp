#ifndef RULRL_RUL_ESTIMATOR_HPP
#define RULRL_RUL_ESTIMATOR_HPP

#include <optional>
#include <string>
#include <vector>

#include "rulrl/neural.hpp"
#include "rulrl/trajdata.hpp"

namespace rulrl {

struct RulConfig {
  int window = 30;
  std::optional<double> cap;
  std::vector<int> hidden{100};
  /// Keep every n-th cycle as a training sample.
  int sample_stride = 1;
  nn::TrainConfig train;
};

/// Windowed feed-forward RUL regressor over normalized sensors.
struct RulModel {
  int window = 30;
  nn::MlpModel net;
  /// Labels are divided by this before training; predictions are scaled back.
  double target_scale = 1.0;
  std::optional<double> cap;
};

/// One row per cycle: the flattened window of sensors ending at that cycle,
/// oldest first, left-padded by repeating the first cycle.
Eigen::MatrixXd rul_features(const Trajectory& traj, int window);

RulModel train_rul(const std::vector<Trajectory>& train, const RulConfig& config);

/// Raw network outputs in cycles, before clamping.
std::vector<double> predict_rul_raw(const RulModel& model, const Trajectory& traj);

/// One non-negative estimate per cycle, using only data up to that cycle.
std::vector<double> predict_rul(const RulModel& model, const Trajectory& traj);

inline double clamp_rul(double raw) { return raw < 0.0 ? 0.0 : raw; }

void save_rul_model(const std::string& path, const RulModel& model);
RulModel load_rul_model(const std::string& path);

}  // namespace rulrl

#endif  // RULRL_RUL_ESTIMATOR_HPP
