#ifndef RULRL_POLICY_HPP
#define RULRL_POLICY_HPP

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rulrl/labeling.hpp"
#include "rulrl/neural.hpp"

namespace rulrl {

/// Position of each input block in the flattened feature vector:
/// observations (T x 21, time-major), previous actions (T x 2), return-to-go (T), [rul].
struct FeatureLayout {
  int window = 30;
  int obs_dim = kNumSensors;
  bool uses_rul = false;

  int obs_offset() const { return 0; }
  int action_offset() const { return window * obs_dim; }
  int rtg_offset() const { return action_offset() + 2 * window; }
  int rul_offset() const { return rtg_offset() + window; }
  int dim() const { return rul_offset() + (uses_rul ? 1 : 0); }

  std::string describe() const;
  static FeatureLayout parse(const std::string& text);
  bool operator==(const FeatureLayout&) const = default;
};

struct PolicyConfig {
  std::vector<int> hidden{100};
  bool uses_rul = false;
  nn::TrainConfig train;
};

struct PolicyModel {
  nn::MlpModel net;
  FeatureLayout layout;
  int horizon = 0;
  /// Training-data support of the return-to-go channel and of episode returns.
  double min_train_rtg = 0.0;
  double max_train_rtg = 0.0;
  double min_train_return = 0.0;
  double max_train_return = 0.0;
  std::string fingerprint;

  int window() const { return layout.window; }
  bool uses_rul() const { return layout.uses_rul; }
};

/// Flatten one sample. The rul field is read only when the layout uses it.
void encode_features(const FeatureLayout& layout, const Eigen::MatrixXd& obs_window,
                     const Eigen::MatrixXd& action_window, const Eigen::VectorXd& rtg_window,
                     std::optional<double> rul, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> out);

/// Cross-entropy training of an [input, hidden..., 2] network. Exact
/// duplicate samples are merged into a multiplicity weight and classes are
/// weighted by inverse frequency.
PolicyModel train_policy(std::span<const TransitionSample> samples, const PolicyConfig& config);

/// As above, also recording the dataset's horizon and return support.
PolicyModel train_policy(const Dataset& dataset, const PolicyConfig& config);

struct Decision {
  Action action = Action::Continue;
  std::array<double, 2> probabilities{0.5, 0.5};
};

/// Repair only when its probability strictly exceeds Continue's.
Decision decide(const Eigen::RowVectorXd& logits);

Decision select_action(const PolicyModel& policy, const Eigen::MatrixXd& obs_window,
                       const Eigen::MatrixXd& action_window, const Eigen::VectorXd& rtg_window,
                       std::optional<double> rul = std::nullopt);

/// The target return is replicated across every return-to-go position.
Decision select_action(const PolicyModel& policy, const Eigen::MatrixXd& obs_window,
                       const Eigen::MatrixXd& action_window, double target_return,
                       std::optional<double> rul = std::nullopt);

/// Network file plus JSON sidecar at `path + ".json"`.
void save_policy(const std::string& path, const PolicyModel& policy);
PolicyModel load_policy(const std::string& path);

}  // namespace rulrl

#endif  // RULRL_POLICY_HPP
