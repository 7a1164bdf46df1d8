#ifndef RULRL_LABELING_HPP
#define RULRL_LABELING_HPP

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "rulrl/trajdata.hpp"

namespace rulrl {

enum class Action : int { Continue = 0, Repair = 1 };

enum class Terminal { Failure, Repaired, TruncatedEnd, LateRepairFailure };

std::string_view to_string(Terminal t);

/// Failure, repair and per-cycle profit distributions (base +- uniform jitter),
/// and the minimum lead time a repair needs before failure to succeed.
struct CostModel {
  double failure_base = 250.0;
  double failure_jitter = 50.0;
  double repair_base = 25.0;
  double repair_jitter = 5.0;
  double profit_base = 1.0;
  double profit_jitter = 0.2;
  int lead_time = 10;
  std::uint64_t seed = 0;

  void validate() const;
  CostModel without_jitter() const;
};

/// One realization of the cost model for a (unit, draw) pair. Profits,
/// repair cost and failure cost come from separate sub-streams so that
/// rules which stop at different cycles still see the same draws.
class CostStream {
 public:
  CostStream(const CostModel& cost, std::uint64_t key);
  double profit(std::size_t step);
  double repair_cost() const { return repair_cost_; }
  double failure_cost() const { return failure_cost_; }

 private:
  CostModel cost_;
  Rng profit_rng_;
  std::vector<double> profits_;
  double repair_cost_;
  double failure_cost_;
};

/// Stream key shared by labeling (draw 0) and rollouts.
std::uint64_t cost_stream_key(const CostModel& cost, int unit_id, std::uint64_t draw);

struct Step {
  SensorVector observation = SensorVector::Zero();
  Action action = Action::Continue;
  double reward = 0.0;
};

/// A decision sequence starting at the unit's first cycle. Only the final
/// step may be a Repair.
struct Episode {
  int unit_id = 0;
  std::vector<Step> steps;
  Terminal terminal = Terminal::TruncatedEnd;
  /// True cycles left after the final step, when the source unit failed.
  std::optional<int> final_rul;

  double total_return() const;
};

/// Walks the trajectory and issues Repair with probability `repair_prob`
/// on every cycle but the last. A repair ends the episode and the rest of
/// the trajectory is dropped. A repair issued with fewer than `lead_time`
/// true cycles left is a LateRepairFailure.
std::vector<Episode> inject_repairs(const Trajectory& traj, double repair_prob, std::uint64_t rng_seed,
                                   int lead_time = 0);

/// Profit on every step; the final step also pays the terminal cost.
Episode assign_rewards(Episode episode, const CostModel& cost);

/// out[k] = rewards[k] + ... + rewards[min(k + horizon, n - 1)].
std::vector<double> compute_rtg(std::span<const double> rewards, int horizon);

std::vector<double> label_rul(const Trajectory& traj, std::optional<double> cap = std::nullopt);

struct TransitionSample {
  Eigen::MatrixXd obs_window;     // T x d, last row is the current step
  Eigen::MatrixXd action_window;  // T x 2 one-hot, last row is the previous action
  Eigen::VectorXd rtg_window;     // T, last entry is the current step
  std::optional<double> rul;
  Action label = Action::Continue;

  int window() const { return static_cast<int>(obs_window.rows()); }
};

/// One sample per step. Windows are left-padded by repeating the first
/// observation and return-to-go, and with Continue for actions.
std::vector<TransitionSample> build_windows(const Episode& episode, std::span<const double> rtg,
                                            std::optional<std::span<const double>> rul, int window);

struct DatasetConfig {
  int window = 30;
  int horizon = 100;
  double repair_prob = 0.02;
  /// Independent injection passes over each trajectory.
  int passes = 1;
  std::optional<double> rul_cap;
  bool include_rul = true;
  std::uint64_t seed = 0;
};

struct Dataset {
  DatasetConfig config;
  CostModel cost;
  std::vector<TransitionSample> samples;
  std::vector<double> episode_returns;
  double min_rtg = 0.0;
  double max_rtg = 0.0;

  std::size_t repair_count() const;
};

/// Inject, reward, and window every trajectory. Per-trajectory streams are
/// keyed by (seed, pass, unit_id), so the result does not depend on threading.
Dataset build_dataset(const std::vector<Trajectory>& trajs, const DatasetConfig& config, const CostModel& cost);

/// Text table (one sample per line: obs, actions, rtg, [rul], label) plus a
/// JSON sidecar at `path + ".json"`.
void save_dataset(const std::string& path, const Dataset& dataset);
Dataset load_dataset(const std::string& path);

}  // namespace rulrl

#endif  // RULRL_LABELING_HPP
