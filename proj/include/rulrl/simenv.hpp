#ifndef RULRL_SIMENV_HPP
#define RULRL_SIMENV_HPP

#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "rulrl/labeling.hpp"
#include "rulrl/policy.hpp"
#include "rulrl/rul_estimator.hpp"

namespace rulrl {

enum class TargetMode { Constant, Decrement };

std::string_view to_string(TargetMode mode);
TargetMode parse_target_mode(std::string_view text);

struct NoAction {};

/// Repair once the true RUL is at or below the threshold.
struct OracleRul {
  int threshold = 10;
};

/// Repair once the estimated RUL is at or below the threshold.
struct EstimatedRul {
  const RulModel* model = nullptr;
  int threshold = 10;
};

/// Return-conditioned policy queried with a target return. In Decrement mode
/// the target shrinks by the realized rewards, floored at the policy's
/// minimum training return-to-go. `rul_model` feeds policies that use RUL.
struct PolicyRule {
  const PolicyModel* policy = nullptr;
  double target_return = 0.0;
  TargetMode mode = TargetMode::Constant;
  const RulModel* rul_model = nullptr;
};

/// Rules hold non-owning pointers; the models must outlive any rollout.
using DecisionRule = std::variant<NoAction, OracleRul, EstimatedRul, PolicyRule>;

std::string describe(const DecisionRule& rule);
std::optional<double> target_of(const DecisionRule& rule);

struct RolloutOutcome {
  int unit_id = 0;
  int steps_operated = 0;
  Terminal terminal = Terminal::TruncatedEnd;
  double total_return = 0.0;
  std::vector<Action> action_trace;
  std::vector<double> rewards;
};

/// Replays one trajectory under a rule. Every operated cycle earns a profit
/// draw; no decision is taken on the final cycle. A repair with fewer than
/// `cost.lead_time` true cycles left on a failing unit counts as a failure.
RolloutOutcome rollout(const Trajectory& traj, const DecisionRule& rule, const CostModel& cost,
                       std::uint64_t draw = 0);

/// Per-cycle policy decisions for the cycles before the last, assuming the
/// episode is still running (all earlier actions Continue).
std::vector<Action> policy_decisions(const Trajectory& traj, const PolicyRule& rule, std::span<const double> profits);

struct EvalRecord {
  std::string rule;
  std::optional<double> target_return;
  std::vector<double> returns;  // trajectory-major, then draw
  double mean = 0.0;
  double std = 0.0;
  int n_units = 0;
  int n_draws = 0;
  std::vector<RolloutOutcome> outcomes;
};

/// Population mean and standard deviation, summed in index order.
std::pair<double, double> mean_std(std::span<const double> values);

EvalRecord evaluate(const std::vector<Trajectory>& trajs, const DecisionRule& rule, const CostModel& cost,
                    int n_draws = 1);

/// unit_id,rule,target_return,terminal,steps_operated,total_return
void write_outcomes_csv(std::ostream& out, const std::vector<EvalRecord>& records);

}  // namespace rulrl

#endif  // RULRL_SIMENV_HPP
