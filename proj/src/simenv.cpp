#include "rulrl/simenv.hpp"

#include <cmath>
#include <ostream>

namespace rulrl {

std::string_view to_string(TargetMode mode) { return mode == TargetMode::Constant ? "constant" : "decrement"; }

TargetMode parse_target_mode(std::string_view text) {
  if (text == "constant") return TargetMode::Constant;
  if (text == "decrement") return TargetMode::Decrement;
  throw ValidationError("unknown target mode '" + std::string(text) + "'");
}

std::string describe(const DecisionRule& rule) {
  struct Visitor {
    std::string operator()(const NoAction&) const { return "no_action"; }
    std::string operator()(const OracleRul& r) const { return "oracle_rul_" + std::to_string(r.threshold); }
    std::string operator()(const EstimatedRul& r) const { return "estimated_rul_" + std::to_string(r.threshold); }
    std::string operator()(const PolicyRule& r) const {
      std::string name = r.policy && r.policy->uses_rul() ? "policy_rul" : "policy";
      if (r.mode == TargetMode::Decrement) name += "_decrement";
      return name;
    }
  };
  return std::visit(Visitor{}, rule);
}

std::optional<double> target_of(const DecisionRule& rule) {
  if (const auto* p = std::get_if<PolicyRule>(&rule)) return p->target_return;
  return std::nullopt;
}

std::vector<Action> policy_decisions(const Trajectory& traj, const PolicyRule& rule, std::span<const double> profits) {
  if (!rule.policy) throw ValidationError("policy rule without a policy");
  const PolicyModel& policy = *rule.policy;
  const FeatureLayout& layout = policy.layout;
  const int T = layout.window;
  const auto n = static_cast<Eigen::Index>(traj.size());
  const Eigen::Index decisions = n - 1;
  if (decisions <= 0) return {};

  std::vector<double> rul_estimate;
  if (policy.uses_rul()) {
    if (!rule.rul_model) throw ValidationError("policy uses RUL but the rule has no RUL estimator");
    rul_estimate = predict_rul(*rule.rul_model, traj);
  }
  // Return-to-go fed at each time index.
  std::vector<double> target(static_cast<std::size_t>(n), rule.target_return);
  if (rule.mode == TargetMode::Decrement) {
    double realized = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      target[static_cast<std::size_t>(k)] = std::max(rule.target_return - realized, policy.min_train_rtg);
      realized += profits[static_cast<std::size_t>(k)];
    }
  }

  Eigen::MatrixXd x(decisions, layout.dim());
  Eigen::MatrixXd obs(T, kNumSensors);
  Eigen::MatrixXd actions = Eigen::MatrixXd::Zero(T, 2);
  actions.col(static_cast<int>(Action::Continue)).setOnes();
  Eigen::VectorXd rtg(T);
  for (Eigen::Index k = 0; k < decisions; ++k) {
    for (int t = 0; t < T; ++t) {
      const Eigen::Index src = std::max<Eigen::Index>(0, k - (T - 1) + t);
      obs.row(t) = traj.cycles[static_cast<std::size_t>(src)].sensors.transpose();
      rtg(t) = target[static_cast<std::size_t>(src)];
    }
    std::optional<double> rul;
    if (policy.uses_rul()) rul = rul_estimate[static_cast<std::size_t>(k)];
    encode_features(layout, obs, actions, rtg, rul, x.row(k));
  }
  const Eigen::MatrixXd logits = nn::forward_batch(policy.net, x);
  std::vector<Action> out(static_cast<std::size_t>(decisions));
  for (Eigen::Index k = 0; k < decisions; ++k) out[static_cast<std::size_t>(k)] = decide(logits.row(k)).action;
  return out;
}

RolloutOutcome rollout(const Trajectory& traj, const DecisionRule& rule, const CostModel& cost, std::uint64_t draw) {
  validate(traj);
  CostStream stream(cost, cost_stream_key(cost, traj.unit_id, draw));
  const std::size_t n = traj.size();
  std::vector<double> profits(n);
  for (std::size_t k = 0; k < n; ++k) profits[k] = stream.profit(k);

  // Decision for cycle k (k < n - 1), given the episode is still running.
  std::vector<Action> planned;
  if (const auto* p = std::get_if<PolicyRule>(&rule)) {
    planned = policy_decisions(traj, *p, profits);
  } else if (const auto* o = std::get_if<OracleRul>(&rule)) {
    if (o->threshold < 0) throw ValidationError("oracle threshold must be >= 0");
    if (!traj.ends_in_failure) throw ValidationError("oracle RUL rule needs a failing trajectory");
    for (std::size_t k = 0; k + 1 < n; ++k) {
      planned.push_back(static_cast<int>(n - 1 - k) <= o->threshold ? Action::Repair : Action::Continue);
    }
  } else if (const auto* e = std::get_if<EstimatedRul>(&rule)) {
    if (!e->model) throw ValidationError("estimated RUL rule without a model");
    if (e->threshold < 0) throw ValidationError("estimated RUL threshold must be >= 0");
    const std::vector<double> est = predict_rul(*e->model, traj);
    for (std::size_t k = 0; k + 1 < n; ++k) {
      planned.push_back(est[k] <= e->threshold ? Action::Repair : Action::Continue);
    }
  } else {
    planned.assign(n > 0 ? n - 1 : 0, Action::Continue);
  }

  RolloutOutcome out;
  out.unit_id = traj.unit_id;
  for (std::size_t k = 0; k < n; ++k) {
    out.rewards.push_back(profits[k]);
    ++out.steps_operated;
    if (k + 1 == n) {
      out.action_trace.push_back(Action::Continue);
      if (traj.ends_in_failure) {
        out.terminal = Terminal::Failure;
        out.rewards.back() -= stream.failure_cost();
      } else {
        out.terminal = Terminal::TruncatedEnd;
      }
      break;
    }
    out.action_trace.push_back(planned[k]);
    if (planned[k] == Action::Repair) {
      const int remaining = static_cast<int>(n - 1 - k);
      if (traj.ends_in_failure && remaining < cost.lead_time) {
        out.terminal = Terminal::LateRepairFailure;
        out.rewards.back() -= stream.failure_cost();
      } else {
        out.terminal = Terminal::Repaired;
        out.rewards.back() -= stream.repair_cost();
      }
      break;
    }
  }
  for (double r : out.rewards) out.total_return += r;
  return out;
}

std::pair<double, double> mean_std(std::span<const double> values) {
  if (values.empty()) return {0.0, 0.0};
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

EvalRecord evaluate(const std::vector<Trajectory>& trajs, const DecisionRule& rule, const CostModel& cost,
                    int n_draws) {
  if (trajs.empty()) throw ValidationError("evaluate: no trajectories");
  if (n_draws < 1) throw ValidationError("evaluate: n_draws must be >= 1");
  cost.validate();
  EvalRecord rec;
  rec.rule = describe(rule);
  rec.target_return = target_of(rule);
  rec.n_units = static_cast<int>(trajs.size());
  rec.n_draws = n_draws;
  const std::size_t draws = static_cast<std::size_t>(n_draws);
  rec.outcomes.resize(trajs.size() * draws);
  parallel_for(rec.outcomes.size(), [&](std::size_t i) {
    rec.outcomes[i] = rollout(trajs[i / draws], rule, cost, i % draws);
  });
  for (const RolloutOutcome& o : rec.outcomes) rec.returns.push_back(o.total_return);
  std::tie(rec.mean, rec.std) = mean_std(rec.returns);
  return rec;
}

void write_outcomes_csv(std::ostream& out, const std::vector<EvalRecord>& records) {
  out << "unit_id,rule,target_return,terminal,steps_operated,total_return\n";
  for (const EvalRecord& r : records) {
    for (const RolloutOutcome& o : r.outcomes) {
      out << o.unit_id << ',' << r.rule << ',' << (r.target_return ? format_exact(*r.target_return) : "") << ','
          << to_string(o.terminal) << ',' << o.steps_operated << ',' << format_exact(o.total_return) << '\n';
    }
  }
}

}  // namespace rulrl
