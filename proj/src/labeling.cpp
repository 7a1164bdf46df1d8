#include "rulrl/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "rulrl/json_io.hpp"

namespace rulrl {

std::string_view to_string(Terminal t) {
  switch (t) {
    case Terminal::Failure:
      return "failure";
    case Terminal::Repaired:
      return "repaired";
    case Terminal::TruncatedEnd:
      return "truncated_end";
    case Terminal::LateRepairFailure:
      return "late_repair_failure";
  }
  return "unknown";
}

void CostModel::validate() const {
  auto check = [](double base, double jitter, const char* name) {
    if (!(base > 0.0)) throw ValidationError(std::string("cost model: ") + name + " base must be positive");
    if (jitter < 0.0 || !(jitter < base)) {
      throw ValidationError(std::string("cost model: ") + name + " jitter must be in [0, base)");
    }
  };
  check(failure_base, failure_jitter, "failure");
  check(repair_base, repair_jitter, "repair");
  check(profit_base, profit_jitter, "profit");
  if (lead_time < 0) throw ValidationError("cost model: lead_time must be >= 0");
}

CostModel CostModel::without_jitter() const {
  CostModel c = *this;
  c.failure_jitter = c.repair_jitter = c.profit_jitter = 0.0;
  return c;
}

std::uint64_t cost_stream_key(const CostModel& cost, int unit_id, std::uint64_t draw) {
  return derive_seed(cost.seed, static_cast<std::uint64_t>(unit_id), draw);
}

CostStream::CostStream(const CostModel& cost, std::uint64_t key)
    : cost_(cost), profit_rng_(derive_seed(key, "profit")) {
  Rng repair_rng(derive_seed(key, "repair"));
  Rng failure_rng(derive_seed(key, "failure"));
  repair_cost_ = uniform(repair_rng, cost.repair_base - cost.repair_jitter, cost.repair_base + cost.repair_jitter);
  failure_cost_ =
      uniform(failure_rng, cost.failure_base - cost.failure_jitter, cost.failure_base + cost.failure_jitter);
}

double CostStream::profit(std::size_t step) {
  while (profits_.size() <= step) {
    profits_.push_back(
        uniform(profit_rng_, cost_.profit_base - cost_.profit_jitter, cost_.profit_base + cost_.profit_jitter));
  }
  return profits_[step];
}

double Episode::total_return() const {
  double total = 0.0;
  for (const Step& s : steps) total += s.reward;
  return total;
}

std::vector<Episode> inject_repairs(const Trajectory& traj, double repair_prob, std::uint64_t rng_seed,
                                   int lead_time) {
  // 1.0 is accepted as the limiting case: repair on the first decision cycle.
  if (!(repair_prob >= 0.0 && repair_prob <= 1.0)) {
    throw ValidationError("inject_repairs: repair_prob must be in [0, 1]");
  }
  validate(traj);
  Rng rng(derive_seed(rng_seed, static_cast<std::uint64_t>(traj.unit_id)));
  const std::size_t n = traj.size();
  Episode ep;
  ep.unit_id = traj.unit_id;
  for (std::size_t k = 0; k < n; ++k) {
    Step step;
    step.observation = traj.cycles[k].sensors;
    const bool decision_cycle = k + 1 < n;
    if (decision_cycle && uniform(rng, 0.0, 1.0) < repair_prob) {
      step.action = Action::Repair;
      ep.steps.push_back(step);
      const int remaining = static_cast<int>(n - 1 - k);
      if (traj.ends_in_failure) ep.final_rul = remaining;
      ep.terminal = traj.ends_in_failure && remaining < lead_time ? Terminal::LateRepairFailure
                                                                   : Terminal::Repaired;
      return {ep};
    }
    ep.steps.push_back(step);
  }
  ep.terminal = traj.ends_in_failure ? Terminal::Failure : Terminal::TruncatedEnd;
  if (traj.ends_in_failure) ep.final_rul = 0;
  return {ep};
}

Episode assign_rewards(Episode episode, const CostModel& cost) {
  CostStream stream(cost, cost_stream_key(cost, episode.unit_id, 0));
  for (std::size_t k = 0; k < episode.steps.size(); ++k) episode.steps[k].reward = stream.profit(k);
  if (episode.steps.empty()) return episode;
  Step& last = episode.steps.back();
  switch (episode.terminal) {
    case Terminal::Repaired:
      last.reward -= stream.repair_cost();
      break;
    case Terminal::Failure:
    case Terminal::LateRepairFailure:
      last.reward -= stream.failure_cost();
      break;
    case Terminal::TruncatedEnd:
      break;
  }
  return episode;
}

std::vector<double> compute_rtg(std::span<const double> rewards, int horizon) {
  if (horizon < 0) throw ValidationError("compute_rtg: horizon must be >= 0");
  const std::size_t n = rewards.size();
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t end = std::min(n, k + static_cast<std::size_t>(horizon) + 1);
    out[k] = std::accumulate(rewards.begin() + static_cast<std::ptrdiff_t>(k),
                             rewards.begin() + static_cast<std::ptrdiff_t>(end), 0.0);
  }
  return out;
}

std::vector<double> label_rul(const Trajectory& traj, std::optional<double> cap) {
  if (!traj.ends_in_failure) {
    throw ValidationError("label_rul: unit " + std::to_string(traj.unit_id) + " has no recorded failure");
  }
  validate(traj);
  const int last = traj.cycles.back().cycle_index;
  std::vector<double> rul(traj.size());
  for (std::size_t k = 0; k < traj.size(); ++k) {
    double v = last - traj.cycles[k].cycle_index;
    if (cap) v = std::min(v, *cap);
    rul[k] = v;
  }
  return rul;
}

std::vector<TransitionSample> build_windows(const Episode& episode, std::span<const double> rtg,
                                            std::optional<std::span<const double>> rul, int window) {
  if (window < 1) throw ValidationError("build_windows: window must be >= 1");
  const std::size_t n = episode.steps.size();
  if (rtg.size() != n) throw ValidationError("build_windows: rtg length does not match episode");
  if (rul && rul->size() != n) throw ValidationError("build_windows: rul length does not match episode");
  std::vector<TransitionSample> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    TransitionSample s;
    s.obs_window.resize(window, kNumSensors);
    s.action_window = Eigen::MatrixXd::Zero(window, 2);
    s.rtg_window.resize(window);
    for (int t = 0; t < window; ++t) {
      const long pos = static_cast<long>(k) - (window - 1) + t;  // time index for obs and rtg
      const std::size_t src = pos < 0 ? 0 : static_cast<std::size_t>(pos);
      s.obs_window.row(t) = episode.steps[src].observation.transpose();
      s.rtg_window(t) = rtg[src];
      const long prev = pos - 1;  // actions lag by one step
      const Action a = prev < 0 ? Action::Continue : episode.steps[static_cast<std::size_t>(prev)].action;
      s.action_window(t, static_cast<int>(a)) = 1.0;
    }
    if (rul) s.rul = (*rul)[k];
    s.label = episode.steps[k].action;
    out.push_back(std::move(s));
  }
  return out;
}

std::size_t Dataset::repair_count() const {
  return static_cast<std::size_t>(std::count_if(samples.begin(), samples.end(), [](const TransitionSample& s) {
    return s.label == Action::Repair;
  }));
}

Dataset build_dataset(const std::vector<Trajectory>& trajs, const DatasetConfig& config, const CostModel& cost) {
  cost.validate();
  if (config.passes < 1) throw ValidationError("build_dataset: passes must be >= 1");
  if (config.horizon < 0) throw ValidationError("build_dataset: horizon must be >= 0");

  struct Job {
    std::size_t traj;
    int pass;
  };
  std::vector<Job> jobs;
  for (int p = 0; p < config.passes; ++p) {
    for (std::size_t i = 0; i < trajs.size(); ++i) jobs.push_back({i, p});
  }
  struct Result {
    std::vector<TransitionSample> samples;
    std::vector<double> returns;
    std::vector<double> rtg;
  };
  std::vector<Result> results(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t j) {
    const Trajectory& traj = trajs[jobs[j].traj];
    const std::uint64_t pass_seed = derive_seed(config.seed, static_cast<std::uint64_t>(jobs[j].pass));
    CostModel pass_cost = cost;
    pass_cost.seed = derive_seed(cost.seed, static_cast<std::uint64_t>(jobs[j].pass));
    std::optional<std::vector<double>> rul;
    if (config.include_rul && traj.ends_in_failure) rul = label_rul(traj, config.rul_cap);
    for (Episode ep : inject_repairs(traj, config.repair_prob, pass_seed, cost.lead_time)) {
      ep = assign_rewards(std::move(ep), pass_cost);
      std::vector<double> rewards;
      for (const Step& s : ep.steps) rewards.push_back(s.reward);
      std::vector<double> rtg = compute_rtg(rewards, config.horizon);
      std::optional<std::span<const double>> rul_span;
      if (rul) rul_span = std::span<const double>(rul->data(), ep.steps.size());
      auto samples = build_windows(ep, rtg, rul_span, config.window);
      Result& r = results[j];
      r.returns.push_back(ep.total_return());
      r.rtg.insert(r.rtg.end(), rtg.begin(), rtg.end());
      r.samples.insert(r.samples.end(), std::make_move_iterator(samples.begin()),
                       std::make_move_iterator(samples.end()));
    }
  });

  Dataset ds;
  ds.config = config;
  ds.cost = cost;
  bool first = true;
  for (Result& r : results) {
    for (double v : r.rtg) {
      ds.min_rtg = first ? v : std::min(ds.min_rtg, v);
      ds.max_rtg = first ? v : std::max(ds.max_rtg, v);
      first = false;
    }
    ds.episode_returns.insert(ds.episode_returns.end(), r.returns.begin(), r.returns.end());
    ds.samples.insert(ds.samples.end(), std::make_move_iterator(r.samples.begin()),
                      std::make_move_iterator(r.samples.end()));
  }
  return ds;
}

void save_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  bool has_rul = !ds.samples.empty() && ds.samples.front().rul.has_value();
  for (const TransitionSample& s : ds.samples) {
    if (s.rul.has_value() != has_rul) throw ValidationError("save_dataset: mixed rul presence");
    auto emit = [&](const Eigen::MatrixXd& m) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) out << format_exact(m(r, c)) << ' ';
      }
    };
    emit(s.obs_window);
    emit(s.action_window);
    emit(s.rtg_window);
    if (s.rul) out << format_exact(*s.rul) << ' ';
    out << static_cast<int>(s.label) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);

  nlohmann::ordered_json meta;
  meta["format"] = "rulrl-dataset";
  meta["version"] = 1;
  meta["window"] = ds.config.window;
  meta["horizon"] = ds.config.horizon;
  meta["obs_dim"] = kNumSensors;
  meta["has_rul"] = has_rul;
  meta["samples"] = ds.samples.size();
  meta["repair_prob"] = ds.config.repair_prob;
  meta["passes"] = ds.config.passes;
  meta["rul_cap"] = ds.config.rul_cap ? nlohmann::ordered_json(*ds.config.rul_cap) : nlohmann::ordered_json();
  meta["seed"] = ds.config.seed;
  meta["cost"] = cost_to_json(ds.cost);
  meta["min_rtg"] = ds.min_rtg;
  meta["max_rtg"] = ds.max_rtg;
  meta["episode_returns"] = ds.episode_returns;
  std::ofstream side(path + ".json");
  if (!side) throw std::runtime_error("cannot write " + path + ".json");
  side << meta.dump(2) << '\n';
}

Dataset load_dataset(const std::string& path) {
  std::ifstream side(path + ".json");
  if (!side) throw std::runtime_error("cannot open " + path + ".json");
  const nlohmann::json meta = nlohmann::json::parse(side);
  if (meta.value("format", "") != "rulrl-dataset") throw ValidationError(path + ".json: not a dataset sidecar");
  Dataset ds;
  ds.config.window = meta.at("window").get<int>();
  ds.config.horizon = meta.at("horizon").get<int>();
  ds.config.repair_prob = meta.at("repair_prob").get<double>();
  ds.config.passes = meta.at("passes").get<int>();
  if (!meta.at("rul_cap").is_null()) ds.config.rul_cap = meta.at("rul_cap").get<double>();
  ds.config.seed = meta.at("seed").get<std::uint64_t>();
  ds.cost = cost_from_json(meta.at("cost"));
  ds.min_rtg = meta.at("min_rtg").get<double>();
  ds.max_rtg = meta.at("max_rtg").get<double>();
  ds.episode_returns = meta.at("episode_returns").get<std::vector<double>>();
  const bool has_rul = meta.at("has_rul").get<bool>();
  ds.config.include_rul = has_rul;
  const int d = meta.at("obs_dim").get<int>();
  if (d != kNumSensors) throw ValidationError("dataset obs_dim must be 21");
  const int T = ds.config.window;

  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string token;
    auto next = [&] {
      if (!(fields >> token)) throw ParseError(line_no, "dataset row too short");
      return parse_double(token, line_no);
    };
    TransitionSample s;
    s.obs_window.resize(T, d);
    s.action_window.resize(T, 2);
    s.rtg_window.resize(T);
    for (int t = 0; t < T; ++t)
      for (int c = 0; c < d; ++c) s.obs_window(t, c) = next();
    for (int t = 0; t < T; ++t)
      for (int c = 0; c < 2; ++c) s.action_window(t, c) = next();
    for (int t = 0; t < T; ++t) s.rtg_window(t) = next();
    if (has_rul) s.rul = next();
    const double label = next();
    if (label != 0.0 && label != 1.0) throw ParseError(line_no, "label must be 0 or 1");
    s.label = label == 1.0 ? Action::Repair : Action::Continue;
    if (fields >> token) throw ParseError(line_no, "dataset row too long");
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace rulrl
