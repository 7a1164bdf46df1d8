#include "rulrl/trajdata.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace rulrl {

void validate(const Trajectory& traj) {
  const std::string unit = "unit " + std::to_string(traj.unit_id);
  if (traj.cycles.empty()) throw ValidationError(unit + ": empty trajectory");
  for (std::size_t k = 0; k < traj.cycles.size(); ++k) {
    const CycleRecord& c = traj.cycles[k];
    if (c.cycle_index != static_cast<int>(k) + 1) {
      throw ValidationError(unit + ": non-contiguous cycle index " + std::to_string(c.cycle_index) +
                            " at position " + std::to_string(k + 1));
    }
    if (!c.op_settings.allFinite() || !c.sensors.allFinite()) {
      throw ValidationError(unit + ": non-finite value at cycle " + std::to_string(c.cycle_index));
    }
  }
}

std::vector<Trajectory> parse_cmapss(std::istream& in, bool ends_in_failure) {
  std::vector<Trajectory> out;
  std::map<int, std::size_t> slot;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string_view> fields;
  while (std::getline(in, line)) {
    ++line_no;
    fields.clear();
    std::string_view rest(line);
    while (!rest.empty()) {
      const auto start = rest.find_first_not_of(" \t\r");
      if (start == std::string_view::npos) break;
      rest.remove_prefix(start);
      const auto end = rest.find_first_of(" \t\r");
      fields.push_back(rest.substr(0, end));
      if (end == std::string_view::npos) break;
      rest.remove_prefix(end);
    }
    if (fields.empty() || fields.front().front() == '#') continue;
    constexpr std::size_t kColumns = 2 + kNumSettings + kNumSensors;
    if (fields.size() < kColumns) {
      throw ParseError(line_no, "expected at least " + std::to_string(kColumns) + " columns, got " +
                                    std::to_string(fields.size()));
    }
    const double unit = parse_double(fields[0], line_no);
    const double cycle = parse_double(fields[1], line_no);
    if (unit != std::floor(unit) || cycle != std::floor(cycle)) {
      throw ParseError(line_no, "unit and cycle must be integers");
    }
    CycleRecord rec;
    rec.cycle_index = static_cast<int>(cycle);
    for (int j = 0; j < kNumSettings; ++j) rec.op_settings(j) = parse_double(fields[2 + j], line_no);
    for (int j = 0; j < kNumSensors; ++j) {
      rec.sensors(j) = parse_double(fields[2 + kNumSettings + j], line_no);
    }
    const int unit_id = static_cast<int>(unit);
    auto [it, inserted] = slot.try_emplace(unit_id, out.size());
    if (inserted) {
      out.push_back(Trajectory{unit_id, {}, ends_in_failure});
    }
    out[it->second].cycles.push_back(rec);
  }
  for (const Trajectory& t : out) validate(t);
  return out;
}

std::vector<Trajectory> parse_cmapss(std::string_view text, bool ends_in_failure) {
  std::istringstream in{std::string(text)};
  return parse_cmapss(in, ends_in_failure);
}

std::vector<Trajectory> load_cmapss(const std::string& path, bool ends_in_failure) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return parse_cmapss(in, ends_in_failure);
}

void write_cmapss(std::ostream& out, const std::vector<Trajectory>& trajs, std::string_view header) {
  if (!header.empty()) out << "# " << header << '\n';
  for (const Trajectory& t : trajs) {
    for (const CycleRecord& c : t.cycles) {
      out << t.unit_id << ' ' << c.cycle_index;
      for (int j = 0; j < kNumSettings; ++j) out << ' ' << format_exact(c.op_settings(j));
      for (int j = 0; j < kNumSensors; ++j) out << ' ' << format_exact(c.sensors(j));
      out << '\n';
    }
  }
}

void save_cmapss(const std::string& path, const std::vector<Trajectory>& trajs, std::string_view header) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_cmapss(out, trajs, header);
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::pair<std::vector<Trajectory>, std::vector<Trajectory>> split_train_test(
    const std::vector<Trajectory>& trajs) {
  const std::size_t n = trajs.size();
  if (n < 2) throw ValidationError("split needs at least 2 trajectories, got " + std::to_string(n));
  const std::size_t cut = n >= 251 ? 250 : (25 * n) / 26;
  return {std::vector<Trajectory>(trajs.begin(), trajs.begin() + static_cast<std::ptrdiff_t>(cut)),
          std::vector<Trajectory>(trajs.begin() + static_cast<std::ptrdiff_t>(cut), trajs.end())};
}

Eigen::MatrixXd default_regime_centers(int k) {
  // Altitude (kft), Mach, throttle resolver angle: the six FD002 flight conditions.
  static const double kCenters[6][3] = {{0.0, 0.0, 100.0},   {10.0, 0.25, 100.0}, {20.0, 0.70, 100.0},
                                        {25.0, 0.62, 60.0},  {35.0, 0.84, 100.0}, {42.0, 0.84, 100.0}};
  Eigen::MatrixXd c(k, kNumSettings);
  for (int r = 0; r < k; ++r) {
    if (r < 6) {
      for (int j = 0; j < kNumSettings; ++j) c(r, j) = kCenters[r][j];
    } else {
      c.row(r) << 5.0 * r, 0.1 * (r % 9), 40.0 + 10.0 * (r % 7);
    }
  }
  return c;
}

Eigen::VectorXd default_drift() {
  // Fourteen degradation-sensitive channels, the rest flat.
  Eigen::VectorXd d = Eigen::VectorXd::Zero(kNumSensors);
  d(1) = 0.020;
  d(2) = 0.030;
  d(3) = 0.045;
  d(6) = -0.025;
  d(7) = 0.010;
  d(8) = 0.015;
  d(10) = 0.040;
  d(11) = -0.030;
  d(12) = 0.010;
  d(13) = 0.020;
  d(14) = 0.035;
  d(16) = 0.025;
  d(19) = -0.020;
  d(20) = -0.020;
  return d;
}

void SynthConfig::validate() const {
  if (n_units < 0) throw ValidationError("synth: n_units must be non-negative");
  if (n_regimes < 1) throw ValidationError("synth: n_regimes must be >= 1");
  if (!(wear_rate_max > 0.0)) throw ValidationError("synth: wear rate upper bound must be positive");
  if (!(wear_rate_min > 0.0) || wear_rate_min > wear_rate_max) {
    throw ValidationError("synth: wear_rate_range must be a positive interval");
  }
  if (!(failure_threshold > 0.0)) throw ValidationError("synth: failure_threshold must be positive");
  if (initial_health_min < failure_threshold || initial_health_min > initial_health_max) {
    throw ValidationError("synth: initial health range must lie at or above failure_threshold");
  }
  if (noise_scale < 0.0 || setting_noise < 0.0) throw ValidationError("synth: noise must be non-negative");
  if (regime_centers.size() != 0 &&
      (regime_centers.rows() != n_regimes || regime_centers.cols() != kNumSettings)) {
    throw ValidationError("synth: regime_centers must be n_regimes x 3");
  }
  if (sensor_regime_offsets.size() != 0 &&
      (sensor_regime_offsets.rows() != n_regimes || sensor_regime_offsets.cols() != kNumSensors)) {
    throw ValidationError("synth: sensor_regime_offsets must be n_regimes x 21");
  }
  if (drift.size() != 0 && drift.size() != kNumSensors) {
    throw ValidationError("synth: drift must have 21 entries");
  }
}

SynthResult synth_generate_detailed(const SynthConfig& config) {
  config.validate();
  SynthResult result;
  result.regime_centers =
      config.regime_centers.size() ? config.regime_centers : default_regime_centers(config.n_regimes);
  result.drift = config.drift.size() ? config.drift : default_drift();
  if (config.sensor_regime_offsets.size()) {
    result.sensor_regime_offsets = config.sensor_regime_offsets;
  } else {
    Rng rng(derive_seed(config.seed, "offsets"));
    result.sensor_regime_offsets.resize(config.n_regimes, kNumSensors);
    for (int i = 0; i < kNumSensors; ++i) {
      const double base = std::exp(uniform(rng, std::log(5.0), std::log(5000.0)));
      for (int r = 0; r < config.n_regimes; ++r) {
        result.sensor_regime_offsets(r, i) = base * uniform(rng, 0.6, 1.4);
      }
    }
  }

  for (int u = 0; u < config.n_units; ++u) {
    const int unit_id = config.first_unit_id + u;
    Rng rng(derive_seed(derive_seed(config.seed, "unit"), static_cast<std::uint64_t>(unit_id)));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<int> pick_regime(0, config.n_regimes - 1);
    SynthUnit unit;
    unit.initial_health = uniform(rng, config.initial_health_min, config.initial_health_max);
    unit.wear_rate = uniform(rng, config.wear_rate_min, config.wear_rate_max);
    Trajectory traj{unit_id, {}, true};
    for (int k = 1;; ++k) {
      const double health = unit.initial_health - unit.wear_rate * (k - 1);
      const int r = pick_regime(rng);
      CycleRecord rec;
      rec.cycle_index = k;
      for (int j = 0; j < kNumSettings; ++j) {
        rec.op_settings(j) = result.regime_centers(r, j);
        if (config.setting_noise > 0.0) rec.op_settings(j) += config.setting_noise * gauss(rng);
      }
      for (int i = 0; i < kNumSensors; ++i) {
        double value = result.sensor_regime_offsets(r, i) * (1.0 + result.drift(i) * (1.0 - health));
        if (config.noise_scale > 0.0) value *= 1.0 + config.noise_scale * gauss(rng);
        rec.sensors(i) = value;
      }
      traj.cycles.push_back(rec);
      unit.health.push_back(health);
      unit.regimes.push_back(r);
      if (health < config.failure_threshold) break;
    }
    result.trajectories.push_back(std::move(traj));
    result.units.push_back(std::move(unit));
  }
  return result;
}

std::vector<Trajectory> synth_generate(const SynthConfig& config) {
  return synth_generate_detailed(config).trajectories;
}

}  // namespace rulrl
