#ifndef RULRL_TRAJDATA_HPP
#define RULRL_TRAJDATA_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rulrl/common.hpp"

namespace rulrl {

using SettingVector = Eigen::Matrix<double, kNumSettings, 1>;
using SensorVector = Eigen::Matrix<double, kNumSensors, 1>;

struct CycleRecord {
  int cycle_index = 1;
  SettingVector op_settings = SettingVector::Zero();
  SensorVector sensors = SensorVector::Zero();

  bool operator==(const CycleRecord&) const = default;
};

/// One unit's life, cycle 1 through the last recorded cycle.
struct Trajectory {
  int unit_id = 0;
  std::vector<CycleRecord> cycles;
  bool ends_in_failure = false;

  std::size_t size() const { return cycles.size(); }
  bool operator==(const Trajectory&) const = default;
};

/// Throws ValidationError if cycles are empty, non-finite, or not 1..n.
void validate(const Trajectory& traj);

/// Parse whitespace-delimited C-MAPSS rows: unit, cycle, 3 settings, 21 sensors.
/// Extra trailing columns are ignored; blank lines and lines starting with '#'
/// are skipped. Units appear in first-seen order.
std::vector<Trajectory> parse_cmapss(std::istream& in, bool ends_in_failure);
std::vector<Trajectory> parse_cmapss(std::string_view text, bool ends_in_failure);
std::vector<Trajectory> load_cmapss(const std::string& path, bool ends_in_failure);

/// Write in the same layout, values at round-trip precision. A non-empty
/// `header` is emitted as a single '#' comment line.
void write_cmapss(std::ostream& out, const std::vector<Trajectory>& trajs, std::string_view header = {});
void save_cmapss(const std::string& path, const std::vector<Trajectory>& trajs, std::string_view header = {});

/// First 250 units train, rest test; below 251 units the cut is floor(25N/26).
std::pair<std::vector<Trajectory>, std::vector<Trajectory>> split_train_test(
    const std::vector<Trajectory>& trajs);

struct SynthConfig {
  int n_units = 26;
  int n_regimes = 6;
  int first_unit_id = 1;
  double wear_rate_min = 0.006;
  double wear_rate_max = 0.010;
  double initial_health_min = 0.95;
  double initial_health_max = 1.0;
  double failure_threshold = 0.05;
  /// Relative Gaussian noise on every sensor reading.
  double noise_scale = 0.005;
  /// Absolute Gaussian noise on operating settings around the regime center.
  double setting_noise = 0.0;
  /// n_regimes x 3; empty selects built-in centers.
  Eigen::MatrixXd regime_centers;
  /// n_regimes x 21 multiplicative sensor levels; empty draws them from the seed.
  Eigen::MatrixXd sensor_regime_offsets;
  /// Per-sensor relative drift per unit of lost health; empty selects the default pattern.
  Eigen::VectorXd drift;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Hidden per-unit state exposed for testing the generator.
struct SynthUnit {
  double initial_health = 1.0;
  double wear_rate = 0.0;
  std::vector<double> health;
  std::vector<int> regimes;
};

struct SynthResult {
  std::vector<Trajectory> trajectories;
  std::vector<SynthUnit> units;
  Eigen::MatrixXd regime_centers;
  Eigen::MatrixXd sensor_regime_offsets;
  Eigen::VectorXd drift;
};

/// Health starts at U(initial_health_min, initial_health_max) and falls by a
/// per-unit wear rate each cycle; the unit fails on the first cycle whose
/// health is below the threshold. Sensor i in regime r reads
/// offset(r,i) * (1 + drift(i) * (1 - health)) * (1 + noise_scale * N(0,1)).
SynthResult synth_generate_detailed(const SynthConfig& config);
std::vector<Trajectory> synth_generate(const SynthConfig& config);

/// Default centers for k regimes (the six FD002-like centers, then spread).
Eigen::MatrixXd default_regime_centers(int k);
Eigen::VectorXd default_drift();

}  // namespace rulrl

#endif  // RULRL_TRAJDATA_HPP
