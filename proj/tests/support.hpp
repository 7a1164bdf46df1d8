#ifndef RULRL_TESTS_SUPPORT_HPP
#define RULRL_TESTS_SUPPORT_HPP

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rulrl/labeling.hpp"
#include "rulrl/trajdata.hpp"

namespace rulrl::test {

/// Failing (or truncated) unit of length n; sensor i at cycle k reads base + i + 0.01 k.
inline Trajectory make_traj(int unit_id, int n, bool fails = true, double base = 100.0) {
  Trajectory t{unit_id, {}, fails};
  for (int k = 1; k <= n; ++k) {
    CycleRecord c;
    c.cycle_index = k;
    c.op_settings << 0.0, 0.0, 100.0;
    for (int i = 0; i < kNumSensors; ++i) c.sensors(i) = base + i + 0.01 * k;
    t.cycles.push_back(c);
  }
  return t;
}

/// Episode of `continues` Continue steps followed by one terminal step.
inline Episode make_episode(int continues, Action last, Terminal terminal) {
  Episode e;
  e.unit_id = 1;
  e.terminal = terminal;
  for (int k = 0; k < continues; ++k) e.steps.push_back(Step{SensorVector::Constant(k), Action::Continue, 0.0});
  e.steps.push_back(Step{SensorVector::Constant(continues), last, 0.0});
  return e;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("rulrl_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace rulrl::test

#endif  // RULRL_TESTS_SUPPORT_HPP
