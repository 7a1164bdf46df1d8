#ifndef RULRL_CLI_HPP
#define RULRL_CLI_HPP

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "rulrl/labeling.hpp"
#include "rulrl/neural.hpp"
#include "rulrl/rul_estimator.hpp"
#include "rulrl/simenv.hpp"
#include "rulrl/trajdata.hpp"

namespace rulrl::cli {

/// Declarative run configuration. Every field has a default; a JSON config
/// overrides any subset, and unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "out";

  /// "synth" generates units; "cmapss" loads train_path (run-to-failure) and
  /// optionally test_path (truncated units).
  std::string source = "synth";
  std::string train_path;
  std::string test_path;
  SynthConfig synth;

  int k_regimes = 6;
  DatasetConfig dataset;
  CostModel cost;

  bool rul_enabled = false;
  RulConfig rul;

  bool use_rul = false;
  std::vector<int> policy_hidden{100};
  nn::TrainConfig policy_train;

  int sweep_steps = 25;
  std::optional<double> sweep_min;
  std::optional<double> sweep_max;
  int n_draws = 10;
  TargetMode target_mode = TargetMode::Constant;
  /// Evaluate with the cost model's jitter; false evaluates exact costs.
  bool eval_jitter = true;
  int threshold = 10;
};

/// Thrown when a config has an unknown key or an invalid value.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A pipeline stage failed; `stage()` names it.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

RunConfig config_from_json(const nlohmann::json& j);
nlohmann::ordered_json config_to_json(const RunConfig& config);
RunConfig load_config(const std::string& path);

/// Seed of a named stage, derived from the master seed.
std::uint64_t stage_seed(std::uint64_t master, std::string_view stage);

/// FNV-1a over a file's bytes, as 16 hex digits.
std::string file_hash(const std::string& path);

struct PipelineResult {
  /// Output file name -> absolute path.
  std::map<std::string, std::string> files;
  double argmax_target = 0.0;
  double best_mean = 0.0;
};

/// synth-or-load, normalize, build-dataset, [train-rul], train-policy, sweep, report.
PipelineResult run_pipeline(const RunConfig& config, std::ostream& log);

/// Entry point: returns the process exit status (0 ok, 1 failure, 2 usage).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rulrl::cli

#endif  // RULRL_CLI_HPP
