#include "rulrl/cli.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "rulrl/common.hpp"
#include "rulrl/json_io.hpp"
#include "rulrl/policy.hpp"
#include "rulrl/regime_norm.hpp"
#include "rulrl/sweep_report.hpp"

namespace rulrl::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("unknown config key '" + (where.empty() ? key : where + "." + key) + "'");
    }
  }
}

template <class T>
void read(const json& obj, const char* key, T& dst, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    dst = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + where + "." + key + "': " + e.what());
  }
}

void read_optional(const json& obj, const char* key, std::optional<double>& dst, const std::string& where) {
  if (!obj.contains(key)) return;
  if (obj.at(key).is_null()) {
    dst.reset();
    return;
  }
  double v = 0.0;
  read(obj, key, v, where);
  dst = v;
}

void read_train(const json& obj, nn::TrainConfig& t, const std::string& where) {
  check_keys(obj, {"learning_rate", "beta1", "beta2", "epsilon", "batch_size", "epochs", "standardize"}, where);
  read(obj, "learning_rate", t.learning_rate, where);
  read(obj, "beta1", t.beta1, where);
  read(obj, "beta2", t.beta2, where);
  read(obj, "epsilon", t.epsilon, where);
  read(obj, "batch_size", t.batch_size, where);
  read(obj, "epochs", t.epochs, where);
  read(obj, "standardize", t.standardize, where);
}

ordered_json train_to_json(const nn::TrainConfig& t) {
  ordered_json j;
  j["learning_rate"] = t.learning_rate;
  j["beta1"] = t.beta1;
  j["beta2"] = t.beta2;
  j["epsilon"] = t.epsilon;
  j["batch_size"] = t.batch_size;
  j["epochs"] = t.epochs;
  j["standardize"] = t.standardize;
  return j;
}

ordered_json optional_json(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

/// Fill every stage seed from the master seed.
void resolve_seeds(RunConfig& c) {
  c.synth.seed = stage_seed(c.seed, "synth");
  c.dataset.seed = stage_seed(c.seed, "build-dataset");
  c.cost.seed = stage_seed(c.seed, "cost");
  c.rul.train.seed = stage_seed(c.seed, "train-rul");
  c.policy_train.seed = stage_seed(c.seed, "train-policy");
}

std::uint64_t normalize_seed(const RunConfig& c) { return stage_seed(c.seed, "normalize"); }
std::uint64_t evaluate_seed(const RunConfig& c) { return stage_seed(c.seed, "evaluate"); }

ordered_json seeds_json(const RunConfig& c) {
  ordered_json j;
  j["master"] = c.seed;
  j["synth"] = c.synth.seed;
  j["normalize"] = normalize_seed(c);
  j["build-dataset"] = c.dataset.seed;
  j["cost"] = c.cost.seed;
  j["train-rul"] = c.rul.train.seed;
  j["train-policy"] = c.policy_train.seed;
  j["evaluate"] = evaluate_seed(c);
  return j;
}

template <class F>
auto stage(const std::string& name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

void write_manifest(const std::string& path, const std::string& command, const RunConfig& config,
                    const std::map<std::string, std::string>& inputs,
                    const std::map<std::string, std::string>& outputs) {
  ordered_json m;
  m["format"] = "rulrl-manifest";
  m["version"] = 1;
  m["command"] = command;
  m["config"] = config_to_json(config);
  m["seeds"] = seeds_json(config);
  ordered_json in = ordered_json::object(), out = ordered_json::object();
  for (const auto& [name, p] : inputs) in[name] = {{"path", p}, {"fnv1a64", file_hash(p)}};
  for (const auto& [name, p] : outputs) out[name] = {{"path", p}, {"fnv1a64", file_hash(p)}};
  m["inputs"] = in;
  m["outputs"] = out;
  write_text(path, m.dump(2) + "\n");
}

std::vector<double> linspace(double lo, double hi, int steps) {
  if (steps < 1) throw ValidationError("sweep steps must be >= 1");
  if (steps == 1) return {lo};
  std::vector<double> g(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) g[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (steps - 1);
  return g;
}

std::vector<double> sweep_grid(const RunConfig& c, const PolicyModel& policy) {
  if (c.sweep_min || c.sweep_max) {
    const std::vector<double> d = default_grid(policy.min_train_return, policy.max_train_return, c.sweep_steps);
    return linspace(c.sweep_min.value_or(d.front()), c.sweep_max.value_or(d.back()), c.sweep_steps);
  }
  return default_grid(policy.min_train_return, policy.max_train_return, c.sweep_steps);
}

CostModel evaluation_cost(const RunConfig& c) {
  CostModel cost = c.eval_jitter ? c.cost : c.cost.without_jitter();
  cost.seed = evaluate_seed(c);
  return cost;
}

PolicyModel train_policy_from(const Dataset& dataset, const RunConfig& c) {
  PolicyConfig pc;
  pc.hidden = c.policy_hidden;
  pc.uses_rul = c.use_rul;
  pc.train = c.policy_train;
  return train_policy(dataset, pc);
}

std::vector<EvalRecord> all_records(const SweepCurve& curve) {
  std::vector<EvalRecord> r = curve.records;
  r.insert(r.end(), curve.baselines.begin(), curve.baselines.end());
  return r;
}

void save_outcomes(const std::string& path, const std::vector<EvalRecord>& records) {
  std::ostringstream s;
  write_outcomes_csv(s, records);
  write_text(path, s.str());
}

std::string join(const fs::path& dir, const std::string& name) { return (dir / name).string(); }

}  // namespace

std::uint64_t stage_seed(std::uint64_t master, std::string_view stage) { return derive_seed(master, stage); }

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream s;
  s << in.rdbuf();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(s.str())));
  return buf;
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  check_keys(j, {"seed", "output_dir", "data", "synth", "normalize", "dataset", "cost", "rul", "policy", "sweep"}, "");
  read(j, "seed", c.seed, "");
  read(j, "output_dir", c.output_dir, "");
  if (j.contains("data")) {
    const json& d = j["data"];
    check_keys(d, {"source", "train_path", "test_path"}, "data");
    read(d, "source", c.source, "data");
    read(d, "train_path", c.train_path, "data");
    read(d, "test_path", c.test_path, "data");
  }
  if (c.source != "synth" && c.source != "cmapss") throw ConfigError("data.source must be 'synth' or 'cmapss'");
  if (c.source == "cmapss" && c.train_path.empty()) throw ConfigError("data.train_path is required for cmapss");
  if (j.contains("synth")) {
    const json& s = j["synth"];
    check_keys(s, {"n_units", "n_regimes", "wear_rate_min", "wear_rate_max", "initial_health_min",
                   "initial_health_max", "failure_threshold", "noise_scale", "setting_noise"},
               "synth");
    read(s, "n_units", c.synth.n_units, "synth");
    read(s, "n_regimes", c.synth.n_regimes, "synth");
    read(s, "wear_rate_min", c.synth.wear_rate_min, "synth");
    read(s, "wear_rate_max", c.synth.wear_rate_max, "synth");
    read(s, "initial_health_min", c.synth.initial_health_min, "synth");
    read(s, "initial_health_max", c.synth.initial_health_max, "synth");
    read(s, "failure_threshold", c.synth.failure_threshold, "synth");
    read(s, "noise_scale", c.synth.noise_scale, "synth");
    read(s, "setting_noise", c.synth.setting_noise, "synth");
  }
  if (j.contains("normalize")) {
    check_keys(j["normalize"], {"k_regimes"}, "normalize");
    read(j["normalize"], "k_regimes", c.k_regimes, "normalize");
  }
  if (j.contains("dataset")) {
    const json& d = j["dataset"];
    check_keys(d, {"window", "horizon", "repair_prob", "passes", "rul_cap"}, "dataset");
    read(d, "window", c.dataset.window, "dataset");
    read(d, "horizon", c.dataset.horizon, "dataset");
    read(d, "repair_prob", c.dataset.repair_prob, "dataset");
    read(d, "passes", c.dataset.passes, "dataset");
    read_optional(d, "rul_cap", c.dataset.rul_cap, "dataset");
  }
  if (j.contains("cost")) {
    const json& d = j["cost"];
    check_keys(d, {"failure_base", "failure_jitter", "repair_base", "repair_jitter", "profit_base", "profit_jitter",
                   "lead_time"},
               "cost");
    read(d, "failure_base", c.cost.failure_base, "cost");
    read(d, "failure_jitter", c.cost.failure_jitter, "cost");
    read(d, "repair_base", c.cost.repair_base, "cost");
    read(d, "repair_jitter", c.cost.repair_jitter, "cost");
    read(d, "profit_base", c.cost.profit_base, "cost");
    read(d, "profit_jitter", c.cost.profit_jitter, "cost");
    read(d, "lead_time", c.cost.lead_time, "cost");
  }
  if (j.contains("rul")) {
    const json& d = j["rul"];
    check_keys(d, {"enabled", "window", "cap", "hidden", "sample_stride", "train"}, "rul");
    read(d, "enabled", c.rul_enabled, "rul");
    read(d, "window", c.rul.window, "rul");
    read_optional(d, "cap", c.rul.cap, "rul");
    read(d, "hidden", c.rul.hidden, "rul");
    read(d, "sample_stride", c.rul.sample_stride, "rul");
    if (d.contains("train")) read_train(d["train"], c.rul.train, "rul.train");
  }
  if (j.contains("policy")) {
    const json& d = j["policy"];
    check_keys(d, {"use_rul", "hidden", "train"}, "policy");
    read(d, "use_rul", c.use_rul, "policy");
    read(d, "hidden", c.policy_hidden, "policy");
    if (d.contains("train")) read_train(d["train"], c.policy_train, "policy.train");
  }
  if (j.contains("sweep")) {
    const json& d = j["sweep"];
    check_keys(d, {"steps", "min", "max", "n_draws", "target_mode", "eval_jitter", "threshold"}, "sweep");
    read(d, "steps", c.sweep_steps, "sweep");
    read_optional(d, "min", c.sweep_min, "sweep");
    read_optional(d, "max", c.sweep_max, "sweep");
    read(d, "n_draws", c.n_draws, "sweep");
    std::string mode{to_string(c.target_mode)};
    read(d, "target_mode", mode, "sweep");
    try {
      c.target_mode = parse_target_mode(mode);
    } catch (const ValidationError& e) {
      throw ConfigError(std::string("sweep.target_mode: ") + e.what());
    }
    read(d, "eval_jitter", c.eval_jitter, "sweep");
    read(d, "threshold", c.threshold, "sweep");
  }
  if (c.use_rul) c.rul_enabled = true;
  if (c.sweep_steps < 1) throw ConfigError("sweep.steps must be >= 1");
  if (c.n_draws < 1) throw ConfigError("sweep.n_draws must be >= 1");
  if (c.k_regimes < 1) throw ConfigError("normalize.k_regimes must be >= 1");
  try {
    c.synth.validate();
    c.cost.validate();
    c.policy_train.validate();
    c.rul.train.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  resolve_seeds(c);
  return c;
}

ordered_json config_to_json(const RunConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["data"] = {{"source", c.source}, {"train_path", c.train_path}, {"test_path", c.test_path}};
  ordered_json s;
  s["n_units"] = c.synth.n_units;
  s["n_regimes"] = c.synth.n_regimes;
  s["wear_rate_min"] = c.synth.wear_rate_min;
  s["wear_rate_max"] = c.synth.wear_rate_max;
  s["initial_health_min"] = c.synth.initial_health_min;
  s["initial_health_max"] = c.synth.initial_health_max;
  s["failure_threshold"] = c.synth.failure_threshold;
  s["noise_scale"] = c.synth.noise_scale;
  s["setting_noise"] = c.synth.setting_noise;
  j["synth"] = s;
  j["normalize"] = {{"k_regimes", c.k_regimes}};
  ordered_json d;
  d["window"] = c.dataset.window;
  d["horizon"] = c.dataset.horizon;
  d["repair_prob"] = c.dataset.repair_prob;
  d["passes"] = c.dataset.passes;
  d["rul_cap"] = optional_json(c.dataset.rul_cap);
  j["dataset"] = d;
  ordered_json cost = cost_to_json(c.cost);
  cost.erase("seed");
  j["cost"] = cost;
  ordered_json r;
  r["enabled"] = c.rul_enabled;
  r["window"] = c.rul.window;
  r["cap"] = optional_json(c.rul.cap);
  r["hidden"] = c.rul.hidden;
  r["sample_stride"] = c.rul.sample_stride;
  r["train"] = train_to_json(c.rul.train);
  j["rul"] = r;
  ordered_json p;
  p["use_rul"] = c.use_rul;
  p["hidden"] = c.policy_hidden;
  p["train"] = train_to_json(c.policy_train);
  j["policy"] = p;
  ordered_json w;
  w["steps"] = c.sweep_steps;
  w["min"] = optional_json(c.sweep_min);
  w["max"] = optional_json(c.sweep_max);
  w["n_draws"] = c.n_draws;
  w["target_mode"] = std::string(to_string(c.target_mode));
  w["eval_jitter"] = c.eval_jitter;
  w["threshold"] = c.threshold;
  j["sweep"] = w;
  return j;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return config_from_json(j);
}

PipelineResult run_pipeline(const RunConfig& c, std::ostream& log) {
  const fs::path dir = c.output_dir;
  stage("setup", [&] { fs::create_directories(dir); });
  PipelineResult result;
  auto& files = result.files;

  // Load or generate, then hold out the tail units.
  std::vector<Trajectory> train, test, test2;
  stage("synth", [&] {
    std::vector<Trajectory> all;
    if (c.source == "synth") {
      all = synth_generate(c.synth);
    } else {
      all = load_cmapss(c.train_path, true);
      if (!c.test_path.empty()) test2 = load_cmapss(c.test_path, false);
    }
    std::tie(train, test) = split_train_test(all);
  });
  log << "synth: " << train.size() << " train / " << test.size() << " held-out units\n";

  RegimeNormalizer norm = stage("normalize", [&] {
    RegimeNormalizer n = fit_regimes(train, c.k_regimes, normalize_seed(c));
    train = normalize(train, n);
    test = normalize(test, n);
    if (!test2.empty()) test2 = normalize(test2, n);
    files["normalizer.txt"] = join(dir, "normalizer.txt");
    save_normalizer(files["normalizer.txt"], n);
    return n;
  });

  Dataset dataset = stage("build-dataset", [&] {
    DatasetConfig dc = c.dataset;
    dc.include_rul = c.use_rul;
    return build_dataset(train, dc, c.cost);
  });
  log << "build-dataset: " << dataset.samples.size() << " samples, " << dataset.repair_count() << " repairs\n";

  std::optional<RulModel> rul;
  if (c.rul_enabled) {
    rul = stage("train-rul", [&] {
      RulModel m = train_rul(train, c.rul);
      files["rul.model"] = join(dir, "rul.model");
      save_rul_model(files["rul.model"], m);
      return m;
    });
    log << "train-rul: done\n";
  }

  const PolicyModel policy = stage("train-policy", [&] {
    PolicyModel p = train_policy_from(dataset, c);
    files["policy.model"] = join(dir, "policy.model");
    save_policy(files["policy.model"], p);
    return p;
  });
  log << "train-policy: training returns [" << policy.min_train_return << ", " << policy.max_train_return << "]\n";

  const CostModel eval_cost = evaluation_cost(c);
  BaselineSet baselines;
  baselines.oracle_threshold = c.threshold;
  baselines.estimator = rul ? &*rul : nullptr;
  baselines.estimator_threshold = c.threshold;
  const PolicyRule rule{&policy, 0.0, c.target_mode, rul && c.use_rul ? &*rul : nullptr};

  auto run_sweep = [&](const std::vector<Trajectory>& units, const std::string& suffix) {
    const SweepCurve curve =
        stage("sweep", [&] { return sweep(rule, units, eval_cost, sweep_grid(c, policy), c.n_draws, baselines); });
    stage("report", [&] {
      files["curve" + suffix + ".csv"] = join(dir, "curve" + suffix + ".csv");
      files["curve" + suffix + ".svg"] = join(dir, "curve" + suffix + ".svg");
      files["outcomes" + suffix + ".csv"] = join(dir, "outcomes" + suffix + ".csv");
      emit_csv(curve, files["curve" + suffix + ".csv"]);
      emit_svg(curve, files["curve" + suffix + ".svg"]);
      save_outcomes(files["outcomes" + suffix + ".csv"], all_records(curve));
    });
    log << "sweep" << suffix << ": best mean " << curve.best().mean << " at target " << curve.argmax_target;
    for (const EvalRecord& b : curve.baselines) log << "; " << b.rule << " " << b.mean;
    log << '\n';
    return curve;
  };
  const SweepCurve curve = run_sweep(test, "");
  result.argmax_target = curve.argmax_target;
  result.best_mean = curve.best().mean;
  if (!test2.empty()) run_sweep(test2, "_test");
  (void)norm;

  stage("manifest", [&] {
    std::map<std::string, std::string> inputs;
    if (c.source == "cmapss") {
      inputs["train"] = c.train_path;
      if (!c.test_path.empty()) inputs["test"] = c.test_path;
    }
    const std::string path = join(dir, "manifest.json");
    write_manifest(path, "pipeline", c, inputs, files);
    files["manifest.json"] = path;
  });
  return result;
}

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
};

RunConfig make_config(const Common& common) {
  json j = json::object();
  RunConfig c;
  if (!common.config_path.empty()) {
    c = load_config(common.config_path);
  } else {
    c = config_from_json(j);
  }
  if (common.seed) {
    c.seed = *common.seed;
    resolve_seeds(c);
  }
  return c;
}

void add_common(CLI::App* app, Common& common) {
  app->add_option("-c,--config", common.config_path, "JSON run configuration");
  app->add_option("--seed", common.seed, "Master seed (overrides the config)");
}

std::vector<Trajectory> load_units(const std::string& path, bool truncated) { return load_cmapss(path, !truncated); }

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Return-conditioned maintenance policy pipeline", "rulrl"};
  app.require_subcommand(1);
  Common common;
  std::string out_path, train_path, test_path, dataset_path, policy_path, rul_path, model_path, out_test_path,
      curve_path, rule_name = "policy", title, out_dir, outcomes_path;
  double target = 0.0;
  bool truncated = false;

  auto* synth_cmd = app.add_subcommand("synth", "Generate synthetic run-to-failure units");
  add_common(synth_cmd, common);
  synth_cmd->add_option("-o,--out", out_path, "Output trajectory file")->required();

  auto* norm_cmd = app.add_subcommand("normalize", "Fit regimes on training units and normalize sensors");
  add_common(norm_cmd, common);
  norm_cmd->add_option("--train", train_path, "Run-to-failure units")->required();
  norm_cmd->add_option("--model", model_path, "Output normalizer file")->required();
  norm_cmd->add_option("-o,--out", out_path, "Output normalized training units")->required();
  norm_cmd->add_option("--test", test_path, "Additional units to normalize");
  norm_cmd->add_option("--out-test", out_test_path, "Output normalized additional units");
  norm_cmd->add_flag("--truncated", truncated, "The additional units do not end in failure");

  auto* ds_cmd = app.add_subcommand("build-dataset", "Inject repairs and window the training units");
  add_common(ds_cmd, common);
  ds_cmd->add_option("--train", train_path, "Normalized run-to-failure units")->required();
  ds_cmd->add_option("-o,--out", out_path, "Output dataset file")->required();

  auto* rul_cmd = app.add_subcommand("train-rul", "Train the RUL estimator");
  add_common(rul_cmd, common);
  rul_cmd->add_option("--train", train_path, "Normalized run-to-failure units")->required();
  rul_cmd->add_option("-o,--out", out_path, "Output model file")->required();

  auto* pol_cmd = app.add_subcommand("train-policy", "Train the return-conditioned policy");
  add_common(pol_cmd, common);
  pol_cmd->add_option("--dataset", dataset_path, "Dataset file")->required();
  pol_cmd->add_option("-o,--out", out_path, "Output model file")->required();

  auto* eval_cmd = app.add_subcommand("evaluate", "Roll out one decision rule");
  add_common(eval_cmd, common);
  eval_cmd->add_option("--test", test_path, "Normalized units")->required();
  eval_cmd->add_flag("--truncated", truncated, "Units do not end in failure");
  eval_cmd->add_option("--rule", rule_name, "no_action | oracle | estimated | policy")
      ->check(CLI::IsMember({"no_action", "oracle", "estimated", "policy"}));
  eval_cmd->add_option("--target", target, "Target return for the policy rule");
  eval_cmd->add_option("--policy", policy_path, "Policy model file");
  eval_cmd->add_option("--rul-model", rul_path, "RUL model file");
  eval_cmd->add_option("-o,--out", out_path, "Output outcomes CSV")->required();

  auto* sweep_cmd = app.add_subcommand("sweep", "Evaluate the policy over a grid of target returns");
  add_common(sweep_cmd, common);
  sweep_cmd->add_option("--test", test_path, "Normalized units")->required();
  sweep_cmd->add_flag("--truncated", truncated, "Units do not end in failure");
  sweep_cmd->add_option("--policy", policy_path, "Policy model file")->required();
  sweep_cmd->add_option("--rul-model", rul_path, "RUL model file");
  sweep_cmd->add_option("-o,--out", out_path, "Output curve CSV")->required();
  sweep_cmd->add_option("--outcomes", outcomes_path, "Output per-unit outcomes CSV");

  auto* report_cmd = app.add_subcommand("report", "Render a curve CSV as SVG");
  add_common(report_cmd, common);
  report_cmd->add_option("--curve", curve_path, "Curve CSV")->required();
  report_cmd->add_option("-o,--out", out_path, "Output SVG")->required();
  report_cmd->add_option("--title", title, "Chart title");

  auto* pipe_cmd = app.add_subcommand("pipeline", "Run every stage end to end");
  add_common(pipe_cmd, common);
  pipe_cmd->add_option("--out-dir", out_dir, "Output directory (overrides the config)");

  if (!args.empty() && !args.front().empty() && args.front()[0] != '-') {
    bool known = false;
    for (const CLI::App* sub : app.get_subcommands({})) known = known || sub->get_name() == args.front();
    if (!known) {
      err << "rulrl: unknown subcommand '" << args.front() << "'\n" << app.help();
      return 2;
    }
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "rulrl: " << e.what() << "\n" << app.help();
    return 2;
  }

  std::string current = "config";
  try {
    RunConfig config = make_config(common);
    auto manifest = [&](const std::string& command, const std::map<std::string, std::string>& inputs,
                        const std::map<std::string, std::string>& outputs) {
      current = "manifest";
      const std::string primary = outputs.begin()->second;
      write_manifest(primary + ".manifest.json", command, config, inputs, outputs);
    };

    if (*synth_cmd) {
      current = "synth";
      save_cmapss(out_path, synth_generate(config.synth));
      manifest("synth", {}, {{"units", out_path}});
    } else if (*norm_cmd) {
      current = "normalize";
      if (!test_path.empty() && out_test_path.empty()) throw ValidationError("--test needs --out-test");
      const auto train = load_units(train_path, false);
      const RegimeNormalizer n = fit_regimes(train, config.k_regimes, normalize_seed(config));
      save_normalizer(model_path, n);
      save_cmapss(out_path, normalize(train, n));
      std::map<std::string, std::string> inputs{{"train", train_path}}, outputs{{"normalizer", model_path}, {"train", out_path}};
      if (!test_path.empty()) {
        save_cmapss(out_test_path, normalize(load_units(test_path, truncated), n));
        inputs["test"] = test_path;
        outputs["test"] = out_test_path;
      }
      manifest("normalize", inputs, outputs);
    } else if (*ds_cmd) {
      current = "build-dataset";
      DatasetConfig dc = config.dataset;
      dc.include_rul = true;
      const Dataset d = build_dataset(load_units(train_path, false), dc, config.cost);
      save_dataset(out_path, d);
      out << "samples " << d.samples.size() << ", repairs " << d.repair_count() << '\n';
      manifest("build-dataset", {{"train", train_path}}, {{"dataset", out_path}});
    } else if (*rul_cmd) {
      current = "train-rul";
      save_rul_model(out_path, train_rul(load_units(train_path, false), config.rul));
      manifest("train-rul", {{"train", train_path}}, {{"model", out_path}});
    } else if (*pol_cmd) {
      current = "train-policy";
      const PolicyModel p = train_policy_from(load_dataset(dataset_path), config);
      save_policy(out_path, p);
      out << "training returns [" << p.min_train_return << ", " << p.max_train_return << "]\n";
      manifest("train-policy", {{"dataset", dataset_path}}, {{"model", out_path}});
    } else if (*eval_cmd || *sweep_cmd) {
      current = *eval_cmd ? "evaluate" : "sweep";
      const auto units = load_units(test_path, truncated);
      std::optional<PolicyModel> policy;
      std::optional<RulModel> rul;
      std::map<std::string, std::string> inputs{{"test", test_path}};
      if (!policy_path.empty()) {
        policy = load_policy(policy_path);
        inputs["policy"] = policy_path;
      }
      if (!rul_path.empty()) {
        rul = load_rul_model(rul_path);
        inputs["rul_model"] = rul_path;
      }
      const CostModel cost = evaluation_cost(config);
      if (*eval_cmd) {
        DecisionRule rule = NoAction{};
        if (rule_name == "oracle") {
          rule = OracleRul{config.threshold};
        } else if (rule_name == "estimated") {
          if (!rul) throw ValidationError("--rule estimated needs --rul-model");
          rule = EstimatedRul{&*rul, config.threshold};
        } else if (rule_name == "policy") {
          if (!policy) throw ValidationError("--rule policy needs --policy");
          rule = PolicyRule{&*policy, target, config.target_mode, rul ? &*rul : nullptr};
        }
        const EvalRecord rec = evaluate(units, rule, cost, config.n_draws);
        save_outcomes(out_path, {rec});
        out << rec.rule << " mean " << format_exact(rec.mean) << " std " << format_exact(rec.std) << '\n';
        manifest("evaluate", inputs, {{"outcomes", out_path}});
      } else {
        BaselineSet baselines;
        baselines.oracle_threshold = config.threshold;
        baselines.estimator = rul ? &*rul : nullptr;
        baselines.estimator_threshold = config.threshold;
        const PolicyRule rule{&*policy, 0.0, config.target_mode, rul && policy->uses_rul() ? &*rul : nullptr};
        const SweepCurve curve = sweep(rule, units, cost, sweep_grid(config, *policy), config.n_draws, baselines);
        emit_csv(curve, out_path);
        std::map<std::string, std::string> outputs{{"curve", out_path}};
        if (!outcomes_path.empty()) {
          save_outcomes(outcomes_path, all_records(curve));
          outputs["outcomes"] = outcomes_path;
        }
        out << "best mean " << format_exact(curve.best().mean) << " at target " << format_exact(curve.argmax_target)
            << '\n';
        manifest("sweep", inputs, outputs);
      }
    } else if (*report_cmd) {
      current = "report";
      const std::vector<SweepCurve> curves = curves_from_rows(load_curve_csv(curve_path));
      SvgOptions opts;
      if (!title.empty()) opts.title = title;
      emit_svg(std::span<const SweepCurve>(curves), out_path, opts);
      manifest("report", {{"curve", curve_path}}, {{"svg", out_path}});
    } else if (*pipe_cmd) {
      current = "pipeline";
      if (!out_dir.empty()) config.output_dir = out_dir;
      const PipelineResult r = run_pipeline(config, out);
      out << "wrote " << r.files.size() << " files to " << config.output_dir << '\n';
    }
  } catch (const StageError& e) {
    err << "rulrl: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "rulrl: stage '" << current << "' failed: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace rulrl::cli
