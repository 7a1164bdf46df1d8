#include "rulrl/policy.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace rulrl {

std::string FeatureLayout::describe() const {
  std::ostringstream s;
  s << "obs:" << obs_offset() << ':' << window * obs_dim << ",action:" << action_offset() << ':' << 2 * window
    << ",rtg:" << rtg_offset() << ':' << window;
  if (uses_rul) s << ",rul:" << rul_offset() << ":1";
  return s.str();
}

FeatureLayout FeatureLayout::parse(const std::string& text) {
  FeatureLayout layout;
  int obs_off = -1, obs_len = 0, act_off = 0, act_len = 0, rtg_off = 0, rtg_len = 0, rul_off = 0, rul_len = 0;
  const int n = std::sscanf(text.c_str(), "obs:%d:%d,action:%d:%d,rtg:%d:%d,rul:%d:%d", &obs_off, &obs_len,
                            &act_off, &act_len, &rtg_off, &rtg_len, &rul_off, &rul_len);
  if ((n != 6 && n != 8) || obs_off != 0 || rtg_len < 1) throw ValidationError("bad feature layout '" + text + "'");
  layout.window = rtg_len;
  layout.obs_dim = obs_len / rtg_len;
  layout.uses_rul = n == 8;
  if (layout.describe() != text) throw ValidationError("inconsistent feature layout '" + text + "'");
  return layout;
}

void encode_features(const FeatureLayout& layout, const Eigen::MatrixXd& obs_window,
                     const Eigen::MatrixXd& action_window, const Eigen::VectorXd& rtg_window,
                     std::optional<double> rul, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> out) {
  const int T = layout.window;
  if (obs_window.rows() != T || obs_window.cols() != layout.obs_dim || action_window.rows() != T ||
      action_window.cols() != 2 || rtg_window.size() != T) {
    throw ValidationError("policy input windows do not match layout " + layout.describe());
  }
  if (out.size() != layout.dim()) throw ValidationError("feature buffer has wrong width");
  for (int t = 0; t < T; ++t) {
    out.segment(layout.obs_offset() + t * layout.obs_dim, layout.obs_dim) = obs_window.row(t);
    out.segment(layout.action_offset() + 2 * t, 2) = action_window.row(t);
  }
  out.segment(layout.rtg_offset(), T) = rtg_window.transpose();
  if (layout.uses_rul) {
    if (!rul) throw ValidationError("policy uses RUL but none was supplied");
    out(layout.rul_offset()) = *rul;
  }
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct RowHash {
  const Eigen::MatrixXd* x;
  const std::vector<int>* labels;
  std::size_t operator()(Eigen::Index r) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (Eigen::Index c = 0; c < x->cols(); ++c) {
      const double v = (*x)(r, c);
      h = fnv1a(std::string_view(reinterpret_cast<const char*>(&v), sizeof v), h);
    }
    return static_cast<std::size_t>(derive_seed(h, static_cast<std::uint64_t>((*labels)[static_cast<std::size_t>(r)])));
  }
};

struct RowEq {
  const Eigen::MatrixXd* x;
  const std::vector<int>* labels;
  bool operator()(Eigen::Index a, Eigen::Index b) const {
    return (*labels)[static_cast<std::size_t>(a)] == (*labels)[static_cast<std::size_t>(b)] && x->row(a) == x->row(b);
  }
};

}  // namespace

PolicyModel train_policy(std::span<const TransitionSample> samples, const PolicyConfig& config) {
  if (samples.empty()) throw ValidationError("train_policy: empty dataset");
  FeatureLayout layout{samples.front().window(), kNumSensors, config.uses_rul};
  const auto n = static_cast<Eigen::Index>(samples.size());
  Eigen::MatrixXd x(n, layout.dim());
  std::vector<int> labels(samples.size());
  PolicyModel policy;
  policy.layout = layout;
  policy.min_train_rtg = policy.max_train_rtg = samples.front().rtg_window(layout.window - 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const TransitionSample& s = samples[static_cast<std::size_t>(i)];
    encode_features(layout, s.obs_window, s.action_window, s.rtg_window, config.uses_rul ? s.rul : std::nullopt,
                    x.row(i));
    labels[static_cast<std::size_t>(i)] = static_cast<int>(s.label);
    policy.min_train_rtg = std::min(policy.min_train_rtg, s.rtg_window.minCoeff());
    policy.max_train_rtg = std::max(policy.max_train_rtg, s.rtg_window.maxCoeff());
  }

  // Merge exact duplicates, keeping first-occurrence order.
  std::unordered_map<Eigen::Index, double, RowHash, RowEq> multiplicity(
      samples.size(), RowHash{&x, &labels}, RowEq{&x, &labels});
  std::vector<Eigen::Index> unique;
  for (Eigen::Index i = 0; i < n; ++i) {
    auto [it, inserted] = multiplicity.try_emplace(i, 0.0);
    if (inserted) unique.push_back(i);
    it->second += 1.0;
  }
  std::array<double, 2> class_count{0.0, 0.0};
  for (const auto& [row, count] : multiplicity) class_count[static_cast<std::size_t>(labels[static_cast<std::size_t>(row)])] += count;
  if (class_count[0] == 0.0 || class_count[1] == 0.0) {
    throw ValidationError("train_policy: dataset has a single action class (no repair examples; raise repair_prob)");
  }
  const double total = class_count[0] + class_count[1];

  nn::TrainingSet<double> data;
  const auto m = static_cast<Eigen::Index>(unique.size());
  data.inputs.resize(m, layout.dim());
  data.targets.resize(m, 1);
  data.weights.resize(m);
  std::uint64_t fp = 0xcbf29ce484222325ULL;
  for (Eigen::Index u = 0; u < m; ++u) {
    const Eigen::Index row = unique[static_cast<std::size_t>(u)];
    const int label = labels[static_cast<std::size_t>(row)];
    data.inputs.row(u) = x.row(row);
    data.targets(u, 0) = label;
    data.weights(u) = multiplicity.at(row) * total / (2.0 * class_count[static_cast<std::size_t>(label)]);
    fp = derive_seed(fp, RowHash{&x, &labels}(row));
  }
  policy.fingerprint = hex64(fp);

  std::vector<int> sizes{layout.dim()};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(2);
  nn::MlpModel net = nn::mlp_init(sizes, nn::OutputHead::Logits, derive_seed(config.train.seed, "policy-init"));
  policy.net = nn::train(std::move(net), data, config.train, nn::Loss::CrossEntropy).model;
  return policy;
}

PolicyModel train_policy(const Dataset& dataset, const PolicyConfig& config) {
  PolicyModel policy = train_policy(std::span<const TransitionSample>(dataset.samples), config);
  policy.horizon = dataset.config.horizon;
  if (!dataset.episode_returns.empty()) {
    const auto [lo, hi] = std::minmax_element(dataset.episode_returns.begin(), dataset.episode_returns.end());
    policy.min_train_return = *lo;
    policy.max_train_return = *hi;
  }
  return policy;
}

Decision decide(const Eigen::RowVectorXd& logits) {
  const Eigen::MatrixXd p = nn::softmax_rows(Eigen::MatrixXd(logits));
  Decision d;
  d.probabilities = {p(0, 0), p(0, 1)};
  d.action = p(0, 1) > p(0, 0) ? Action::Repair : Action::Continue;
  return d;
}

Decision select_action(const PolicyModel& policy, const Eigen::MatrixXd& obs_window,
                       const Eigen::MatrixXd& action_window, const Eigen::VectorXd& rtg_window,
                       std::optional<double> rul) {
  if (policy.uses_rul() != rul.has_value()) {
    throw ValidationError(policy.uses_rul() ? "policy requires an RUL input" : "policy does not take an RUL input");
  }
  Eigen::RowVectorXd x(policy.layout.dim());
  encode_features(policy.layout, obs_window, action_window, rtg_window, rul, x);
  return decide(nn::forward_batch(policy.net, Eigen::MatrixXd(x)).row(0));
}

Decision select_action(const PolicyModel& policy, const Eigen::MatrixXd& obs_window,
                       const Eigen::MatrixXd& action_window, double target_return, std::optional<double> rul) {
  return select_action(policy, obs_window, action_window,
                       Eigen::VectorXd::Constant(policy.window(), target_return), rul);
}

void save_policy(const std::string& path, const PolicyModel& policy) {
  nn::ModelFile file{policy.net, "policy", {}};
  file.meta["window"] = std::to_string(policy.window());
  file.meta["horizon"] = std::to_string(policy.horizon);
  file.meta["uses_rul"] = policy.uses_rul() ? "1" : "0";
  nn::save_model(path, file);

  nlohmann::ordered_json side;
  side["format"] = "rulrl-policy";
  side["version"] = 1;
  side["T"] = policy.window();
  side["H"] = policy.horizon;
  side["uses_rul"] = policy.uses_rul();
  side["layout"] = policy.layout.describe();
  side["fingerprint"] = policy.fingerprint;
  side["min_train_rtg"] = policy.min_train_rtg;
  side["max_train_rtg"] = policy.max_train_rtg;
  side["min_train_return"] = policy.min_train_return;
  side["max_train_return"] = policy.max_train_return;
  std::ofstream out(path + ".json");
  if (!out) throw std::runtime_error("cannot write " + path + ".json");
  out << side.dump(2) << '\n';
}

PolicyModel load_policy(const std::string& path) {
  nn::ModelFile file = nn::load_model(path);
  if (file.role != "policy") throw ValidationError(path + ": not a policy model (role " + file.role + ")");
  std::ifstream in(path + ".json");
  if (!in) throw std::runtime_error("cannot open " + path + ".json");
  const nlohmann::json side = nlohmann::json::parse(in);
  PolicyModel policy;
  policy.net = std::move(file.model);
  policy.layout = FeatureLayout::parse(side.at("layout").get<std::string>());
  policy.horizon = side.at("H").get<int>();
  policy.fingerprint = side.at("fingerprint").get<std::string>();
  policy.min_train_rtg = side.at("min_train_rtg").get<double>();
  policy.max_train_rtg = side.at("max_train_rtg").get<double>();
  policy.min_train_return = side.at("min_train_return").get<double>();
  policy.max_train_return = side.at("max_train_return").get<double>();
  if (policy.layout.window != side.at("T").get<int>() || policy.layout.uses_rul != side.at("uses_rul").get<bool>()) {
    throw ValidationError(path + ".json: layout disagrees with T/uses_rul");
  }
  if (policy.net.input_size() != policy.layout.dim() || policy.net.output_size() != 2) {
    throw ValidationError(path + ": network shape does not match layout");
  }
  return policy;
}

}  // namespace rulrl
