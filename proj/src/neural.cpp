#include "rulrl/neural.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace rulrl::nn {

double r_squared(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size() || targets.empty()) {
    throw ValidationError("r_squared: need equal, non-zero lengths");
  }
  const double mean = std::accumulate(targets.begin(), targets.end(), 0.0) / static_cast<double>(targets.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    ss_res += (targets[i] - predictions[i]) * (targets[i] - predictions[i]);
    ss_tot += (targets[i] - mean) * (targets[i] - mean);
  }
  if (!(ss_tot > 0.0)) throw NumericError("r_squared: undefined for constant targets");
  return 1.0 - ss_res / ss_tot;
}

namespace {

constexpr const char* kMagic = "rulrl-mlp";
constexpr int kVersion = 1;

void write_row(std::ostream& out, const auto& values) {
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (i) out << ' ';
    out << format_exact(values(i));
  }
  out << '\n';
}

}  // namespace

void write_model(std::ostream& out, const ModelFile& file) {
  const MlpModel& m = file.model;
  out << kMagic << ' ' << kVersion << '\n';
  out << "role " << file.role << '\n';
  out << "head " << (m.head == OutputHead::Logits ? "logits" : "linear") << '\n';
  out << "layers";
  for (int s : m.layer_sizes) out << ' ' << s;
  out << '\n';
  out << "init " << m.init_scheme << '\n';
  out << "seed " << m.init_seed << '\n';
  for (const auto& [key, value] : file.meta) out << "meta " << key << ' ' << value << '\n';
  out << "standardization " << (m.standardized() ? 1 : 0) << '\n';
  if (m.standardized()) {
    write_row(out, m.input_mean);
    write_row(out, m.input_scale);
  }
  for (int l = 0; l < m.num_layers(); ++l) {
    out << "layer " << l << '\n';
    for (Eigen::Index i = 0; i < m.weights[l].rows(); ++i) write_row(out, m.weights[l].row(i));
    write_row(out, m.biases[l]);
  }
  out << "end\n";
}

ModelFile read_model(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> std::istringstream {
    if (!std::getline(in, line)) throw ParseError(line_no + 1, "model file truncated");
    ++line_no;
    return std::istringstream(line);
  };
  auto read_values = [&](Eigen::Index n) {
    std::istringstream fields = next_line();
    Eigen::VectorXd v(n);
    std::string token;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!(fields >> token)) throw ParseError(line_no, "expected " + std::to_string(n) + " values");
      v(i) = parse_double(token, line_no);
    }
    if (fields >> token) throw ParseError(line_no, "unexpected trailing value");
    return v;
  };
  auto expect_key = [&](const std::string& key) {
    std::istringstream fields = next_line();
    std::string k;
    fields >> k;
    if (k != key) throw ParseError(line_no, "expected '" + key + "'");
    return fields;
  };

  ModelFile file;
  MlpModel& m = file.model;
  {
    std::istringstream f = next_line();
    std::string magic;
    int version = 0;
    f >> magic >> version;
    if (magic != kMagic) throw ParseError(line_no, "not an rulrl model file");
    if (version != kVersion) throw ParseError(line_no, "unsupported model version " + std::to_string(version));
  }
  expect_key("role") >> file.role;
  {
    std::string head;
    expect_key("head") >> head;
    if (head == "logits") {
      m.head = OutputHead::Logits;
    } else if (head == "linear") {
      m.head = OutputHead::Linear;
    } else {
      throw ParseError(line_no, "unknown head '" + head + "'");
    }
  }
  {
    std::istringstream f = expect_key("layers");
    int s = 0;
    while (f >> s) m.layer_sizes.push_back(s);
    if (m.layer_sizes.size() < 2) throw ParseError(line_no, "need at least two layer sizes");
    for (int v : m.layer_sizes) {
      if (v <= 0) throw ParseError(line_no, "layer sizes must be positive");
    }
  }
  expect_key("init") >> m.init_scheme;
  expect_key("seed") >> m.init_seed;
  int standardized = 0;
  for (;;) {
    std::istringstream f = next_line();
    std::string key;
    f >> key;
    if (key == "meta") {
      std::string k, v;
      f >> k >> v;
      file.meta[k] = v;
    } else if (key == "standardization") {
      f >> standardized;
      break;
    } else {
      throw ParseError(line_no, "unexpected header key '" + key + "'");
    }
  }
  const int n_in = m.layer_sizes.front();
  if (standardized) {
    m.input_mean = read_values(n_in).transpose();
    m.input_scale = read_values(n_in).transpose();
  }
  for (std::size_t l = 0; l + 1 < m.layer_sizes.size(); ++l) {
    expect_key("layer");
    Eigen::MatrixXd w(m.layer_sizes[l], m.layer_sizes[l + 1]);
    for (Eigen::Index i = 0; i < w.rows(); ++i) w.row(i) = read_values(w.cols()).transpose();
    m.weights.push_back(std::move(w));
    m.biases.push_back(read_values(m.layer_sizes[l + 1]));
  }
  expect_key("end");
  return file;
}

void save_model(const std::string& path, const ModelFile& file) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_model(out, file);
  if (!out) throw std::runtime_error("write failed: " + path);
}

ModelFile load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_model(in);
}

}  // namespace rulrl::nn
