#include "rulrl/sweep_report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace rulrl {

const EvalRecord& SweepCurve::best() const {
  if (records.empty()) throw ValidationError("sweep curve has no records");
  const auto it = std::find_if(records.begin(), records.end(),
                               [&](const EvalRecord& r) { return r.target_return == argmax_target; });
  return it == records.end() ? records.front() : *it;
}

std::vector<double> default_grid(double min_train_return, double max_train_return, int steps) {
  if (steps < 1) throw ValidationError("default_grid: steps must be >= 1");
  double lo = 0.5 * min_train_return;
  double hi = 1.5 * max_train_return;
  if (lo > hi) std::swap(lo, hi);
  if (steps == 1 || hi == lo) return {lo};
  std::vector<double> grid(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) grid[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (steps - 1);
  return grid;
}

SweepCurve sweep(const PolicyRule& rule, const std::vector<Trajectory>& trajs, const CostModel& cost,
                 const std::vector<double>& grid, int n_draws, const BaselineSet& baselines) {
  if (grid.empty()) throw ValidationError("sweep: empty grid");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw ValidationError("sweep: grid must be strictly increasing");
  }
  SweepCurve curve;
  curve.grid = grid;
  curve.records.resize(grid.size());
  // Grid points run one after another; each evaluate call parallelizes over units.
  for (std::size_t i = 0; i < grid.size(); ++i) {
    PolicyRule at = rule;
    at.target_return = grid[i];
    curve.records[i] = evaluate(trajs, at, cost, n_draws);
  }
  curve.label = curve.records.front().rule;
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (curve.records[i].mean > curve.records[best].mean) best = i;
  }
  curve.argmax_target = grid[best];

  const bool all_fail = std::all_of(trajs.begin(), trajs.end(), [](const Trajectory& t) { return t.ends_in_failure; });
  if (baselines.no_action) curve.baselines.push_back(evaluate(trajs, NoAction{}, cost, n_draws));
  if (baselines.oracle_threshold && all_fail) {
    curve.baselines.push_back(evaluate(trajs, OracleRul{*baselines.oracle_threshold}, cost, n_draws));
  }
  if (baselines.estimator) {
    curve.baselines.push_back(
        evaluate(trajs, EstimatedRul{baselines.estimator, baselines.estimator_threshold}, cost, n_draws));
  }
  return curve;
}

double correlation(std::span<const double> targets, std::span<const double> realized) {
  if (targets.size() != realized.size() || targets.size() < 2) {
    throw ValidationError("correlation: need two equal-length series of at least 2 values");
  }
  const double n = static_cast<double>(targets.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    mx += targets[i];
    my += realized[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    sxy += (targets[i] - mx) * (realized[i] - my);
    sxx += (targets[i] - mx) * (targets[i] - mx);
    syy += (realized[i] - my) * (realized[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw NumericError("correlation: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

void write_row(std::ostream& out, const EvalRecord& r) {
  out << csv_field(r.rule) << ',' << (r.target_return ? format_exact(*r.target_return) : "") << ','
      << format_exact(r.mean) << ',' << format_exact(r.std) << ',' << r.n_units << ',' << r.n_draws << '\n';
}

std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back() += c;
    }
  }
  if (quoted) throw ParseError(line_no, "unterminated quoted field");
  return fields;
}

}  // namespace

void write_curve_csv(std::ostream& out, std::span<const SweepCurve> curves) {
  out << "rule,target_return,mean,std,n_units,n_draws\n";
  for (const SweepCurve& c : curves) {
    for (const EvalRecord& r : c.records) write_row(out, r);
  }
  if (!curves.empty()) {
    for (const EvalRecord& r : curves.front().baselines) write_row(out, r);
  }
}

void emit_csv(std::span<const SweepCurve> curves, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_curve_csv(out, curves);
  if (!out) throw std::runtime_error("write failed: " + path);
}

void emit_csv(const SweepCurve& curve, const std::string& path) { emit_csv(std::span(&curve, 1), path); }

std::vector<CurveRow> read_curve_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError(1, "missing header");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "rule,target_return,mean,std,n_units,n_draws") throw ParseError(1, "unexpected header '" + line + "'");
  std::vector<CurveRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line, line_no);
    if (f.size() != 6) throw ParseError(line_no, "expected 6 fields");
    CurveRow r;
    r.rule = f[0];
    if (!f[1].empty()) r.target_return = parse_double(f[1], line_no);
    r.mean = parse_double(f[2], line_no);
    r.std = parse_double(f[3], line_no);
    r.n_units = static_cast<int>(parse_double(f[4], line_no));
    r.n_draws = static_cast<int>(parse_double(f[5], line_no));
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<CurveRow> load_curve_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_curve_csv(in);
}

std::vector<SweepCurve> curves_from_rows(const std::vector<CurveRow>& rows) {
  std::vector<SweepCurve> curves;
  std::vector<EvalRecord> baselines;
  for (const CurveRow& r : rows) {
    EvalRecord rec;
    rec.rule = r.rule;
    rec.target_return = r.target_return;
    rec.mean = r.mean;
    rec.std = r.std;
    rec.n_units = r.n_units;
    rec.n_draws = r.n_draws;
    if (!r.target_return) {
      baselines.push_back(std::move(rec));
      continue;
    }
    auto it = std::find_if(curves.begin(), curves.end(), [&](const SweepCurve& c) { return c.label == r.rule; });
    if (it == curves.end()) {
      curves.push_back(SweepCurve{r.rule, {}, {}, {}, 0.0});
      it = std::prev(curves.end());
    }
    it->grid.push_back(*r.target_return);
    it->records.push_back(std::move(rec));
  }
  for (SweepCurve& c : curves) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < c.records.size(); ++i) {
      if (c.records[i].mean > c.records[best].mean) best = i;
    }
    c.argmax_target = c.grid[best];
  }
  if (!curves.empty()) curves.front().baselines = std::move(baselines);
  return curves;
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string label_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", std::abs(v) < 1e-12 ? 0.0 : v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

double nice_step(double range) {
  const double raw = range / 6.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double f = raw / mag;
  return (f < 1.5 ? 1.0 : f < 3.5 ? 2.0 : f < 7.5 ? 5.0 : 10.0) * mag;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2"};

}  // namespace

std::string render_svg(std::span<const SweepCurve> curves, const SvgOptions& options) {
  if (curves.empty() || curves.front().records.empty()) throw ValidationError("render_svg: empty curve");
  const double left = 80.0, right = options.width - 220.0, top = 50.0, bottom = options.height - 60.0;

  double x_min = curves.front().grid.front(), x_max = x_min;
  double y_min = curves.front().records.front().mean, y_max = y_min;
  for (const SweepCurve& c : curves) {
    for (std::size_t i = 0; i < c.records.size(); ++i) {
      x_min = std::min(x_min, c.grid[i]);
      x_max = std::max(x_max, c.grid[i]);
      y_min = std::min(y_min, c.records[i].mean);
      y_max = std::max(y_max, c.records[i].mean);
    }
  }
  for (const EvalRecord& b : curves.front().baselines) {
    y_min = std::min(y_min, b.mean);
    y_max = std::max(y_max, b.mean);
  }
  if (x_max == x_min) {
    x_min -= 1.0;
    x_max += 1.0;
  }
  if (y_max == y_min) {
    y_min -= 1.0;
    y_max += 1.0;
  }
  const double y_pad = 0.05 * (y_max - y_min);
  y_min -= y_pad;
  y_max += y_pad;

  auto px = [&](double x) { return left + (x - x_min) / (x_max - x_min) * (right - left); };
  auto py = [&](double y) { return bottom - (y - y_min) / (y_max - y_min) * (bottom - top); };

  std::ostringstream s;
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << label_num(options.width) << ' '
    << label_num(options.height) << "\" width=\"" << label_num(options.width) << "\" height=\""
    << label_num(options.height) << "\" data-x-min=\"" << format_exact(x_min) << "\" data-x-max=\""
    << format_exact(x_max) << "\" data-y-min=\"" << format_exact(y_min) << "\" data-y-max=\"" << format_exact(y_max)
    << "\" data-plot-left=\"" << label_num(left) << "\" data-plot-right=\"" << label_num(right)
    << "\" data-plot-top=\"" << label_num(top) << "\" data-plot-bottom=\"" << label_num(bottom) << "\">\n";
  s << "<rect x=\"0\" y=\"0\" width=\"" << label_num(options.width) << "\" height=\"" << label_num(options.height)
    << "\" fill=\"white\"/>\n";
  s << "<text x=\"" << num((left + right) / 2) << "\" y=\"28\" text-anchor=\"middle\" font-family=\"sans-serif\" "
    << "font-size=\"18\">" << xml_escape(options.title) << "</text>\n";

  // Axes and ticks.
  s << "<g class=\"axes\" stroke=\"#333\" stroke-width=\"1\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<line x1=\"" << num(left) << "\" y1=\"" << num(bottom) << "\" x2=\"" << num(right) << "\" y2=\""
    << num(bottom) << "\"/>\n";
  s << "<line x1=\"" << num(left) << "\" y1=\"" << num(top) << "\" x2=\"" << num(left) << "\" y2=\"" << num(bottom)
    << "\"/>\n";
  const double xs = nice_step(x_max - x_min);
  for (double t = std::ceil(x_min / xs) * xs; t <= x_max + 1e-9 * xs; t += xs) {
    s << "<line class=\"xtick\" x1=\"" << num(px(t)) << "\" y1=\"" << num(bottom) << "\" x2=\"" << num(px(t))
      << "\" y2=\"" << num(bottom + 5) << "\"/>";
    s << "<text x=\"" << num(px(t)) << "\" y=\"" << num(bottom + 20) << "\" text-anchor=\"middle\" stroke=\"none\">"
      << label_num(t) << "</text>\n";
  }
  const double ys = nice_step(y_max - y_min);
  for (double t = std::ceil(y_min / ys) * ys; t <= y_max + 1e-9 * ys; t += ys) {
    s << "<line class=\"ytick\" x1=\"" << num(left - 5) << "\" y1=\"" << num(py(t)) << "\" x2=\"" << num(left)
      << "\" y2=\"" << num(py(t)) << "\"/>";
    s << "<line x1=\"" << num(left) << "\" y1=\"" << num(py(t)) << "\" x2=\"" << num(right) << "\" y2=\""
      << num(py(t)) << "\" stroke=\"#ddd\"/>";
    s << "<text x=\"" << num(left - 8) << "\" y=\"" << num(py(t) + 4) << "\" text-anchor=\"end\" stroke=\"none\">"
      << label_num(t) << "</text>\n";
  }
  s << "<text x=\"" << num((left + right) / 2) << "\" y=\"" << num(options.height - 15)
    << "\" text-anchor=\"middle\" stroke=\"none\">target return</text>\n";
  s << "<text x=\"20\" y=\"" << num((top + bottom) / 2) << "\" text-anchor=\"middle\" stroke=\"none\" "
    << "transform=\"rotate(-90 20 " << num((top + bottom) / 2) << ")\">mean realized return</text>\n";
  s << "</g>\n";

  std::size_t color = 0;
  double legend_y = top + 10;
  auto legend = [&](const std::string& name, const char* stroke, bool dashed) {
    s << "<line x1=\"" << num(right + 20) << "\" y1=\"" << num(legend_y) << "\" x2=\"" << num(right + 50)
      << "\" y2=\"" << num(legend_y) << "\" stroke=\"" << stroke << "\" stroke-width=\"2\""
      << (dashed ? " stroke-dasharray=\"6 4\"" : "") << "/>";
    s << "<text x=\"" << num(right + 56) << "\" y=\"" << num(legend_y + 4)
      << "\" font-family=\"sans-serif\" font-size=\"12\">" << xml_escape(name) << "</text>\n";
    legend_y += 20;
  };
  s << "<g class=\"legend\">\n";
  for (const SweepCurve& c : curves) legend(c.label, kPalette[color++ % std::size(kPalette)], false);
  for (const EvalRecord& b : curves.front().baselines) legend(b.rule, kPalette[color++ % std::size(kPalette)], true);
  s << "</g>\n";

  color = 0;
  for (const SweepCurve& c : curves) {
    s << "<polyline class=\"curve\" data-rule=\"" << xml_escape(c.label) << "\" fill=\"none\" stroke=\""
      << kPalette[color++ % std::size(kPalette)] << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < c.records.size(); ++i) {
      s << (i ? " " : "") << num(px(c.grid[i])) << ',' << num(py(c.records[i].mean));
    }
    s << "\"/>\n";
  }
  for (const EvalRecord& b : curves.front().baselines) {
    s << "<line class=\"baseline\" data-rule=\"" << xml_escape(b.rule) << "\" x1=\"" << num(left) << "\" y1=\""
      << num(py(b.mean)) << "\" x2=\"" << num(right) << "\" y2=\"" << num(py(b.mean)) << "\" stroke=\""
      << kPalette[color++ % std::size(kPalette)] << "\" stroke-width=\"2\" stroke-dasharray=\"6 4\"/>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void emit_svg(std::span<const SweepCurve> curves, const std::string& path, const SvgOptions& options) {
  const std::string svg = render_svg(curves, options);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << svg;
  if (!out) throw std::runtime_error("write failed: " + path);
}

void emit_svg(const SweepCurve& curve, const std::string& path, const SvgOptions& options) {
  emit_svg(std::span(&curve, 1), path, options);
}

}  // namespace rulrl
