#ifndef RULRL_SWEEP_REPORT_HPP
#define RULRL_SWEEP_REPORT_HPP

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rulrl/simenv.hpp"

namespace rulrl {

struct SweepCurve {
  std::string label;
  std::vector<double> grid;
  std::vector<EvalRecord> records;
  std::vector<EvalRecord> baselines;
  double argmax_target = 0.0;

  const EvalRecord& best() const;
};

struct BaselineSet {
  bool no_action = true;
  /// Oracle threshold; only evaluated when every trajectory failed.
  std::optional<int> oracle_threshold = 10;
  const RulModel* estimator = nullptr;
  int estimator_threshold = 10;
};

/// `steps` evenly spaced targets over [0.5 * min_return, 1.5 * max_return]
/// (endpoints ordered so the grid increases).
std::vector<double> default_grid(double min_train_return, double max_train_return, int steps = 25);

/// Evaluate `rule` at every grid target, plus the baselines.
SweepCurve sweep(const PolicyRule& rule, const std::vector<Trajectory>& trajs, const CostModel& cost,
                 const std::vector<double>& grid, int n_draws = 1, const BaselineSet& baselines = {});

/// Pearson correlation coefficient.
double correlation(std::span<const double> targets, std::span<const double> realized);

/// rule,target_return,mean,std,n_units,n_draws. Rows for every curve's
/// grid points, then the first curve's baselines.
void write_curve_csv(std::ostream& out, std::span<const SweepCurve> curves);
void emit_csv(const SweepCurve& curve, const std::string& path);
void emit_csv(std::span<const SweepCurve> curves, const std::string& path);

struct CurveRow {
  std::string rule;
  std::optional<double> target_return;
  double mean = 0.0;
  double std = 0.0;
  int n_units = 0;
  int n_draws = 0;
};

std::vector<CurveRow> read_curve_csv(std::istream& in);
std::vector<CurveRow> load_curve_csv(const std::string& path);

/// Rebuild curves (one per policy rule name) and their baselines from CSV rows.
std::vector<SweepCurve> curves_from_rows(const std::vector<CurveRow>& rows);

struct SvgOptions {
  std::string title = "Average return vs. target return";
  double width = 960.0;
  double height = 540.0;
};

/// Line chart: one polyline per curve, dashed horizontal line per baseline.
std::string render_svg(std::span<const SweepCurve> curves, const SvgOptions& options = {});
void emit_svg(const SweepCurve& curve, const std::string& path, const SvgOptions& options = {});
void emit_svg(std::span<const SweepCurve> curves, const std::string& path, const SvgOptions& options = {});

}  // namespace rulrl

#endif  // RULRL_SWEEP_REPORT_HPP
