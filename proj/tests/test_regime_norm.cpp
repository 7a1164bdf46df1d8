#include <cmath>
#include <set>
#include <sstream>

#include "doctest.h"
#include "rulrl/regime_norm.hpp"
#include "support.hpp"

using namespace rulrl;

namespace {

CycleRecord cycle(int k, const SettingVector& settings, double sensor_value) {
  CycleRecord c;
  c.cycle_index = k;
  c.op_settings = settings;
  c.sensors.setConstant(sensor_value);
  return c;
}

/// Variance across regimes of the per-regime mean of `values`, grouped by `regime`.
double across_regime_variance(const std::vector<double>& values, const std::vector<int>& regime, int k) {
  std::vector<double> sum(static_cast<std::size_t>(k), 0.0), count(static_cast<std::size_t>(k), 0.0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum[static_cast<std::size_t>(regime[i])] += values[i];
    count[static_cast<std::size_t>(regime[i])] += 1.0;
  }
  std::vector<double> means;
  for (int r = 0; r < k; ++r) {
    if (count[static_cast<std::size_t>(r)] > 0) means.push_back(sum[static_cast<std::size_t>(r)] / count[static_cast<std::size_t>(r)]);
  }
  double m = 0.0;
  for (double v : means) m += v;
  m /= static_cast<double>(means.size());
  double var = 0.0;
  for (double v : means) var += (v - m) * (v - m);
  return var / static_cast<double>(means.size());
}

}  // namespace

TEST_SUITE("regime_norm") {
  TEST_CASE("k = 1 gives the global per-sensor means") {
    SynthConfig cfg;
    cfg.n_units = 4;
    cfg.seed = 2;
    const auto trajs = synth_generate(cfg);
    const RegimeNormalizer norm = fit_regimes(trajs, 1, 7);
    CHECK(norm.k() == 1);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(kNumSensors);
    double n = 0;
    for (const auto& t : trajs) {
      for (const auto& c : t.cycles) {
        sum += c.sensors;
        n += 1;
      }
    }
    for (int i = 0; i < kNumSensors; ++i) CHECK(norm.regime_sensor_means(0, i) == doctest::Approx(sum(i) / n).epsilon(1e-12));
  }

  TEST_CASE("two cycles at two settings with k = 2 are each their own regime") {
    Trajectory t{1, {cycle(1, SettingVector(0, 0, 0), 3.0), cycle(2, SettingVector(1, 1, 1), 8.0)}, true};
    const RegimeNormalizer norm = fit_regimes({t}, 2, 1);
    const int r0 = norm.assign(SettingVector(0, 0, 0));
    const int r1 = norm.assign(SettingVector(1, 1, 1));
    CHECK(r0 != r1);
    CHECK(norm.regime_sensor_means(r0, 0) == 3.0);
    CHECK(norm.regime_sensor_means(r1, 5) == 8.0);
    CHECK((norm.centroids.row(r1).transpose() - SettingVector(1, 1, 1)).norm() == 0.0);
    const Trajectory n = normalize(t, norm);
    for (const auto& c : n.cycles) CHECK((c.sensors.array() == 1.0).all());
  }

  TEST_CASE("fewer distinct settings than k is an error") {
    Trajectory t{1, {cycle(1, SettingVector(0, 0, 0), 3.0), cycle(2, SettingVector(0, 0, 0), 4.0)}, true};
    CHECK_THROWS_AS(fit_regimes({t}, 2, 1), ValidationError);
    CHECK_THROWS(fit_regimes({t}, 0, 1));
  }

  TEST_CASE("well-separated regimes: centroids recovered within the setting noise") {
    SynthConfig cfg;
    cfg.n_units = 10;
    cfg.setting_noise = 0.001;
    cfg.seed = 4;
    const SynthResult r = synth_generate_detailed(cfg);
    const RegimeNormalizer norm = fit_regimes(r.trajectories, 6, 3);
    for (int true_r = 0; true_r < 6; ++true_r) {
      const SettingVector center = r.regime_centers.row(true_r).transpose();
      const int got = norm.assign(center);
      CHECK((norm.centroids.row(got).transpose() - center).cwiseAbs().maxCoeff() < cfg.setting_noise);
    }
    // Every true regime maps to a distinct fitted regime.
    std::set<int> seen;
    for (int true_r = 0; true_r < 6; ++true_r) seen.insert(norm.assign(r.regime_centers.row(true_r).transpose()));
    CHECK(seen.size() == 6);
  }

  TEST_CASE("fit is deterministic given the seed") {
    SynthConfig cfg;
    cfg.n_units = 5;
    const auto trajs = synth_generate(cfg);
    CHECK(fit_regimes(trajs, 6, 9) == fit_regimes(trajs, 6, 9));
  }

  TEST_CASE("fixed points: value equal to regime mean and constant sensors map to 1") {
    std::vector<CycleRecord> cycles;
    for (int k = 1; k <= 12; ++k) {
      cycles.push_back(cycle(k, k % 2 ? SettingVector(0, 0, 0) : SettingVector(10, 0.5, 60), 42.0));
    }
    Trajectory t{1, cycles, true};
    const RegimeNormalizer norm = fit_regimes({t}, 2, 1);
    for (const auto& c : normalize(t, norm).cycles) CHECK((c.sensors.array() == 1.0).all());
  }

  TEST_CASE("multiplicative drift survives normalization as 1 + 0.001 k") {
    // sensor = offset(regime) * (1 + 0.001 * cycle)
    const SettingVector settings[3] = {SettingVector(0, 0, 100), SettingVector(20, 0.7, 100), SettingVector(42, 0.84, 40)};
    const double offsets[3] = {10.0, 500.0, 2000.0};
    std::vector<CycleRecord> cycles;
    for (int k = 1; k <= 90; ++k) {
      const int r = k % 3;
      CycleRecord c = cycle(k, settings[r], 0.0);
      c.sensors.setConstant(offsets[r] * (1.0 + 0.001 * k));
      cycles.push_back(c);
    }
    Trajectory t{1, cycles, true};
    const RegimeNormalizer norm = fit_regimes({t}, 3, 5);
    const Trajectory n = normalize(t, norm);
    // Per-regime mean of (1 + 0.001 k) over that regime's cycles.
    double mean_factor[3] = {0, 0, 0}, count[3] = {0, 0, 0};
    for (int k = 1; k <= 90; ++k) {
      mean_factor[k % 3] += 1.0 + 0.001 * k;
      count[k % 3] += 1;
    }
    for (int k = 1; k <= 90; ++k) {
      const double expected = (1.0 + 0.001 * k) / (mean_factor[k % 3] / count[k % 3]);
      CHECK(n.cycles[static_cast<std::size_t>(k - 1)].sensors(0) == doctest::Approx(expected).epsilon(1e-12));
      CHECK(std::abs(n.cycles[static_cast<std::size_t>(k - 1)].sensors(0) - (1.0 + 0.001 * (k - 45.5))) < 5e-3);
    }
  }

  TEST_CASE("normalization removes almost all across-regime variance on noiseless data") {
    SynthConfig cfg;
    cfg.n_units = 20;
    cfg.noise_scale = 0.0;
    cfg.seed = 8;
    const SynthResult r = synth_generate_detailed(cfg);
    const RegimeNormalizer norm = fit_regimes(r.trajectories, 6, 1);
    const auto normalized = normalize(r.trajectories, norm);
    for (int sensor : {0, 3, 10}) {
      std::vector<double> raw, scaled;
      std::vector<int> regime;
      for (std::size_t u = 0; u < r.trajectories.size(); ++u) {
        for (std::size_t k = 0; k < r.trajectories[u].size(); ++k) {
          // Fixed health level: the early-life band where health is still near its start.
          if (r.units[u].initial_health - r.units[u].health[k] > 0.05) continue;
          raw.push_back(r.trajectories[u].cycles[k].sensors(sensor));
          scaled.push_back(normalized[u].cycles[k].sensors(sensor));
          regime.push_back(r.units[u].regimes[k]);
        }
      }
      const double before = across_regime_variance(raw, regime, 6);
      const double after = across_regime_variance(scaled, regime, 6);
      CHECK(after < 0.01 * before);
    }
  }

  TEST_CASE("normalize preserves length, indices and settings; assignment is nearest with low-index ties") {
    SynthConfig cfg;
    cfg.n_units = 3;
    const auto trajs = synth_generate(cfg);
    const RegimeNormalizer norm = fit_regimes(trajs, 6, 2);
    for (const auto& t : trajs) {
      const Trajectory n = normalize(t, norm);
      REQUIRE(n.size() == t.size());
      CHECK(n.unit_id == t.unit_id);
      for (std::size_t k = 0; k < t.size(); ++k) {
        CHECK(n.cycles[k].cycle_index == t.cycles[k].cycle_index);
        CHECK(n.cycles[k].op_settings == t.cycles[k].op_settings);
      }
    }
    RegimeNormalizer tie;
    tie.centroids.resize(2, 3);
    tie.centroids << 0, 0, 0, 2, 0, 0;
    tie.regime_sensor_means = Eigen::MatrixXd::Ones(2, kNumSensors);
    CHECK(tie.assign(SettingVector(1, 0, 0)) == 0);
    CHECK(tie.assign(SettingVector(1.5, 0, 0)) == 1);
  }

  TEST_CASE("near-zero regime mean is reported with sensor and regime") {
    RegimeNormalizer norm;
    norm.centroids = Eigen::MatrixXd::Zero(1, 3);
    norm.regime_sensor_means = Eigen::MatrixXd::Ones(1, kNumSensors);
    norm.regime_sensor_means(0, 6) = 1e-12;
    try {
      normalize(test::make_traj(1, 2), norm);
      FAIL("expected a numeric error");
    } catch (const NumericError& e) {
      const std::string what = e.what();
      CHECK(what.find("sensor 7") != std::string::npos);
      CHECK(what.find("regime 0") != std::string::npos);
    }
  }

  TEST_CASE("normalizer text round-trips exactly") {
    SynthConfig cfg;
    cfg.n_units = 3;
    const RegimeNormalizer norm = fit_regimes(synth_generate(cfg), 6, 2);
    std::stringstream s;
    write_normalizer(s, norm);
    CHECK(read_normalizer(s) == norm);
    const auto dir = test::scratch_dir("regime_norm");
    save_normalizer((dir / "n.txt").string(), norm);
    CHECK(load_normalizer((dir / "n.txt").string()) == norm);
    std::stringstream bad("2\n0 0 0\n");
    CHECK_THROWS(read_normalizer(bad));
  }

  TEST_CASE("kmeans re-seeds an empty cluster instead of returning duplicates") {
    Eigen::MatrixXd pts(5, 3);
    pts << 0, 0, 0, 0, 0, 0.001, 0, 0, 0.002, 50, 50, 50, 100, 100, 100;
    const Eigen::MatrixXd c = kmeans(pts, 3, 1);
    for (int a = 0; a < 3; ++a)
      for (int b = a + 1; b < 3; ++b) CHECK((c.row(a) - c.row(b)).norm() > 0.0);
  }
}
