#include <cmath>

#include "doctest.h"
#include "rulrl/labeling.hpp"
#include "rulrl/regime_norm.hpp"
#include "rulrl/rul_estimator.hpp"
#include "support.hpp"

using namespace rulrl;

namespace {

/// Failing unit whose sensor 0 reads the true RUL; other sensors are constant.
Trajectory planted(int unit, int n) {
  Trajectory t = test::make_traj(unit, n);
  for (int k = 0; k < n; ++k) {
    t.cycles[static_cast<std::size_t>(k)].sensors.setConstant(1.0);
    t.cycles[static_cast<std::size_t>(k)].sensors(0) = n - 1 - k;
  }
  return t;
}

std::vector<Trajectory> normalized_synth(int units, std::uint64_t seed) {
  SynthConfig sc;
  sc.n_units = units;
  sc.seed = seed;
  return normalize(synth_generate(sc), fit_regimes(synth_generate(sc), 6, seed));
}

RulConfig small_config() {
  RulConfig c;
  c.window = 5;
  c.hidden = {32};
  c.sample_stride = 2;
  c.train.epochs = 40;
  c.train.seed = 4;
  return c;
}

}  // namespace

TEST_SUITE("rul_estimator") {
  TEST_CASE("features are left-padded windows ending at the current cycle") {
    const Trajectory t = test::make_traj(1, 4);
    const Eigen::MatrixXd x = rul_features(t, 3);
    REQUIRE(x.rows() == 4);
    REQUIRE(x.cols() == 3 * kNumSensors);
    CHECK(x.block(0, 0, 1, kNumSensors).transpose() == t.cycles[0].sensors);
    CHECK(x.block(0, 2 * kNumSensors, 1, kNumSensors).transpose() == t.cycles[0].sensors);
    CHECK(x.block(1, kNumSensors, 1, kNumSensors).transpose() == t.cycles[0].sensors);
    CHECK(x.block(1, 2 * kNumSensors, 1, kNumSensors).transpose() == t.cycles[1].sensors);
    CHECK(x.block(3, 0, 1, kNumSensors).transpose() == t.cycles[1].sensors);
    CHECK_THROWS_AS(rul_features(t, 0), ValidationError);
  }

  TEST_CASE("a planted linear RUL feature is recovered with R^2 > 0.99") {
    std::vector<Trajectory> train;
    for (int u = 1; u <= 20; ++u) train.push_back(planted(u, 40 + 3 * u));
    RulConfig c;
    c.window = 1;
    c.hidden = {};
    c.train.epochs = 200;
    c.train.learning_rate = 0.01;
    const RulModel m = train_rul(train, c);
    const Trajectory test = planted(99, 77);
    CHECK(nn::r_squared(predict_rul_raw(m, test), label_rul(test)) > 0.99);
  }

  TEST_CASE("one clamped, non-negative estimate per cycle") {
    const auto trajs = normalized_synth(6, 2);
    const RulModel m = train_rul(trajs, small_config());
    for (const Trajectory& t : trajs) {
      const auto raw = predict_rul_raw(m, t);
      const auto est = predict_rul(m, t);
      REQUIRE(est.size() == t.size());
      for (std::size_t k = 0; k < est.size(); ++k) {
        CHECK(est[k] >= 0.0);
        CHECK(est[k] == clamp_rul(raw[k]));
      }
    }
    CHECK(clamp_rul(-3.2) == 0.0);
    CHECK(clamp_rul(4.5) == 4.5);
  }

  TEST_CASE("estimates at cycle k do not depend on later cycles") {
    const auto trajs = normalized_synth(6, 2);
    const RulModel m = train_rul(trajs, small_config());
    Trajectory prefix = trajs[0];
    const auto full = predict_rul_raw(m, prefix);
    prefix.cycles.resize(prefix.cycles.size() / 2);
    const auto part = predict_rul_raw(m, prefix);
    for (std::size_t k = 0; k < part.size(); ++k) CHECK(part[k] == full[k]);
  }

  TEST_CASE("training is deterministic") {
    const auto trajs = normalized_synth(4, 3);
    CHECK(train_rul(trajs, small_config()).net == train_rul(trajs, small_config()).net);
  }

  TEST_CASE("held-out R^2 >= 0.5; error shrinks towards failure; training R^2 > 0") {
    const auto all = normalized_synth(40, 11);
    const std::vector<Trajectory> train(all.begin(), all.begin() + 30), test(all.begin() + 30, all.end());
    RulConfig c = small_config();
    c.sample_stride = 1;
    c.train.epochs = 100;
    const RulModel m = train_rul(train, c);
    std::vector<double> pred, truth;
    double first = 0.0, last = 0.0;
    for (const Trajectory& t : test) {
      const auto p = predict_rul(m, t);
      const auto y = label_rul(t);
      REQUIRE(p.size() >= 40);
      pred.insert(pred.end(), p.begin(), p.end());
      truth.insert(truth.end(), y.begin(), y.end());
      for (std::size_t k = 0; k < 20; ++k) {
        first += std::abs(p[k] - y[k]);
        last += std::abs(p[p.size() - 1 - k] - y[y.size() - 1 - k]);
      }
    }
    const double r2 = nn::r_squared(pred, truth);
    MESSAGE("held-out R^2 = " << r2 << ", mean abs error first/last 20 cycles = " << first / 200 << " / " << last / 200);
    CHECK(r2 >= 0.5);
    CHECK(last <= first);

    std::vector<double> train_pred, train_truth;
    for (const Trajectory& t : train) {
      const auto p = predict_rul(m, t);
      const auto y = label_rul(t);
      train_pred.insert(train_pred.end(), p.begin(), p.end());
      train_truth.insert(train_truth.end(), y.begin(), y.end());
    }
    CHECK(nn::r_squared(train_pred, train_truth) > 0.0);
  }

  TEST_CASE("a zero cap makes every label zero, so R^2 is undefined") {
    const auto trajs = normalized_synth(3, 5);
    RulConfig c = small_config();
    c.cap = 0.0;
    c.train.epochs = 2;
    const RulModel m = train_rul(trajs, c);
    CHECK(m.target_scale == 1.0);
    CHECK_THROWS_AS(nn::r_squared(predict_rul(m, trajs[0]), label_rul(trajs[0], 0.0)), NumericError);
  }

  TEST_CASE("invalid training input") {
    CHECK_THROWS_AS(train_rul({}, small_config()), ValidationError);
    CHECK_THROWS_AS(train_rul({test::make_traj(1, 10, false)}, small_config()), ValidationError);
    RulConfig c = small_config();
    c.sample_stride = 0;
    CHECK_THROWS_AS(train_rul({test::make_traj(1, 10)}, c), ValidationError);
  }

  TEST_CASE("model file round-trips") {
    const auto trajs = normalized_synth(3, 6);
    RulConfig c = small_config();
    c.cap = 125.0;
    c.train.epochs = 2;
    const RulModel m = train_rul(trajs, c);
    const auto dir = test::scratch_dir("rul");
    save_rul_model((dir / "rul.model").string(), m);
    const RulModel back = load_rul_model((dir / "rul.model").string());
    CHECK(back.net == m.net);
    CHECK(back.window == m.window);
    CHECK(back.target_scale == m.target_scale);
    CHECK(back.cap == m.cap);
    CHECK(predict_rul(back, trajs[1]) == predict_rul(m, trajs[1]));
  }
}
