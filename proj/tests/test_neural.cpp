#include <cmath>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "rulrl/neural.hpp"
#include "support.hpp"

using namespace rulrl;
using namespace rulrl::nn;

namespace {

/// Independent forward pass with explicit loops.
Eigen::VectorXd naive_forward(const MlpModel& m, const Eigen::VectorXd& x) {
  std::vector<double> a(x.data(), x.data() + x.size());
  for (int l = 0; l < m.num_layers(); ++l) {
    std::vector<double> z(static_cast<std::size_t>(m.weights[l].cols()));
    for (Eigen::Index j = 0; j < m.weights[l].cols(); ++j) {
      double s = m.biases[l](j);
      for (Eigen::Index i = 0; i < m.weights[l].rows(); ++i) s += a[static_cast<std::size_t>(i)] * m.weights[l](i, j);
      z[static_cast<std::size_t>(j)] = (l + 1 < m.num_layers() && s < 0.0) ? 0.0 : s;
    }
    a = std::move(z);
  }
  return Eigen::Map<Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
}

TrainingSet<double> random_classification(int n, int d, std::uint64_t seed) {
  Rng rng(seed);
  TrainingSet<double> s;
  s.inputs.resize(n, d);
  s.targets.resize(n, 1);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) s.inputs(i, j) = uniform(rng, -1.0, 1.0);
    s.targets(i, 0) = static_cast<double>(rng() % 2);
  }
  return s;
}

TrainConfig quick(int epochs, std::uint64_t seed = 1) {
  TrainConfig c;
  c.epochs = epochs;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_SUITE("neural") {
  TEST_CASE("Glorot init: shapes, bounds, zero biases, determinism") {
    const MlpModel m = mlp_init({7, 100, 2}, OutputHead::Logits, 42);
    REQUIRE(m.num_layers() == 2);
    CHECK(m.weights[0].rows() == 7);
    CHECK(m.weights[0].cols() == 100);
    CHECK(m.weights[1].rows() == 100);
    CHECK(m.weights[1].cols() == 2);
    CHECK(m.num_parameters() == 7 * 100 + 100 + 100 * 2 + 2);
    CHECK(m.biases[0].isZero(0.0));
    CHECK(m.biases[1].isZero(0.0));
    CHECK(m.weights[0].cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 107.0));
    CHECK(m.weights[1].cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 102.0));
    CHECK(m == mlp_init({7, 100, 2}, OutputHead::Logits, 42));
    CHECK_FALSE(m == mlp_init({7, 100, 2}, OutputHead::Logits, 43));
    CHECK_THROWS_AS(mlp_init({3}, OutputHead::Logits, 1), ValidationError);
    CHECK_THROWS_AS(mlp_init({3, 0, 2}, OutputHead::Logits, 1), ValidationError);
  }

  TEST_CASE("zero network outputs zero; identity network passes inputs through") {
    MlpModel z = mlp_init({3, 5, 2}, OutputHead::Linear, 1);
    for (auto& w : z.weights) w.setZero();
    CHECK(forward(z, Eigen::VectorXd::Constant(3, 7.0)).isZero(0.0));

    MlpModel id = mlp_init({3, 3}, OutputHead::Linear, 1);
    id.weights[0].setIdentity();
    const Eigen::Vector3d x(1.5, -2.0, 0.25);
    CHECK(forward(id, Eigen::VectorXd(x)) == Eigen::VectorXd(x));
  }

  TEST_CASE("forward pass matches an explicit-loop oracle") {
    const MlpModel m = mlp_init({6, 9, 4, 3}, OutputHead::Logits, 5);
    Rng rng(9);
    Eigen::MatrixXd batch(20, 6);
    for (Eigen::Index i = 0; i < batch.size(); ++i) batch.data()[i] = uniform(rng, -2.0, 2.0);
    const Eigen::MatrixXd out = forward_batch(m, batch);
    for (Eigen::Index r = 0; r < batch.rows(); ++r) {
      const Eigen::VectorXd expected = naive_forward(m, batch.row(r).transpose());
      CHECK((out.row(r).transpose() - expected).cwiseAbs().maxCoeff() <= 1e-12);
    }
    CHECK_THROWS_AS(forward_batch(m, Eigen::MatrixXd(2, 5)), ValidationError);
  }

  TEST_CASE("float instantiation agrees with double") {
    const MlpModel m = mlp_init({4, 8, 2}, OutputHead::Logits, 3);
    Mlp<float> f = mlp_init<float>({4, 8, 2}, OutputHead::Logits, 3);
    Eigen::MatrixXd x = Eigen::MatrixXd::Constant(1, 4, 0.5);
    const Eigen::MatrixXf xf = x.cast<float>();
    CHECK((forward_batch(f, xf).cast<double>() - forward_batch(m, x)).cwiseAbs().maxCoeff() < 1e-5);
  }

  TEST_CASE("softmax rows sum to one and are shift invariant") {
    Eigen::MatrixXd logits(3, 2);
    logits << 0, 0, 1000, -1000, -3, 4;
    const Eigen::MatrixXd p = softmax_rows(logits);
    for (Eigen::Index r = 0; r < 3; ++r) CHECK(std::abs(p.row(r).sum() - 1.0) < 1e-15);
    CHECK(p(0, 0) == 0.5);
    CHECK(p(1, 0) == 1.0);
    const Eigen::MatrixXd shifted = softmax_rows(Eigen::MatrixXd(logits.array() + 123.0));
    CHECK((shifted - p).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("backprop matches central differences for both losses") {
    MlpModel cls = mlp_init({5, 7, 6, 2}, OutputHead::Logits, 11);
    for (auto& b : cls.biases) b.setConstant(0.05);  // keep ReLUs away from the kink
    const auto data = random_classification(16, 5, 3);
    CHECK(grad_check(cls, data, Loss::CrossEntropy) < 1e-4);

    TrainingSet<double> weighted = data;
    weighted.weights = Eigen::VectorXd::LinSpaced(16, 0.5, 3.0);
    CHECK(grad_check(cls, weighted, Loss::CrossEntropy) < 1e-4);

    MlpModel reg = mlp_init({5, 8, 3}, OutputHead::Linear, 12);
    for (auto& b : reg.biases) b.setConstant(0.05);
    TrainingSet<double> r;
    r.inputs = data.inputs;
    r.targets = Eigen::MatrixXd::Random(16, 3);
    CHECK(grad_check(reg, r, Loss::SquaredError) < 1e-4);
  }

  TEST_CASE("extended-precision copies agree and tighten the gradient check") {
    MlpModel m = mlp_init({5, 7, 2}, OutputHead::Logits, 21);
    const auto data = random_classification(12, 5, 4);
    fit_standardization(m, data.inputs);
    const Mlp<long double> wide = m.cast<long double>();
    const TrainingSet<long double> wide_data = data.cast<long double>();
    CHECK(wide.cast<double>() == m);
    const Eigen::MatrixXd narrow_out = forward_batch(m, data.inputs);
    const Eigen::MatrixXd wide_out = forward_batch(wide, wide_data.inputs).cast<double>();
    CHECK((narrow_out - wide_out).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(grad_check(wide, wide_data, Loss::CrossEntropy) < 1e-6);
  }

  TEST_CASE("output bias gradient has the closed form mean(p - onehot)") {
    const MlpModel m = mlp_init({4, 6, 2}, OutputHead::Logits, 2);
    const auto data = random_classification(10, 4, 8);
    Gradients<double> g;
    loss_and_gradient(m, data, Loss::CrossEntropy, g);
    const Eigen::MatrixXd p = softmax_rows(forward_batch(m, data.inputs));
    Eigen::Vector2d expected = Eigen::Vector2d::Zero();
    for (Eigen::Index i = 0; i < 10; ++i) {
      expected += p.row(i).transpose() / 10.0;
      expected(static_cast<Eigen::Index>(data.targets(i, 0))) -= 0.1;
    }
    CHECK((g.biases[1] - expected).cwiseAbs().maxCoeff() < 1e-10);
  }

  TEST_CASE("single linear layer squared-error gradient is (2/n) X^T (XW + b - Y)") {
    MlpModel m = mlp_init({3, 1}, OutputHead::Linear, 4);
    TrainingSet<double> d;
    d.inputs = Eigen::MatrixXd::Random(8, 3);
    d.targets = Eigen::MatrixXd::Random(8, 1);
    Gradients<double> g;
    const double loss = loss_and_gradient(m, d, Loss::SquaredError, g);
    const Eigen::MatrixXd resid = (d.inputs * m.weights[0]).array() - d.targets.array();
    CHECK(std::abs(loss - resid.squaredNorm() / 8.0) < 1e-12);
    CHECK((g.weights[0] - 2.0 / 8.0 * d.inputs.transpose() * resid).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs(g.biases[0](0) - 2.0 / 8.0 * resid.sum()) < 1e-12);
  }

  TEST_CASE("scaling all sample weights changes nothing") {
    const MlpModel m = mlp_init({3, 4, 2}, OutputHead::Logits, 6);
    auto a = random_classification(12, 3, 1);
    auto b = a;
    a.weights = Eigen::VectorXd::LinSpaced(12, 1.0, 2.0);
    b.weights = 7.0 * a.weights;
    CHECK(std::abs(batch_loss(m, a, Loss::CrossEntropy) - batch_loss(m, b, Loss::CrossEntropy)) < 1e-12);
  }

  TEST_CASE("Adam with zero gradients leaves parameters unchanged") {
    MlpModel m = mlp_init({3, 4, 2}, OutputHead::Logits, 6);
    const MlpModel before = m;
    Adam<double> adam(m, TrainConfig{});
    const auto zero = Gradients<double>::zeros_like(m);
    for (int i = 0; i < 5; ++i) adam.step(m, zero);
    CHECK(m == before);
    CHECK(adam.steps() == 5);
  }

  TEST_CASE("first Adam step moves each parameter by lr against the gradient sign") {
    MlpModel m = mlp_init({2, 1}, OutputHead::Linear, 6);
    const MlpModel before = m;
    Gradients<double> g = Gradients<double>::zeros_like(m);
    g.weights[0] << 3.0, -0.5;
    g.biases[0] << 2.0;
    TrainConfig c;
    c.learning_rate = 0.01;
    Adam<double> adam(m, c);
    adam.step(m, g);
    CHECK(std::abs(m.weights[0](0, 0) - (before.weights[0](0, 0) - 0.01)) < 1e-9);
    CHECK(std::abs(m.weights[0](1, 0) - (before.weights[0](1, 0) + 0.01)) < 1e-9);
    CHECK(std::abs(m.biases[0](0) + 0.01) < 1e-9);
  }

  TEST_CASE("separable toy set reaches training accuracy 1") {
    TrainingSet<double> d;
    d.inputs.resize(40, 2);
    d.targets.resize(40, 1);
    Rng rng(5);
    for (int i = 0; i < 40; ++i) {
      const double x = uniform(rng, -1.0, 1.0), y = uniform(rng, -1.0, 1.0);
      d.inputs.row(i) << (x > 0 ? x + 0.5 : x - 0.5), y;
      d.targets(i, 0) = x > 0 ? 1.0 : 0.0;
    }
    const auto res = train(mlp_init({2, 16, 2}, OutputHead::Logits, 3), d, quick(200), Loss::CrossEntropy);
    const Eigen::MatrixXd out = forward_batch(res.model, d.inputs);
    int correct = 0;
    for (int i = 0; i < 40; ++i) correct += (out(i, 1) > out(i, 0)) == (d.targets(i, 0) == 1.0);
    CHECK(correct == 40);
    CHECK(res.epoch_losses.back() < res.epoch_losses.front());
  }

  TEST_CASE("regression fits y = 2x + 1") {
    TrainingSet<double> d;
    d.inputs = Eigen::VectorXd::LinSpaced(100, -1.0, 1.0);
    d.targets = (2.0 * d.inputs.array() + 1.0).matrix();
    TrainConfig c = quick(300);
    c.learning_rate = 0.01;
    const auto res = train(mlp_init({1, 1}, OutputHead::Linear, 3), d, c, Loss::SquaredError);
    CHECK(batch_loss(res.model, d, Loss::SquaredError) < 1e-3);
  }

  TEST_CASE("zero learning rate keeps parameters and epoch loss constant") {
    const auto d = random_classification(50, 3, 2);
    TrainConfig c = quick(3);
    c.learning_rate = 0.0;
    c.standardize = false;
    const MlpModel init = mlp_init({3, 5, 2}, OutputHead::Logits, 7);
    const auto res = train(init, d, c, Loss::CrossEntropy);
    CHECK(res.model == init);
    REQUIRE(res.epoch_losses.size() == 3);
    CHECK(std::abs(res.epoch_losses[0] - res.epoch_losses[2]) < 1e-12);
    CHECK(std::abs(res.epoch_losses[0] - batch_loss(init, d, Loss::CrossEntropy)) < 1e-12);
  }

  TEST_CASE("training is deterministic given the seed") {
    const auto d = random_classification(100, 4, 2);
    const auto a = train(mlp_init({4, 8, 2}, OutputHead::Logits, 1), d, quick(5, 9), Loss::CrossEntropy);
    const auto b = train(mlp_init({4, 8, 2}, OutputHead::Logits, 1), d, quick(5, 9), Loss::CrossEntropy);
    CHECK(a.model == b.model);
    CHECK(a.epoch_losses == b.epoch_losses);
  }

  TEST_CASE("standardization stores column mean and population std; constant columns get scale 1") {
    const auto d = [] {
      TrainingSet<double> s;
      s.inputs.resize(4, 2);
      s.inputs << 1, 5, 2, 5, 3, 5, 4, 5;
      s.targets = Eigen::MatrixXd::Zero(4, 1);
      return s;
    }();
    const auto res = train(mlp_init({2, 2}, OutputHead::Logits, 1), d, quick(0), Loss::CrossEntropy);
    CHECK(res.model.input_mean(0) == 2.5);
    CHECK(res.model.input_mean(1) == 5.0);
    CHECK(std::abs(res.model.input_scale(0) - std::sqrt(1.25)) < 1e-15);
    CHECK(res.model.input_scale(1) == 1.0);
  }

  TEST_CASE("training rejects bad inputs and reports divergence") {
    auto d = random_classification(10, 2, 1);
    CHECK_THROWS_AS(train(mlp_init({2, 2}, OutputHead::Linear, 1), d, quick(1), Loss::CrossEntropy), ValidationError);
    d.targets(0, 0) = 2.0;
    CHECK_THROWS_AS(train(mlp_init({2, 2}, OutputHead::Logits, 1), d, quick(1), Loss::CrossEntropy), ValidationError);
    d.targets(0, 0) = 0.0;
    TrainConfig bad = quick(1);
    bad.beta1 = 1.0;
    CHECK_THROWS_AS(train(mlp_init({2, 2}, OutputHead::Logits, 1), d, bad, Loss::CrossEntropy), ValidationError);

    d.inputs(3, 1) = std::numeric_limits<double>::quiet_NaN();
    TrainConfig c = quick(1);
    c.standardize = false;
    std::string message;
    try {
      train(mlp_init({2, 2}, OutputHead::Logits, 1), d, c, Loss::CrossEntropy);
    } catch (const NumericError& e) {
      message = e.what();
    }
    CHECK(message.find("non-finite loss at epoch 0") != std::string::npos);
  }

  TEST_CASE("r_squared") {
    const std::vector<double> y{1, 2, 3, 4};
    CHECK(r_squared(y, y) == 1.0);
    CHECK(r_squared(std::vector<double>(4, 2.5), y) == 0.0);
    // Residuals (0.5, -0.5, 0.5, -0.5): SS_res = 1, SS_tot = 5.
    CHECK(std::abs(r_squared(std::vector<double>{0.5, 2.5, 2.5, 4.5}, y) - 0.8) < 1e-15);
    CHECK_THROWS_AS(r_squared(y, std::vector<double>(4, 1.0)), NumericError);
    CHECK_THROWS_AS(r_squared(std::vector<double>{1}, y), ValidationError);
  }

  TEST_CASE("model files round-trip exactly") {
    auto res = train(mlp_init({3, 6, 2}, OutputHead::Logits, 4), random_classification(30, 3, 4), quick(2),
                     Loss::CrossEntropy);
    ModelFile f{res.model, "policy", {{"window", "5"}}};
    std::stringstream ss;
    write_model(ss, f);
    const ModelFile back = read_model(ss);
    CHECK(back.model == f.model);
    CHECK(back.role == "policy");
    CHECK(back.meta.at("window") == "5");

    const auto dir = test::scratch_dir("neural");
    save_model((dir / "m.txt").string(), f);
    CHECK(load_model((dir / "m.txt").string()).model == f.model);

    std::stringstream bad("not-a-model 1\n");
    CHECK_THROWS_AS(read_model(bad), ParseError);
    std::string text = ss.str();
    std::stringstream truncated(text.substr(0, text.size() / 2));
    CHECK_THROWS(read_model(truncated));
  }
}
