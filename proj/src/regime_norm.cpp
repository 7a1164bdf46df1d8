#include "rulrl/regime_norm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace rulrl {

namespace {

int nearest_row(const Eigen::MatrixXd& centroids, const Eigen::RowVectorXd& point, double* best_distance = nullptr) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index r = 0; r < centroids.rows(); ++r) {
    const double d = (centroids.row(r) - point).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(r);
    }
  }
  if (best_distance) *best_distance = best_d;
  return best;
}

Eigen::Index count_distinct_rows(const Eigen::MatrixXd& points) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(points.rows()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Eigen::Index>(i);
  auto less = [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index j = 0; j < points.cols(); ++j) {
      if (points(a, j) != points(b, j)) return points(a, j) < points(b, j);
    }
    return false;
  };
  std::sort(order.begin(), order.end(), less);
  Eigen::Index distinct = order.empty() ? 0 : 1;
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (less(order[i - 1], order[i])) ++distinct;
  }
  return distinct;
}

}  // namespace

int RegimeNormalizer::assign(const SettingVector& settings) const {
  return nearest_row(centroids, settings.transpose());
}

Eigen::MatrixXd kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, KMeansOptions options) {
  if (k < 1) throw ValidationError("kmeans: k must be >= 1");
  const Eigen::Index n = points.rows();
  if (count_distinct_rows(points) < k) {
    throw ValidationError("kmeans: fewer distinct points than k = " + std::to_string(k));
  }

  Rng rng(seed);
  Eigen::MatrixXd centroids(k, points.cols());
  // k-means++ seeding.
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centroids.row(0) = points.row(first(rng));
  Eigen::VectorXd d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2(i) = (points.row(i) - centroids.row(0)).squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    double target = uniform(rng, 0.0, total);
    Eigen::Index chosen = n - 1;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (d2(i) <= 0.0) continue;
      target -= d2(i);
      if (target <= 0.0) {
        chosen = i;
        break;
      }
    }
    while (d2(chosen) <= 0.0) --chosen;  // guard the tail against rounding
    centroids.row(c) = points.row(chosen);
    for (Eigen::Index i = 0; i < n; ++i) {
      d2(i) = std::min(d2(i), (points.row(i) - centroids.row(c)).squaredNorm());
    }
  }

  std::vector<int> label(static_cast<std::size_t>(n), 0);
  Eigen::VectorXd dist(n);
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    for (Eigen::Index i = 0; i < n; ++i) {
      label[static_cast<std::size_t>(i)] = nearest_row(centroids, points.row(i), &dist(i));
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(label[static_cast<std::size_t>(i)]) += points.row(i);
      counts(label[static_cast<std::size_t>(i)]) += 1.0;
    }
    Eigen::MatrixXd updated(k, points.cols());
    for (int c = 0; c < k; ++c) {
      if (counts(c) > 0.0) {
        updated.row(c) = sums.row(c) / counts(c);
      } else {
        Eigen::Index far = 0;
        dist.maxCoeff(&far);
        updated.row(c) = points.row(far);
        dist(far) = 0.0;
      }
    }
    const double movement = (updated - centroids).rowwise().norm().maxCoeff();
    centroids = std::move(updated);
    if (movement <= options.tolerance) break;
  }
  return centroids;
}

RegimeNormalizer fit_regimes(const std::vector<Trajectory>& train, int k, std::uint64_t seed) {
  Eigen::Index n = 0;
  for (const Trajectory& t : train) n += static_cast<Eigen::Index>(t.size());
  Eigen::MatrixXd settings(n, kNumSettings);
  Eigen::MatrixXd sensors(n, kNumSensors);
  Eigen::Index row = 0;
  for (const Trajectory& t : train) {
    for (const CycleRecord& c : t.cycles) {
      settings.row(row) = c.op_settings.transpose();
      sensors.row(row) = c.sensors.transpose();
      ++row;
    }
  }

  RegimeNormalizer norm;
  norm.centroids = kmeans(settings, k, seed);
  norm.regime_sensor_means = Eigen::MatrixXd::Zero(k, kNumSensors);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int r = nearest_row(norm.centroids, settings.row(i));
    norm.regime_sensor_means.row(r) += sensors.row(i);
    counts(r) += 1.0;
  }
  for (int r = 0; r < k; ++r) {
    if (counts(r) > 0.0) norm.regime_sensor_means.row(r) /= counts(r);
  }
  return norm;
}

Trajectory normalize(const Trajectory& traj, const RegimeNormalizer& norm) {
  Trajectory out = traj;
  for (CycleRecord& c : out.cycles) {
    const int r = norm.assign(c.op_settings);
    for (int i = 0; i < kNumSensors; ++i) {
      const double expected = norm.regime_sensor_means(r, i);
      if (!(std::abs(expected) >= 1e-9)) {
        throw NumericError("normalize: regime mean of sensor " + std::to_string(i + 1) + " in regime " +
                           std::to_string(r) + " is zero");
      }
      c.sensors(i) /= expected;
    }
  }
  return out;
}

std::vector<Trajectory> normalize(const std::vector<Trajectory>& trajs, const RegimeNormalizer& norm) {
  std::vector<Trajectory> out(trajs.size());
  parallel_for(trajs.size(), [&](std::size_t i) { out[i] = normalize(trajs[i], norm); });
  return out;
}

void write_normalizer(std::ostream& out, const RegimeNormalizer& norm) {
  out << norm.k() << '\n';
  for (const Eigen::MatrixXd* m : {&norm.centroids, &norm.regime_sensor_means}) {
    for (Eigen::Index r = 0; r < m->rows(); ++r) {
      for (Eigen::Index j = 0; j < m->cols(); ++j) {
        if (j) out << ' ';
        out << format_exact((*m)(r, j));
      }
      out << '\n';
    }
  }
}

RegimeNormalizer read_normalizer(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto read_row = [&](Eigen::Index cols) {
    if (!std::getline(in, line)) throw ParseError(line_no + 1, "normalizer truncated");
    ++line_no;
    std::istringstream fields(line);
    Eigen::RowVectorXd row(cols);
    std::string token;
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (!(fields >> token)) throw ParseError(line_no, "expected " + std::to_string(cols) + " values");
      row(j) = parse_double(token, line_no);
    }
    return row;
  };
  const int k = static_cast<int>(read_row(1)(0));
  if (k < 1) throw ParseError(1, "regime count must be >= 1");
  RegimeNormalizer norm;
  norm.centroids.resize(k, kNumSettings);
  norm.regime_sensor_means.resize(k, kNumSensors);
  for (int r = 0; r < k; ++r) norm.centroids.row(r) = read_row(kNumSettings);
  for (int r = 0; r < k; ++r) norm.regime_sensor_means.row(r) = read_row(kNumSensors);
  return norm;
}

void save_normalizer(const std::string& path, const RegimeNormalizer& norm) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_normalizer(out, norm);
}

RegimeNormalizer load_normalizer(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_normalizer(in);
}

}  // namespace rulrl
