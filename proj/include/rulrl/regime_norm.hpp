#ifndef RULRL_REGIME_NORM_HPP
#define RULRL_REGIME_NORM_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rulrl/trajdata.hpp"

namespace rulrl {

/// Piecewise-constant regression of each sensor on the operating regime:
/// the expected sensor value is the mean over training cycles in the same
/// k-means cluster of operating settings.
struct RegimeNormalizer {
  Eigen::MatrixXd centroids;            // k x 3
  Eigen::MatrixXd regime_sensor_means;  // k x 21

  int k() const { return static_cast<int>(centroids.rows()); }

  /// Nearest centroid by Euclidean distance; ties go to the lowest index.
  int assign(const SettingVector& settings) const;

  bool operator==(const RegimeNormalizer&) const = default;
};

struct KMeansOptions {
  int max_iterations = 100;
  double tolerance = 1e-8;
};

/// Lloyd's algorithm with k-means++ seeding over the rows of `points`.
/// Returns k x dim centroids. A cluster left empty is re-seeded from the
/// point farthest from its current centroid.
Eigen::MatrixXd kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, KMeansOptions options = {});

RegimeNormalizer fit_regimes(const std::vector<Trajectory>& train, int k, std::uint64_t seed);

/// Sensor i becomes s_i / mean_i(regime); settings and cycle indices untouched.
Trajectory normalize(const Trajectory& traj, const RegimeNormalizer& norm);
std::vector<Trajectory> normalize(const std::vector<Trajectory>& trajs, const RegimeNormalizer& norm);

void write_normalizer(std::ostream& out, const RegimeNormalizer& norm);
RegimeNormalizer read_normalizer(std::istream& in);
void save_normalizer(const std::string& path, const RegimeNormalizer& norm);
RegimeNormalizer load_normalizer(const std::string& path);

}  // namespace rulrl

#endif  // RULRL_REGIME_NORM_HPP
