#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "sti/volume.hpp"

namespace sti::test {

template <int C>
Volume<double, C> random_volume(const Grid& g, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Volume<double, C> v(g);
  for (Index i = 0; i < v.data().size(); ++i) v.data().data()[i] = normal(rng);
  return v;
}

inline Grid cube(Index n, double vs = 1.0) { return Grid({n, n, n}, {vs, vs, vs}); }

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("sti_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline double rel_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double denom = b.norm();
  return denom == 0.0 ? a.norm() : (a - b).norm() / denom;
}

}  // namespace sti::test
