#pragma once

#include <Eigen/Geometry>
#include "dyad/skeleton.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace testing {

inline dyad::Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  dyad::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

inline Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::Quaterniond q(g(rng), g(rng), g(rng), g(rng));
  return q.normalized().toRotationMatrix();
}

// Closed-form orthonormal DCT-II entry, evaluated directly.
inline double dct_entry(int k, int t, int n) {
  const double alpha = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
  return alpha * std::cos(std::numbers::pi * (2 * t + 1) * k / (2.0 * n));
}

inline double max_abs(const dyad::Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace testing
