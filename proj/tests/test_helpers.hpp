#pragma once

#include "reid/core.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace testing_support {

inline Eigen::MatrixXd random_nonneg(std::mt19937_64& rng, Eigen::Index f, Eigen::Index n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd m(f, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < f; ++i) m(i, j) = u(rng);
  // Keep every column away from zero norm.
  for (Eigen::Index j = 0; j < n; ++j) m(static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(f)), j) += 0.1;
  return m;
}

inline Eigen::MatrixXd random_unit_columns(std::mt19937_64& rng, Eigen::Index f, Eigen::Index n) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd m(f, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < f; ++i) m(i, j) = g(rng);
    m.col(j).normalize();
  }
  return m;
}

inline reid::TrackFeatures make_track(std::string id, std::string vehicle, std::string camera, Eigen::MatrixXd m) {
  return reid::TrackFeatures{std::move(id), std::move(vehicle), std::move(camera), std::move(m)};
}

/// Matrix from a list of columns.
inline Eigen::MatrixXd cols(std::initializer_list<std::initializer_list<double>> columns) {
  const auto n = static_cast<Eigen::Index>(columns.size());
  const auto f = static_cast<Eigen::Index>(columns.begin()->size());
  Eigen::MatrixXd m(f, n);
  Eigen::Index j = 0;
  for (const auto& c : columns) {
    Eigen::Index i = 0;
    for (double v : c) m(i++, j) = v;
    ++j;
  }
  return m;
}

inline bool close_rel(double a, double b, double rel, double abs_floor = 1e-12) {
  return std::abs(a - b) <= std::max(abs_floor, rel * std::max(std::abs(a), std::abs(b)));
}

}  // namespace testing_support
