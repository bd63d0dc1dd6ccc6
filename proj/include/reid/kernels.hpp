#pragma once

// Fixed-order reduction kernels. Every distance in the engine goes through
// these, so a given pair of columns produces the same bits no matter which
// code path, block size, or thread computed it.

#include <cmath>
#include <cstddef>

namespace reid::kernels {

inline constexpr std::size_t kLanes = 8;

inline double dot(const double* a, const double* b, std::size_t n) {
  double acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] += a[i + l] * b[i + l];
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

inline double squared_distance(const double* a, const double* b, std::size_t n) {
  double acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) {
      const double d = a[i + l] - b[i + l];
      acc[l] += d * d;
    }
  }
  double tail = 0.0;
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    tail += d * d;
  }
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

inline double norm(const double* a, std::size_t n) { return std::sqrt(dot(a, a, n)); }

}  // namespace reid::kernels
