#pragma once

#include "reid/core.hpp"
#include "reid/kernels.hpp"
#include "reid/sparse_coding.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace reid {

namespace detail {

inline void require_same_dimension(Eigen::Index a, Eigen::Index b) {
  if (a != b) {
    fail(ErrorKind::invalid_argument,
         "dimension mismatch: " + std::to_string(a) + " vs " + std::to_string(b));
  }
}

inline std::vector<double> column_norms(MatrixCRef m) {
  std::vector<double> norms(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    norms[static_cast<std::size_t>(j)] = kernels::norm(m.col(j).data(), static_cast<std::size_t>(m.rows()));
  }
  return norms;
}

inline void require_nonzero(std::span<const double> norms, const char* what) {
  for (double n : norms) {
    if (!(n > 0.0)) fail(ErrorKind::numerical, std::string(what) + ": zero-norm vector, cosine undefined");
  }
}

inline double cosine(const double* a, double norm_a, const double* b, double norm_b, std::size_t f) {
  return kernels::dot(a, b, f) / (norm_a * norm_b);
}

inline double cosine_distance(const double* a, double norm_a, const double* b, double norm_b, std::size_t f) {
  return std::max(0.0, 1.0 - cosine(a, norm_a, b, norm_b, f));
}

/// min_i ||q - r_i||
inline double med_column(const double* q, MatrixCRef track) {
  const auto f = static_cast<std::size_t>(track.rows());
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < track.cols(); ++i) {
    best = std::min(best, kernels::squared_distance(q, track.col(i).data(), f));
  }
  return std::sqrt(best);
}

/// min_i (1 - cos(q, r_i)) with column norms supplied.
inline double mcd_column(const double* q, double q_norm, MatrixCRef track, std::span<const double> track_norms) {
  const auto f = static_cast<std::size_t>(track.rows());
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < track.cols(); ++i) {
    best = std::min(best, cosine_distance(q, q_norm, track.col(i).data(), track_norms[static_cast<std::size_t>(i)], f));
  }
  return best;
}

}  // namespace detail

// ----------------------------------------------------------------------------
// Image-to-track distances
// ----------------------------------------------------------------------------

inline double med_i2t(VectorCRef query, MatrixCRef track) {
  detail::require_same_dimension(query.size(), track.rows());
  return detail::med_column(query.data(), track);
}

inline double mcd_i2t(VectorCRef query, MatrixCRef track) {
  detail::require_same_dimension(query.size(), track.rows());
  const double q_norm = kernels::norm(query.data(), static_cast<std::size_t>(query.size()));
  const auto norms = detail::column_norms(track);
  detail::require_nonzero(std::span<const double>(&q_norm, 1), "mcd query");
  detail::require_nonzero(norms, "mcd gallery track");
  return detail::mcd_column(query.data(), q_norm, track, norms);
}

// ----------------------------------------------------------------------------
// Track-to-track: distance sets and aggregation
// ----------------------------------------------------------------------------

/// Per-query-image image-to-track distances (MED or MCD only).
inline std::vector<double> distance_set(MatrixCRef query, MatrixCRef track, Family family) {
  detail::require_same_dimension(query.rows(), track.rows());
  std::vector<double> out(static_cast<std::size_t>(query.cols()));
  if (family == Family::med) {
    for (Eigen::Index j = 0; j < query.cols(); ++j) out[static_cast<std::size_t>(j)] = detail::med_column(query.col(j).data(), track);
  } else if (family == Family::mcd) {
    const auto q_norms = detail::column_norms(query);
    const auto r_norms = detail::column_norms(track);
    detail::require_nonzero(q_norms, "mcd query");
    detail::require_nonzero(r_norms, "mcd gallery track");
    for (Eigen::Index j = 0; j < query.cols(); ++j) {
      out[static_cast<std::size_t>(j)] = detail::mcd_column(query.col(j).data(), q_norms[static_cast<std::size_t>(j)], track, r_norms);
    }
  } else {
    fail(ErrorKind::invalid_argument, "distance sets exist only for med and mcd");
  }
  return out;
}

/// Reduces a distance set to one value. mean50/med50 keep the
/// ceil(n/2) smallest values; an even-count median averages the central pair.
inline double aggregate(std::span<const double> values, Aggregation aggregation) {
  if (values.empty()) fail(ErrorKind::invalid_argument, "cannot aggregate an empty distance set");
  if (aggregation == Aggregation::min) return *std::min_element(values.begin(), values.end());

  std::vector<double> v(values.begin(), values.end());
  std::size_t keep = v.size();
  switch (aggregation) {
    case Aggregation::mean50:
    case Aggregation::med50:
      keep = (v.size() + 1) / 2;
      std::sort(v.begin(), v.end());
      v.resize(keep);
      break;
    case Aggregation::mean:
    case Aggregation::median:
      std::sort(v.begin(), v.end());
      break;
    case Aggregation::not_applicable:
      if (v.size() == 1) return v.front();
      fail(ErrorKind::invalid_argument, "aggregation required for a multi-image distance set");
    case Aggregation::min:
      break;
  }
  if (aggregation == Aggregation::mean || aggregation == Aggregation::mean50) {
    double sum = 0.0;
    for (double x : v) sum += x;
    return sum / static_cast<double>(v.size());
  }
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

// ----------------------------------------------------------------------------
// Kernel distances
// ----------------------------------------------------------------------------

struct Kernel {
  enum class Type { rbf, cosine } type = Type::rbf;
  double gamma = 1.0;  // RBF only

  static Kernel rbf(double gamma) { return {Type::rbf, gamma}; }
  static Kernel cos() { return {Type::cosine, 0.0}; }
};

namespace detail {

inline double kernel_value(const Kernel& k, const double* a, double norm_a, const double* b, double norm_b, std::size_t f) {
  if (k.type == Kernel::Type::rbf) return std::exp(-k.gamma * kernels::squared_distance(a, b, f));
  return cosine(a, norm_a, b, norm_b, f);
}

/// sum_{i,j} k(a_i, b_j). Norms are only read for the cosine kernel.
inline double kernel_cross_sum(const Kernel& k, MatrixCRef a, std::span<const double> a_norms,
                               MatrixCRef b, std::span<const double> b_norms) {
  const auto f = static_cast<std::size_t>(a.rows());
  const bool cos = k.type == Kernel::Type::cosine;
  double total = 0.0;
  for (Eigen::Index i = 0; i < a.cols(); ++i) {
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      total += kernel_value(k, a.col(i).data(), cos ? a_norms[static_cast<std::size_t>(i)] : 0.0,
                            b.col(j).data(), cos ? b_norms[static_cast<std::size_t>(j)] : 0.0, f);
    }
  }
  return total;
}

/// sum_{i,j} k(a_i, a_j), using symmetry.
inline double kernel_self_sum(const Kernel& k, MatrixCRef a, std::span<const double> norms) {
  const auto f = static_cast<std::size_t>(a.rows());
  const bool cos = k.type == Kernel::Type::cosine;
  double diag = 0.0;
  double off = 0.0;
  for (Eigen::Index i = 0; i < a.cols(); ++i) {
    const double ni = cos ? norms[static_cast<std::size_t>(i)] : 0.0;
    diag += kernel_value(k, a.col(i).data(), ni, a.col(i).data(), ni, f);
    for (Eigen::Index j = i + 1; j < a.cols(); ++j) {
      off += kernel_value(k, a.col(i).data(), ni, a.col(j).data(), cos ? norms[static_cast<std::size_t>(j)] : 0.0, f);
    }
  }
  return diag + 2.0 * off;
}

inline double kernel_distance_from_sums(double self_q, double self_r, double cross) {
  return std::sqrt(std::max(0.0, self_q + self_r - 2.0 * cross));
}

}  // namespace detail

/// Set distance induced by a positive-definite kernel; returns D_k (the
/// square root of the three-sum expansion, clamped at 0 before the root).
inline double kernel_distance(MatrixCRef query, MatrixCRef track, const Kernel& kernel) {
  detail::require_same_dimension(query.rows(), track.rows());
  std::vector<double> q_norms, r_norms;
  if (kernel.type == Kernel::Type::cosine) {
    q_norms = detail::column_norms(query);
    r_norms = detail::column_norms(track);
    detail::require_nonzero(q_norms, "kcos query");
    detail::require_nonzero(r_norms, "kcos gallery track");
  } else if (!(kernel.gamma > 0.0)) {
    fail(ErrorKind::invalid_argument, "rbf kernel needs gamma > 0");
  }
  return detail::kernel_distance_from_sums(detail::kernel_self_sum(kernel, query, q_norms),
                                           detail::kernel_self_sum(kernel, track, r_norms),
                                           detail::kernel_cross_sum(kernel, query, q_norms, track, r_norms));
}

// ----------------------------------------------------------------------------
// Prepared operands
// ----------------------------------------------------------------------------

/// Per-track quantities that depend only on the track and the spec: column
/// norms, kernel self-sum, normalised dictionary. Both the single-pair entry
/// points and the batched gallery pass compute distances from these, so the
/// two agree bit for bit.
struct PreparedTrack {
  const FeatureMatrix* features = nullptr;  // not owned
  std::vector<double> norms;
  double kernel_self = 0.0;
  std::optional<SparseDictionary> dictionary;  // gallery side, RSCR
  FeatureMatrix unit;                          // query side, RSCR
};

enum class Side { query, gallery };

inline PreparedTrack prepare(const FeatureMatrix& features, const DistanceSpec& spec, Side side, std::size_t dimension) {
  PreparedTrack p;
  p.features = &features;
  switch (spec.family) {
    case Family::med:
      break;
    case Family::mcd:
      p.norms = detail::column_norms(features);
      detail::require_nonzero(p.norms, side == Side::query ? "mcd query" : "mcd gallery track");
      break;
    case Family::kcos:
      p.norms = detail::column_norms(features);
      detail::require_nonzero(p.norms, side == Side::query ? "kcos query" : "kcos gallery track");
      p.kernel_self = detail::kernel_self_sum(Kernel::cos(), features, p.norms);
      break;
    case Family::krbf:
      p.kernel_self = detail::kernel_self_sum(Kernel::rbf(spec.gamma_for(dimension)), features, p.norms);
      break;
    case Family::rscr:
      if (side == Side::gallery) p.dictionary.emplace(features);
      else p.unit = normalized_columns(features);
      break;
  }
  return p;
}

/// Distance between prepared operands. `scratch` holds the per-image
/// distance set for MED/MCD and is reused across calls.
inline double prepared_distance(const PreparedTrack& q, QueryKind kind, const PreparedTrack& r,
                                const DistanceSpec& spec, std::size_t dimension, std::vector<double>& scratch) {
  const FeatureMatrix& qf = *q.features;
  const FeatureMatrix& rf = *r.features;
  switch (spec.family) {
    case Family::med:
    case Family::mcd: {
      scratch.resize(static_cast<std::size_t>(qf.cols()));
      for (Eigen::Index j = 0; j < qf.cols(); ++j) {
        scratch[static_cast<std::size_t>(j)] =
            spec.family == Family::med ? detail::med_column(qf.col(j).data(), rf)
                                       : detail::mcd_column(qf.col(j).data(), q.norms[static_cast<std::size_t>(j)], rf, r.norms);
      }
      return aggregate(scratch, spec.aggregation);
    }
    case Family::kcos:
      return detail::kernel_distance_from_sums(q.kernel_self, r.kernel_self,
                                               detail::kernel_cross_sum(Kernel::cos(), qf, q.norms, rf, r.norms));
    case Family::krbf:
      return detail::kernel_distance_from_sums(
          q.kernel_self, r.kernel_self,
          detail::kernel_cross_sum(Kernel::rbf(spec.gamma_for(dimension)), qf, q.norms, rf, r.norms));
    case Family::rscr:
      if (kind == QueryKind::single_image) return unit_residual(*r.dictionary, q.unit.col(0), spec.alpha);
      return rscr_t2t_unit(*r.dictionary, q.unit, spec.alpha);
  }
  return 0.0;
}

/// Distance between a query and one gallery track under a full spec.
/// Single-image MED/MCD queries reduce to the image-to-track formulas; RSCR
/// returns the squared residual for single images and the Frobenius norm for
/// tracks.
inline double track_distance(const Query& query, const TrackFeatures& track, const DistanceSpec& spec) {
  check_query(query);
  check_spec(spec, query.kind);
  detail::require_same_dimension(query.features.rows(), track.features.rows());
  const std::size_t f = query.dimension();
  const PreparedTrack q = prepare(query.features, spec, Side::query, f);
  const PreparedTrack r = prepare(track.features, spec, Side::gallery, f);
  std::vector<double> scratch;
  return prepared_distance(q, query.kind, r, spec, f, scratch);
}

}  // namespace reid
