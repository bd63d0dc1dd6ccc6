#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace reid {

// ----------------------------------------------------------------------------
// Errors
// ----------------------------------------------------------------------------

enum class ErrorKind {
  invalid_argument,  // caller broke a precondition (dimensions, metric/query mismatch)
  data,              // malformed files or galleries
  numerical,         // zero norms, solver failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

// ----------------------------------------------------------------------------
// Features
// ----------------------------------------------------------------------------

/// Column-major f x N block of latent vectors, one column per image.
using FeatureMatrix = Eigen::MatrixXd;
using LatentVector = Eigen::VectorXd;

struct TrackFeatures {
  std::string track_id;
  std::string vehicle_id;
  std::string camera_id;
  FeatureMatrix features;

  std::size_t dimension() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t image_count() const { return static_cast<std::size_t>(features.cols()); }
};

/// Immutable, indexed collection of tracks. Construction only checks that the
/// gallery is non-empty; use validate_gallery() for the full invariant set.
class Gallery {
 public:
  explicit Gallery(std::vector<TrackFeatures> tracks) : tracks_(std::move(tracks)) {
    if (tracks_.empty()) fail(ErrorKind::data, "gallery is empty");
    index_.reserve(tracks_.size());
    for (std::size_t i = 0; i < tracks_.size(); ++i) {
      index_.try_emplace(tracks_[i].track_id, i);  // first occurrence wins
    }
  }

  std::span<const TrackFeatures> tracks() const { return tracks_; }
  const TrackFeatures& operator[](std::size_t i) const { return tracks_[i]; }
  std::size_t size() const { return tracks_.size(); }
  std::size_t dimension() const { return tracks_.front().dimension(); }

  std::optional<std::size_t> find(std::string_view track_id) const {
    auto it = index_.find(std::string(track_id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t total_images() const {
    std::size_t n = 0;
    for (const auto& t : tracks_) n += t.image_count();
    return n;
  }

 private:
  std::vector<TrackFeatures> tracks_;
  std::unordered_map<std::string, std::size_t> index_;
};

// ----------------------------------------------------------------------------
// Queries
// ----------------------------------------------------------------------------

enum class QueryKind { single_image, full_track };

struct Query {
  std::string id;
  QueryKind kind = QueryKind::full_track;
  FeatureMatrix features;
  std::optional<std::string> vehicle_id;
  std::optional<std::string> camera_id;
  std::optional<std::string> source_track_id;

  std::size_t dimension() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t image_count() const { return static_cast<std::size_t>(features.cols()); }

  static Query from_track(const TrackFeatures& track) {
    Query q;
    q.id = track.track_id;
    q.kind = QueryKind::full_track;
    q.features = track.features;
    q.vehicle_id = track.vehicle_id;
    q.camera_id = track.camera_id;
    q.source_track_id = track.track_id;
    return q;
  }

  static Query from_image(const TrackFeatures& track, std::size_t image) {
    if (image >= track.image_count()) {
      fail(ErrorKind::invalid_argument,
           "image index " + std::to_string(image) + " out of range for track '" +
               track.track_id + "' (" + std::to_string(track.image_count()) + " images)");
    }
    Query q;
    q.id = track.track_id + "#" + std::to_string(image);
    q.kind = QueryKind::single_image;
    q.features = track.features.col(static_cast<Eigen::Index>(image));
    q.vehicle_id = track.vehicle_id;
    q.camera_id = track.camera_id;
    q.source_track_id = track.track_id;
    return q;
  }
};

inline void check_query(const Query& q) {
  if (q.image_count() == 0) fail(ErrorKind::invalid_argument, "query '" + q.id + "' has no images");
  if (q.kind == QueryKind::single_image && q.image_count() != 1) {
    fail(ErrorKind::invalid_argument,
         "single-image query '" + q.id + "' carries " + std::to_string(q.image_count()) + " images");
  }
}

// ----------------------------------------------------------------------------
// Distance specification
// ----------------------------------------------------------------------------

enum class Family { med, mcd, rscr, krbf, kcos };
enum class Aggregation { min, mean, median, mean50, med50, not_applicable };

inline constexpr std::string_view to_string(Family f) {
  switch (f) {
    case Family::med: return "med";
    case Family::mcd: return "mcd";
    case Family::rscr: return "rscr";
    case Family::krbf: return "krbf";
    case Family::kcos: return "kcos";
  }
  return "?";
}

inline constexpr std::string_view to_string(Aggregation a) {
  switch (a) {
    case Aggregation::min: return "min";
    case Aggregation::mean: return "mean";
    case Aggregation::median: return "med";
    case Aggregation::mean50: return "mean50";
    case Aggregation::med50: return "med50";
    case Aggregation::not_applicable: return "n/a";
  }
  return "?";
}

inline std::optional<Family> parse_family(std::string_view s) {
  for (Family f : {Family::med, Family::mcd, Family::rscr, Family::krbf, Family::kcos}) {
    if (to_string(f) == s) return f;
  }
  return std::nullopt;
}

inline std::optional<Aggregation> parse_aggregation(std::string_view s) {
  for (Aggregation a : {Aggregation::min, Aggregation::mean, Aggregation::median,
                        Aggregation::mean50, Aggregation::med50}) {
    if (to_string(a) == s) return a;
  }
  return std::nullopt;
}

inline constexpr bool is_track_level(Family f) {
  return f == Family::rscr || f == Family::krbf || f == Family::kcos;
}

struct DistanceSpec {
  Family family = Family::mcd;
  Aggregation aggregation = Aggregation::min;
  double alpha = 1.0;               // L1 weight, RSCR only
  std::optional<double> gamma;      // RBF spread, KRBF only; unset means 1/f

  double gamma_for(std::size_t dimension) const {
    return gamma ? *gamma : 1.0 / static_cast<double>(dimension);
  }

  std::string label() const {
    std::string s(to_string(family));
    if (!is_track_level(family) && aggregation != Aggregation::not_applicable) {
      s = std::string(to_string(aggregation)) + s;
    }
    return s;
  }
};

/// Checks a DistanceSpec's own invariants and its consistency with a query kind.
inline void check_spec(const DistanceSpec& spec, QueryKind kind) {
  if (is_track_level(spec.family)) {
    if (spec.aggregation != Aggregation::not_applicable) {
      fail(ErrorKind::invalid_argument,
           std::string(to_string(spec.family)) + " takes no aggregation");
    }
  } else if (kind == QueryKind::full_track && spec.aggregation == Aggregation::not_applicable) {
    fail(ErrorKind::invalid_argument,
         std::string(to_string(spec.family)) + " on a full-track query needs an aggregation");
  }
  if (spec.family == Family::rscr && !(spec.alpha >= 0.0 && spec.alpha <= 1.0)) {
    fail(ErrorKind::invalid_argument, "alpha must lie in [0, 1]");
  }
  if (spec.family == Family::krbf && spec.gamma && !(*spec.gamma > 0.0 && std::isfinite(*spec.gamma))) {
    fail(ErrorKind::invalid_argument, "gamma must be positive");
  }
}

// ----------------------------------------------------------------------------
// Rankings
// ----------------------------------------------------------------------------

struct RankedEntry {
  std::size_t gallery_index;
  std::string track_id;
  double distance;
};

using RankedList = std::vector<RankedEntry>;

// ----------------------------------------------------------------------------
// Validation
// ----------------------------------------------------------------------------

struct Violation {
  std::string track_id;
  std::string rule;  // dimension_mismatch, empty_track, non_finite, negative_value, duplicate_track_id
  std::string detail;
};

struct ValidationOptions {
  bool allow_negative = false;
};

inline std::vector<Violation> validate_gallery(const Gallery& gallery, ValidationOptions opts = {}) {
  std::vector<Violation> out;
  const std::size_t f = gallery.dimension();
  std::unordered_map<std::string, std::size_t> seen;
  for (const auto& t : gallery.tracks()) {
    if (auto [it, fresh] = seen.try_emplace(t.track_id, 0); !fresh) {
      out.push_back({t.track_id, "duplicate_track_id", "track id appears more than once"});
    }
    if (t.dimension() == 0 || t.image_count() == 0) {
      out.push_back({t.track_id, "empty_track", "track has no feature values"});
      continue;
    }
    if (t.dimension() != f) {
      out.push_back({t.track_id, "dimension_mismatch",
                     "dimension " + std::to_string(t.dimension()) + ", gallery uses " + std::to_string(f)});
    }
    bool non_finite = false;
    bool negative = false;
    const double* p = t.features.data();
    for (Eigen::Index i = 0; i < t.features.size(); ++i) {
      if (!std::isfinite(p[i])) non_finite = true;
      else if (p[i] < 0.0) negative = true;
    }
    if (non_finite) out.push_back({t.track_id, "non_finite", "NaN or infinite feature value"});
    if (negative && !opts.allow_negative) {
      out.push_back({t.track_id, "negative_value", "negative feature value"});
    }
  }
  return out;
}

}  // namespace reid
