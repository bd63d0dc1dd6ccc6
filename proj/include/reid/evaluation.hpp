#pragma once

#include "reid/core.hpp"
#include "reid/metrics.hpp"
#include "reid/parallel.hpp"

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace reid {

struct ExclusionPolicy {
  bool exclude_self_track = true;
  bool exclude_same_camera_same_vehicle = true;
};

inline bool admitted(const Query& q, const TrackFeatures& t, const ExclusionPolicy& policy) {
  if (policy.exclude_self_track && q.source_track_id && *q.source_track_id == t.track_id) return false;
  if (policy.exclude_same_camera_same_vehicle && q.vehicle_id && q.camera_id &&
      *q.vehicle_id == t.vehicle_id && *q.camera_id == t.camera_id) {
    return false;
  }
  return true;
}

// ----------------------------------------------------------------------------
// Batched distances against a whole gallery
// ----------------------------------------------------------------------------

/// Gallery-side precomputation for one DistanceSpec. Immutable after
/// construction and shared by all workers.
class GalleryIndex {
 public:
  // Queries processed together against each gallery track; the block is
  // sized so a block of VeRi-sized query tracks stays cache-resident while
  // the gallery streams past once.
  static constexpr std::size_t kQueryBlock = 8;

  GalleryIndex(const Gallery& gallery, const DistanceSpec& spec)
      : gallery_(&gallery), spec_(spec), dimension_(gallery.dimension()) {
    prepared_.reserve(gallery.size());
    for (const auto& t : gallery.tracks()) {
      if (t.dimension() != dimension_) {
        fail(ErrorKind::data, "track '" + t.track_id + "' has dimension " + std::to_string(t.dimension()) +
                                  ", gallery uses " + std::to_string(dimension_));
      }
      prepared_.push_back(prepare(t.features, spec_, Side::gallery, dimension_));
    }
  }

  const Gallery& gallery() const { return *gallery_; }
  const DistanceSpec& spec() const { return spec_; }
  std::size_t dimension() const { return dimension_; }

  /// Distances from each query to every gallery track, written row-major into
  /// `out` (queries.size() x gallery.size()).
  void distances(std::span<const Query* const> queries, std::span<double> out) const {
    const std::size_t n = gallery_->size();
    std::vector<PreparedTrack> prepared_queries;
    prepared_queries.reserve(queries.size());
    for (const Query* q : queries) {
      check_query(*q);
      check_spec(spec_, q->kind);
      if (q->dimension() != dimension_) {
        fail(ErrorKind::invalid_argument, "query '" + q->id + "' has dimension " + std::to_string(q->dimension()) +
                                              ", gallery uses " + std::to_string(dimension_));
      }
      prepared_queries.push_back(prepare(q->features, spec_, Side::query, dimension_));
    }
    std::vector<double> scratch;
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t i = 0; i < queries.size(); ++i) {
        out[i * n + r] = prepared_distance(prepared_queries[i], queries[i]->kind, prepared_[r], spec_, dimension_, scratch);
      }
    }
  }

  std::vector<double> distances(const Query& query) const {
    std::vector<double> out(gallery_->size());
    const Query* q = &query;
    distances(std::span<const Query* const>(&q, 1), out);
    return out;
  }

 private:
  const Gallery* gallery_;
  DistanceSpec spec_;
  std::size_t dimension_;
  std::vector<PreparedTrack> prepared_;
};

// ----------------------------------------------------------------------------
// Ranking
// ----------------------------------------------------------------------------

/// Sorts admitted tracks by ascending distance, ties by ascending track id.
inline RankedList rank_from_distances(const Query& query, const Gallery& gallery, std::span<const double> distances,
                                      const ExclusionPolicy& policy) {
  RankedList ranked;
  ranked.reserve(gallery.size());
  for (std::size_t i = 0; i < gallery.size(); ++i) {
    if (admitted(query, gallery[i], policy)) ranked.push_back({i, gallery[i].track_id, distances[i]});
  }
  if (ranked.empty()) fail(ErrorKind::data, "query '" + query.id + "': no gallery track left after exclusion");
  std::sort(ranked.begin(), ranked.end(), [](const RankedEntry& a, const RankedEntry& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.track_id < b.track_id;
  });
  return ranked;
}

inline RankedList rank_gallery(const Query& query, const GalleryIndex& index, const ExclusionPolicy& policy) {
  return rank_from_distances(query, index.gallery(), index.distances(query), policy);
}

inline RankedList rank_gallery(const Query& query, const Gallery& gallery, const DistanceSpec& spec,
                               const ExclusionPolicy& policy) {
  return rank_gallery(query, GalleryIndex(gallery, spec), policy);
}

// ----------------------------------------------------------------------------
// Scores
// ----------------------------------------------------------------------------

/// AP over a relevance vector in rank order:
///   AP = (1/N_gt) * sum_k rel(k) * hits(1..k) / k
/// Returns nullopt when nothing is relevant.
inline std::optional<double> average_precision(const std::vector<bool>& relevant) {
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t k = 0; k < relevant.size(); ++k) {
    if (!relevant[k]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  if (hits == 0) return std::nullopt;
  return sum / static_cast<double>(hits);
}

inline std::vector<bool> relevance(const RankedList& ranked, std::string_view vehicle_id, const Gallery& gallery) {
  std::vector<bool> rel(ranked.size());
  for (std::size_t k = 0; k < ranked.size(); ++k) rel[k] = gallery[ranked[k].gallery_index].vehicle_id == vehicle_id;
  return rel;
}

inline std::optional<double> average_precision(const RankedList& ranked, std::string_view vehicle_id,
                                               const Gallery& gallery) {
  return average_precision(relevance(ranked, vehicle_id, gallery));
}

/// 1-based position of the first relevant entry, if any.
inline std::optional<std::size_t> first_hit(const RankedList& ranked, std::string_view vehicle_id, const Gallery& gallery) {
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    if (gallery[ranked[k].gallery_index].vehicle_id == vehicle_id) return k + 1;
  }
  return std::nullopt;
}

/// CMC curve of length `depth` from per-query first-hit positions (1-based).
inline std::vector<double> cmc_from_first_hits(std::span<const std::size_t> first_hits, std::size_t depth) {
  if (depth == 0) fail(ErrorKind::invalid_argument, "CMC depth must be >= 1");
  if (first_hits.empty()) fail(ErrorKind::invalid_argument, "CMC over an empty query set");
  std::vector<std::size_t> counts(depth, 0);
  for (std::size_t pos : first_hits) {
    if (pos >= 1 && pos <= depth) ++counts[pos - 1];
  }
  std::vector<double> curve(depth);
  std::size_t running = 0;
  for (std::size_t k = 0; k < depth; ++k) {
    running += counts[k];
    curve[k] = static_cast<double>(running) / static_cast<double>(first_hits.size());
  }
  return curve;
}

/// CMC over ranked lists with their ground-truth vehicles. Queries without
/// any relevant entry are left out, matching evaluate().
inline std::vector<double> cmc(std::span<const RankedList> ranked, std::span<const std::string> truth,
                               const Gallery& gallery, std::size_t depth) {
  if (ranked.size() != truth.size()) fail(ErrorKind::invalid_argument, "CMC: one ground truth per ranked list");
  std::vector<std::size_t> hits;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (auto h = first_hit(ranked[i], truth[i], gallery)) hits.push_back(*h);
  }
  return cmc_from_first_hits(hits, depth);
}

// ----------------------------------------------------------------------------
// Full protocol
// ----------------------------------------------------------------------------

struct QueryAp {
  std::string query_id;
  double ap;
};

struct EvalReport {
  double map = 0.0;
  double rank_1 = 0.0;
  double rank_5 = 0.0;
  std::vector<double> cmc;  // cmc[k-1] = rank-k precision
  std::vector<QueryAp> per_query_ap;
  std::vector<std::string> skipped_queries;
  std::size_t n_queries = 0;  // scored queries
};

struct EvalOptions {
  std::size_t threads = 1;
  std::size_t cmc_depth = 20;
};

inline EvalReport evaluate(const GalleryIndex& index, std::span<const Query> queries, const ExclusionPolicy& policy,
                           const EvalOptions& options = {}) {
  const Gallery& gallery = index.gallery();
  if (queries.empty()) fail(ErrorKind::invalid_argument, "no queries to evaluate");
  for (const auto& q : queries) {
    if (!q.vehicle_id) fail(ErrorKind::invalid_argument, "query '" + q.id + "' has no ground-truth vehicle id");
    if (q.source_track_id && gallery.find(*q.source_track_id) && !policy.exclude_self_track) {
      fail(ErrorKind::invalid_argument, "query '" + q.id + "' comes from the gallery; its own track must be excluded");
    }
  }

  struct Outcome {
    std::optional<double> ap;
    std::optional<std::size_t> first;
  };
  std::vector<Outcome> outcomes(queries.size());
  const std::size_t block = GalleryIndex::kQueryBlock;
  const std::size_t n_blocks = (queries.size() + block - 1) / block;
  const std::size_t n = gallery.size();

  parallel_for(n_blocks, options.threads, [&](std::size_t b) {
    const std::size_t lo = b * block;
    const std::size_t hi = std::min(queries.size(), lo + block);
    std::vector<const Query*> batch;
    for (std::size_t i = lo; i < hi; ++i) batch.push_back(&queries[i]);
    std::vector<double> dist(batch.size() * n);
    index.distances(batch, dist);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const Query& q = *batch[i];
      const RankedList ranked = rank_from_distances(q, gallery, std::span<const double>(dist).subspan(i * n, n), policy);
      outcomes[lo + i] = {average_precision(ranked, *q.vehicle_id, gallery), first_hit(ranked, *q.vehicle_id, gallery)};
    }
  });

  EvalReport report;
  std::vector<std::size_t> firsts;
  double sum = 0.0;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (!outcomes[i].ap) {
      report.skipped_queries.push_back(queries[i].id);
      continue;
    }
    report.per_query_ap.push_back({queries[i].id, *outcomes[i].ap});
    sum += *outcomes[i].ap;
    firsts.push_back(*outcomes[i].first);
  }
  report.n_queries = report.per_query_ap.size();
  if (report.n_queries == 0) fail(ErrorKind::data, "every query was skipped: no relevant gallery tracks");
  report.map = sum / static_cast<double>(report.n_queries);
  report.cmc = cmc_from_first_hits(firsts, options.cmc_depth);
  const auto rank_at = [&](std::size_t k) {
    std::size_t c = 0;
    for (std::size_t p : firsts) c += p <= k ? 1 : 0;
    return static_cast<double>(c) / static_cast<double>(firsts.size());
  };
  report.rank_1 = rank_at(1);
  report.rank_5 = rank_at(5);
  return report;
}

inline EvalReport evaluate(const Gallery& gallery, std::span<const Query> queries, const DistanceSpec& spec,
                           const ExclusionPolicy& policy, const EvalOptions& options = {}) {
  return evaluate(GalleryIndex(gallery, spec), queries, policy, options);
}

// ----------------------------------------------------------------------------
// Query sets drawn from a gallery
// ----------------------------------------------------------------------------

/// One full-track query per gallery track.
inline std::vector<Query> track_queries(const Gallery& gallery) {
  std::vector<Query> out;
  out.reserve(gallery.size());
  for (const auto& t : gallery.tracks()) out.push_back(Query::from_track(t));
  return out;
}

/// One single-image query per gallery track, the first image of each.
inline std::vector<Query> first_image_queries(const Gallery& gallery) {
  std::vector<Query> out;
  out.reserve(gallery.size());
  for (const auto& t : gallery.tracks()) out.push_back(Query::from_image(t, 0));
  return out;
}

/// One single-image query per gallery track, chosen uniformly with a fixed seed.
inline std::vector<Query> random_image_queries(const Gallery& gallery, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Query> out;
  out.reserve(gallery.size());
  for (const auto& t : gallery.tracks()) out.push_back(Query::from_image(t, static_cast<std::size_t>(rng() % t.image_count())));
  return out;
}

struct ImageSelection {
  std::string track_id;
  std::size_t image_index = 0;
};

/// Single-image queries from an explicit (track id, image index) list.
inline std::vector<Query> selected_image_queries(const Gallery& gallery, std::span<const ImageSelection> selection) {
  std::vector<Query> out;
  out.reserve(selection.size());
  for (const auto& s : selection) {
    const auto idx = gallery.find(s.track_id);
    if (!idx) fail(ErrorKind::data, "query selection names unknown track '" + s.track_id + "'");
    out.push_back(Query::from_image(gallery[*idx], s.image_index));
  }
  return out;
}

}  // namespace reid
