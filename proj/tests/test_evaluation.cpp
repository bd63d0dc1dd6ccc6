#include "reid/evaluation.hpp"
#include "reid/feature_io.hpp"
#include "naive_reference.hpp"
#include "test_helpers.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <random>

using namespace reid;
using testing_support::cols;
using testing_support::make_track;
using testing_support::random_nonneg;

namespace {

Gallery small_gallery() {
  return Gallery({make_track("A", "v1", "c1", cols({{1, 0, 0}, {0.9, 0.1, 0}})),
                  make_track("B", "v2", "c1", cols({{0, 1, 0}})),
                  make_track("C", "v3", "c2", cols({{0, 0, 1}, {0, 0.2, 1}}))});
}

Gallery random_gallery(std::mt19937_64& rng, std::size_t n_tracks, Eigen::Index f) {
  std::vector<TrackFeatures> tracks;
  for (std::size_t i = 0; i < n_tracks; ++i) {
    tracks.push_back(make_track("t" + std::to_string(i), "v" + std::to_string(rng() % 3), "c" + std::to_string(rng() % 3),
                                random_nonneg(rng, f, static_cast<Eigen::Index>(1 + rng() % 6))));
  }
  return Gallery(std::move(tracks));
}

}  // namespace

// --- Ranking ----------------------------------------------------------------

TEST(RankGallery, ExactDuplicateRanksFirstWithZeroDistance) {
  const Gallery g = small_gallery();
  Query q;
  q.id = "external";
  q.kind = QueryKind::full_track;
  q.features = g[1].features;
  const auto ranked = rank_gallery(q, g, {Family::med, Aggregation::min}, {});
  ASSERT_EQ(ranked.size(), 3u);
  EXPECT_EQ(ranked[0].track_id, "B");
  EXPECT_EQ(ranked[0].distance, 0.0);
}

TEST(RankGallery, SelfTrackIsExcluded) {
  const Gallery g = small_gallery();
  const auto ranked = rank_gallery(Query::from_track(g[0]), g, {Family::mcd, Aggregation::mean}, {});
  ASSERT_EQ(ranked.size(), 2u);
  for (const auto& e : ranked) EXPECT_NE(e.track_id, "A");
}

TEST(RankGallery, SameCameraSameVehicleIsExcludedByDefaultOnly) {
  Gallery g({make_track("A", "v1", "c1", cols({{1, 0}})), make_track("A2", "v1", "c1", cols({{1, 0.1}})),
             make_track("B", "v1", "c2", cols({{1, 0.2}}))});
  const Query q = Query::from_track(g[0]);
  EXPECT_EQ(rank_gallery(q, g, {Family::med, Aggregation::min}, {}).size(), 1u);
  EXPECT_EQ(rank_gallery(q, g, {Family::med, Aggregation::min}, {true, false}).size(), 2u);
}

TEST(RankGallery, EmptyAfterExclusionIsAnError) {
  Gallery g({make_track("A", "v1", "c1", cols({{1, 0}}))});
  EXPECT_THROW(rank_gallery(Query::from_track(g[0]), g, {Family::med, Aggregation::min}, {}), Error);
}

TEST(RankGallery, TiesBreakByTrackId) {
  Gallery g({make_track("z", "v1", "c1", cols({{1, 0}})), make_track("a", "v2", "c1", cols({{1, 0}})),
             make_track("m", "v3", "c1", cols({{1, 0}}))});
  Query q;
  q.id = "q";
  q.features = cols({{0, 1}});
  const auto ranked = rank_gallery(q, g, {Family::med, Aggregation::min}, {});
  EXPECT_EQ(ranked[0].track_id, "a");
  EXPECT_EQ(ranked[1].track_id, "m");
  EXPECT_EQ(ranked[2].track_id, "z");
}

TEST(RankGallery, MatchesNaiveResort) {
  std::mt19937_64 rng(71);
  for (int trial = 0; trial < 20; ++trial) {
    const Gallery g = random_gallery(rng, 5, 6);
    const Query q = Query::from_track(g[0]);
    for (const DistanceSpec spec : {DistanceSpec{Family::med, Aggregation::mean50},
                                    DistanceSpec{Family::rscr, Aggregation::not_applicable},
                                    DistanceSpec{Family::krbf, Aggregation::not_applicable}}) {
      ExclusionPolicy keep_all{true, false};
      const auto ranked = rank_gallery(q, g, spec, keep_all);
      std::vector<double> d;
      std::vector<std::string> ids;
      for (std::size_t i = 1; i < g.size(); ++i) {
        d.push_back(naive::distance(q.features, q.kind, g[i].features, spec));
        ids.push_back(g[i].track_id);
      }
      const auto order = naive::rank(d, ids);
      ASSERT_EQ(ranked.size(), order.size());
      for (std::size_t k = 0; k < order.size(); ++k) EXPECT_EQ(ranked[k].track_id, ids[order[k]]);
    }
  }
}

TEST(RankGallery, MonotoneTransformLeavesRankingUnchanged) {
  std::mt19937_64 rng(73);
  const Gallery g = random_gallery(rng, 8, 5);
  const Query q = Query::from_track(g[2]);
  const GalleryIndex index(g, {Family::mcd, Aggregation::median});
  auto d = index.distances(q);
  const auto base = rank_from_distances(q, g, d, {});
  for (auto& x : d) x = std::exp(3.0 * x) + 1.0;
  const auto transformed = rank_from_distances(q, g, d, {});
  ASSERT_EQ(base.size(), transformed.size());
  for (std::size_t k = 0; k < base.size(); ++k) EXPECT_EQ(base[k].track_id, transformed[k].track_id);
}

TEST(RankGallery, BatchedDistancesEqualSinglePairDistancesBitwise) {
  std::mt19937_64 rng(79);
  const Gallery g = random_gallery(rng, 12, 9);
  for (const DistanceSpec spec : {DistanceSpec{Family::med, Aggregation::med50}, DistanceSpec{Family::mcd, Aggregation::min},
                                  DistanceSpec{Family::rscr, Aggregation::not_applicable},
                                  DistanceSpec{Family::kcos, Aggregation::not_applicable},
                                  DistanceSpec{Family::krbf, Aggregation::not_applicable}}) {
    const GalleryIndex index(g, spec);
    const auto queries = track_queries(g);
    std::vector<const Query*> batch;
    for (const auto& q : queries) batch.push_back(&q);
    std::vector<double> all(batch.size() * g.size());
    index.distances(batch, all);
    for (std::size_t i = 0; i < queries.size(); ++i) {
      for (std::size_t r = 0; r < g.size(); ++r) {
        EXPECT_EQ(all[i * g.size() + r], track_distance(queries[i], g[r], spec));
      }
    }
  }
}

// --- Scores -----------------------------------------------------------------

TEST(AveragePrecision, HandCases) {
  EXPECT_EQ(average_precision(std::vector<bool>{true, true, false, false}), 1.0);
  EXPECT_NEAR(*average_precision(std::vector<bool>{true, false, true, false}), 5.0 / 6.0, 1e-15);
  for (std::size_t r = 1; r <= 10; ++r) {
    std::vector<bool> rel(10, false);
    rel[r - 1] = true;
    EXPECT_NEAR(*average_precision(rel), 1.0 / static_cast<double>(r), 1e-15);
  }
  EXPECT_FALSE(average_precision(std::vector<bool>{false, false}).has_value());
}

TEST(AveragePrecision, RangeAndPerfection) {
  std::mt19937_64 rng(83);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<bool> rel(1 + rng() % 20);
    for (std::size_t i = 0; i < rel.size(); ++i) rel[i] = (rng() % 3) == 0;
    const auto ap = average_precision(rel);
    const auto n_gt = static_cast<std::size_t>(std::count(rel.begin(), rel.end(), true));
    if (n_gt == 0) {
      EXPECT_FALSE(ap);
      continue;
    }
    EXPECT_GT(*ap, 0.0);
    EXPECT_LE(*ap, 1.0);
    const bool top = std::all_of(rel.begin(), rel.begin() + static_cast<std::ptrdiff_t>(n_gt), [](bool b) { return b; });
    EXPECT_EQ(*ap == 1.0, top);
    EXPECT_NEAR(*ap, naive::average_precision(rel), 1e-14);
  }
}

TEST(Cmc, WorkedExamples) {
  const std::vector<std::size_t> perfect{1, 1, 1};
  for (double v : cmc_from_first_hits(perfect, 4)) EXPECT_EQ(v, 1.0);

  const std::vector<std::size_t> mixed{1, 3};
  EXPECT_EQ(cmc_from_first_hits(mixed, 5), (std::vector<double>{0.5, 0.5, 1, 1, 1}));
  EXPECT_THROW(cmc_from_first_hits(mixed, 0), Error);
  EXPECT_THROW(cmc_from_first_hits(std::vector<std::size_t>{}, 3), Error);
}

TEST(Cmc, DepthBeyondListLengthSaturates) {
  const Gallery g = small_gallery();
  const auto ranked = rank_gallery(Query::from_track(g[0]), g, {Family::med, Aggregation::min}, {});
  const std::vector<RankedList> lists{ranked};
  const std::vector<std::string> truth{"v3"};
  const auto curve = cmc(lists, truth, g, 10);
  for (std::size_t k = ranked.size(); k < curve.size(); ++k) EXPECT_EQ(curve[k], curve[ranked.size() - 1]);
}

TEST(Cmc, MonotoneOnFuzzedInputs) {
  std::mt19937_64 rng(89);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::size_t> hits(1 + rng() % 30);
    for (auto& h : hits) h = 1 + rng() % 25;
    const auto curve = cmc_from_first_hits(hits, 20);
    EXPECT_TRUE(std::is_sorted(curve.begin(), curve.end()));
    EXPECT_LE(curve[0], curve[4]);
  }
}

// --- Full protocol ----------------------------------------------------------

TEST(Evaluate, SingleQueryWithRelevantAtPositionTwo) {
  // Query q (v1, external) against 4 tracks: one v1 track placed second.
  Gallery g({make_track("a", "v2", "c1", cols({{1, 0}})), make_track("b", "v1", "c1", cols({{1, 0.5}})),
             make_track("c", "v3", "c1", cols({{1, 1}})), make_track("d", "v4", "c1", cols({{0, 1}}))});
  Query q;
  q.id = "q";
  q.kind = QueryKind::single_image;
  q.features = cols({{1, 0}});
  q.vehicle_id = "v1";
  const std::vector<Query> qs{q};
  const auto report = evaluate(g, qs, {Family::med, Aggregation::not_applicable}, {});
  EXPECT_EQ(report.map, 0.5);
  EXPECT_EQ(report.rank_1, 0.0);
  EXPECT_EQ(report.rank_5, 1.0);
  EXPECT_EQ(report.n_queries, 1u);
}

TEST(Evaluate, SkipsQueriesWithoutRelevantTracks) {
  const Gallery g = small_gallery();  // every vehicle appears once
  const auto qs = track_queries(g);
  EXPECT_THROW(evaluate(g, qs, {Family::med, Aggregation::min}, {}), Error);

  Gallery g2({make_track("A", "v1", "c1", cols({{1, 0}})), make_track("B", "v1", "c2", cols({{1, 0.1}})),
              make_track("C", "v2", "c1", cols({{0, 1}}))});
  const auto report = evaluate(g2, track_queries(g2), {Family::med, Aggregation::min}, {});
  EXPECT_EQ(report.n_queries, 2u);
  EXPECT_EQ(report.skipped_queries, (std::vector<std::string>{"C"}));
  EXPECT_EQ(report.map, 1.0);
}

TEST(Evaluate, RequiresGroundTruthAndSelfExclusion) {
  const Gallery g = small_gallery();
  Query q = Query::from_track(g[0]);
  q.vehicle_id.reset();
  EXPECT_THROW(evaluate(g, std::vector<Query>{q}, {Family::med, Aggregation::min}, {}), Error);
  EXPECT_THROW(evaluate(g, track_queries(g), {Family::med, Aggregation::min}, {false, true}), Error);
}

TEST(Evaluate, ReportInvariantsAndThreadIndependence) {
  SyntheticParams p;
  p.n_vehicles = 10;
  p.n_cameras = 3;
  p.dimension = 16;
  p.noise_sigma = 0.3;
  p.seed = 5;
  const Gallery g = generate_synthetic(p);
  const auto qs = track_queries(g);
  const DistanceSpec spec{Family::mcd, Aggregation::mean50};
  const auto one = evaluate(g, qs, spec, {}, {.threads = 1, .cmc_depth = 10});
  const auto four = evaluate(g, qs, spec, {}, {.threads = 4, .cmc_depth = 10});
  EXPECT_EQ(std::memcmp(&one.map, &four.map, sizeof(double)), 0);
  EXPECT_EQ(one.cmc, four.cmc);
  ASSERT_EQ(one.per_query_ap.size(), four.per_query_ap.size());
  double sum = 0;
  for (std::size_t i = 0; i < one.per_query_ap.size(); ++i) {
    EXPECT_EQ(one.per_query_ap[i].ap, four.per_query_ap[i].ap);
    sum += one.per_query_ap[i].ap;
  }
  EXPECT_NEAR(one.map, sum / static_cast<double>(one.per_query_ap.size()), 1e-12);
  EXPECT_TRUE(std::is_sorted(one.cmc.begin(), one.cmc.end()));
  EXPECT_LE(one.rank_1, one.rank_5);
  EXPECT_EQ(one.rank_1, one.cmc[0]);
}

TEST(Evaluate, GalleryOrderDoesNotMatter) {
  SyntheticParams p;
  p.n_vehicles = 8;
  p.n_cameras = 3;
  p.dimension = 12;
  p.noise_sigma = 0.4;
  p.seed = 9;
  const Gallery g = generate_synthetic(p);
  std::vector<TrackFeatures> shuffled(g.tracks().begin(), g.tracks().end());
  std::mt19937_64 rng(1);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const Gallery h(std::move(shuffled));
  const DistanceSpec spec{Family::med, Aggregation::mean};
  const auto a = evaluate(g, track_queries(g), spec, {});
  const auto b = evaluate(h, track_queries(g), spec, {});
  EXPECT_EQ(a.map, b.map);
  EXPECT_EQ(a.cmc, b.cmc);
  for (std::size_t i = 0; i < a.per_query_ap.size(); ++i) EXPECT_EQ(a.per_query_ap[i].ap, b.per_query_ap[i].ap);
}

TEST(Evaluate, DoesNotTouchGalleryFeatures) {
  SyntheticParams p;
  p.n_vehicles = 6;
  p.n_cameras = 2;
  p.dimension = 8;
  const Gallery g = generate_synthetic(p);
  const auto hash = [&] {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& t : g.tracks()) {
      const auto* bytes = reinterpret_cast<const unsigned char*>(t.features.data());
      for (std::size_t i = 0; i < static_cast<std::size_t>(t.features.size()) * sizeof(double); ++i) h = (h ^ bytes[i]) * 1099511628211ull;
    }
    return h;
  };
  const auto before = hash();
  for (auto fam : {Family::med, Family::mcd, Family::rscr, Family::krbf, Family::kcos}) {
    DistanceSpec spec{fam, is_track_level(fam) ? Aggregation::not_applicable : Aggregation::med50};
    evaluate(g, track_queries(g), spec, {}, {.threads = 3});
  }
  EXPECT_EQ(hash(), before);
}

TEST(Evaluate, BruteForcePipelineOnSmallGalleries) {
  std::mt19937_64 rng(97);
  for (int trial = 0; trial < 10; ++trial) {
    const Gallery g = random_gallery(rng, 2 + rng() % 9, 5);
    const auto qs = track_queries(g);
    const DistanceSpec spec{Family::mcd, Aggregation::mean};
    EvalReport report;
    try {
      report = evaluate(g, qs, spec, {});
    } catch (const Error&) {
      continue;  // nothing relevant anywhere
    }
    std::size_t next = 0;
    for (const auto& q : qs) {
      std::vector<double> d;
      std::vector<std::string> ids;
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (!admitted(q, g[i], {})) continue;
        d.push_back(naive::distance(q.features, q.kind, g[i].features, spec));
        ids.push_back(g[i].track_id);
        idx.push_back(i);
      }
      if (d.empty()) continue;
      const auto order = naive::rank(d, ids);
      std::vector<bool> rel;
      for (auto o : order) rel.push_back(g[idx[o]].vehicle_id == *q.vehicle_id);
      if (std::find(rel.begin(), rel.end(), true) == rel.end()) continue;
      ASSERT_LT(next, report.per_query_ap.size());
      EXPECT_EQ(report.per_query_ap[next].query_id, q.id);
      EXPECT_NEAR(report.per_query_ap[next].ap, naive::average_precision(rel), 1e-12);
      ++next;
    }
    EXPECT_EQ(next, report.per_query_ap.size());
  }
}

TEST(QuerySets, SelectionModes) {
  const Gallery g = small_gallery();
  const auto first = first_image_queries(g);
  ASSERT_EQ(first.size(), 3u);
  EXPECT_EQ(first[0].features, g[0].features.col(0));
  const auto r1 = random_image_queries(g, 42);
  const auto r2 = random_image_queries(g, 42);
  for (std::size_t i = 0; i < r1.size(); ++i) EXPECT_EQ(r1[i].id, r2[i].id);
  const std::vector<ImageSelection> sel{{"C", 1}, {"A", 0}};
  const auto picked = selected_image_queries(g, sel);
  EXPECT_EQ(picked[0].id, "C#1");
  EXPECT_EQ(picked[0].features, g[2].features.col(1));
  const std::vector<ImageSelection> bad{{"Q", 0}};
  EXPECT_THROW(selected_image_queries(g, bad), Error);
}
