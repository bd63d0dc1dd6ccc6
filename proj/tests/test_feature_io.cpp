#include "reid/feature_io.hpp"
#include "test_helpers.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include <unistd.h>

using namespace reid;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("reid_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

FeatureRows sequential_rows(Eigen::Index rows, Eigen::Index f) {
  FeatureRows m(rows, f);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 0.25f * static_cast<float>(i);
  return m;
}

std::string bytes_of(const fs::path& p) { return detail::read_file(p); }

}  // namespace

TEST(FeatureFile, RoundTripsExactly) {
  const auto rows = sequential_rows(3, 4);
  const auto bytes = encode_features(rows);
  EXPECT_EQ(bytes.size(), 20u + 3 * 4 * 4);
  EXPECT_EQ(bytes.substr(0, 4), "LRF1");
  const auto back = decode_features(bytes);
  EXPECT_EQ(back, rows);
}

TEST(FeatureFile, HeaderIsLittleEndian) {
  const auto bytes = encode_features(sequential_rows(2, 3));
  const std::string expected_header("LRF1\x01\0\0\0\x03\0\0\0\x02\0\0\0\0\0\0\0", 20);
  EXPECT_EQ(bytes.substr(0, 20), expected_header);
  // 0.25f = 0x3E800000 -> bytes 00 00 80 3E
  EXPECT_EQ(bytes.substr(24, 4), std::string("\0\0\x80\x3e", 4));
}

TEST(FeatureFile, TruncationReportsExpectedAndFoundSizes) {
  auto bytes = encode_features(sequential_rows(3, 4));
  bytes.pop_back();
  try {
    decode_features(bytes);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::data);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("68"), std::string::npos);
    EXPECT_NE(msg.find("67"), std::string::npos);
  }
}

TEST(FeatureFile, RejectsBadHeaders) {
  auto bytes = encode_features(sequential_rows(1, 2));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_features(bad_magic), Error);
  auto bad_version = bytes;
  bad_version[4] = 2;
  EXPECT_THROW(decode_features(bad_version), Error);
  const std::string zero_rows("LRF1\x01\0\0\0\x02\0\0\0\0\0\0\0\0\0\0\0", 20);
  EXPECT_THROW(decode_features(zero_rows), Error);
  const std::string zero_dim("LRF1\x01\0\0\0\0\0\0\0\x01\0\0\0\0\0\0\0", 20);
  EXPECT_THROW(decode_features(zero_dim), Error);
  EXPECT_THROW(decode_features(std::string("LRF1")), Error);
}

TEST(Manifest, RoundTripAndKeyOrder) {
  const std::vector<ManifestRecord> recs{{"t1", "v1", "c1", 0, 3}, {"t2", "v2", "c2", 3, 2}};
  const auto text = encode_manifest(recs);
  EXPECT_EQ(text.substr(0, text.find('\n')),
            R"({"track_id":"t1","vehicle_id":"v1","camera_id":"c1","row_start":0,"row_count":3})");
  const auto back = decode_manifest(text);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].track_id, "t2");
  EXPECT_EQ(back[1].row_start, 3u);
  EXPECT_EQ(back[1].row_count, 2u);
  EXPECT_THROW(decode_manifest("{\"track_id\": \"x\"}\n"), Error);
  EXPECT_THROW(decode_manifest("not json\n"), Error);
}

TEST(LoadGallery, DanglingRowsWarn) {
  const auto rows = sequential_rows(5, 3);
  const std::vector<ManifestRecord> recs{{"a", "v1", "c1", 0, 2}, {"b", "v2", "c1", 2, 2}};
  const auto loaded = assemble_gallery(rows, recs);
  EXPECT_EQ(loaded.gallery.size(), 2u);
  ASSERT_EQ(loaded.warnings.size(), 1u);
  EXPECT_NE(loaded.warnings[0].find('1'), std::string::npos);
  EXPECT_EQ(loaded.gallery[1].features(0, 0), rows(2, 0));
  EXPECT_EQ(loaded.gallery[1].features(2, 1), rows(3, 2));
}

TEST(LoadGallery, OverlapAndBoundsAreErrors) {
  const auto rows = sequential_rows(5, 3);
  EXPECT_THROW(assemble_gallery(rows, {{"a", "v1", "c1", 0, 3}, {"b", "v2", "c1", 2, 2}}), Error);
  EXPECT_THROW(assemble_gallery(rows, {{"a", "v1", "c1", 4, 2}}), Error);
  EXPECT_THROW(assemble_gallery(rows, {{"a", "v1", "c1", 0, 0}}), Error);
  EXPECT_THROW(assemble_gallery(rows, {{"a", "v1", "c1", 0, 2}, {"a", "v1", "c2", 2, 2}}), Error);
}

TEST(LoadGallery, NegativeValuesNeedTheFlag) {
  FeatureRows rows = sequential_rows(2, 2);
  rows(1, 1) = -1.0f;
  const std::vector<ManifestRecord> recs{{"a", "v1", "c1", 0, 2}};
  EXPECT_THROW(assemble_gallery(rows, recs), Error);
  EXPECT_NO_THROW(assemble_gallery(rows, recs, {.allow_negative = true}));
}

TEST(LoadGallery, SaveThenLoadIsByteIdentical) {
  TempDir dir;
  SyntheticParams p;
  p.n_vehicles = 5;
  p.n_cameras = 3;
  p.dimension = 7;
  p.seed = 11;
  const Gallery g = generate_synthetic(p);
  save_gallery(g, dir / "a.lrf", dir / "a.jsonl");
  const auto loaded = load_gallery(dir / "a.lrf", dir / "a.jsonl");
  EXPECT_TRUE(loaded.warnings.empty());
  ASSERT_EQ(loaded.gallery.size(), g.size());
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(loaded.gallery[i].features, g[i].features);
  save_gallery(loaded.gallery, dir / "b.lrf", dir / "b.jsonl");
  EXPECT_EQ(bytes_of(dir / "a.lrf"), bytes_of(dir / "b.lrf"));
  EXPECT_EQ(bytes_of(dir / "a.jsonl"), bytes_of(dir / "b.jsonl"));
}

TEST(QuerySelectionFile, RoundTrip) {
  TempDir dir;
  const std::vector<ImageSelection> sel{{"t000001", 2}, {"t000000", 0}};
  write_query_selection(dir / "q.jsonl", sel);
  const auto back = read_query_selection(dir / "q.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].track_id, "t000001");
  EXPECT_EQ(back[0].image_index, 2u);
}

// --- Synthetic galleries ----------------------------------------------------

TEST(Synthetic, DeterministicForASeed) {
  SyntheticParams p;
  p.n_vehicles = 4;
  p.dimension = 5;
  p.seed = 3;
  const Gallery a = generate_synthetic(p);
  const Gallery b = generate_synthetic(p);
  ASSERT_EQ(a.size(), 16u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].features, b[i].features);
  p.seed = 4;
  EXPECT_NE(generate_synthetic(p)[0].features, a[0].features);
}

TEST(Synthetic, ShapeAndIds) {
  SyntheticParams p;
  p.n_vehicles = 3;
  p.n_cameras = 2;
  p.min_images = 2;
  p.max_images = 4;
  p.dimension = 6;
  const Gallery g = generate_synthetic(p);
  ASSERT_EQ(g.size(), 6u);
  EXPECT_EQ(g[0].track_id, "t000000");
  EXPECT_EQ(g[3].vehicle_id, "v0001");
  EXPECT_EQ(g[3].camera_id, "c001");
  for (const auto& t : g.tracks()) {
    EXPECT_GE(t.image_count(), 2u);
    EXPECT_LE(t.image_count(), 4u);
    EXPECT_EQ(t.dimension(), 6u);
    EXPECT_GE(t.features.minCoeff(), 0.0);
  }
  EXPECT_TRUE(validate_gallery(g).empty());
}

TEST(Synthetic, ZeroNoiseGivesIdenticalImagesPerVehicle) {
  SyntheticParams p;
  p.n_vehicles = 3;
  p.noise_sigma = 0.0;
  const Gallery g = generate_synthetic(p);
  for (const auto& t : g.tracks()) {
    for (Eigen::Index i = 1; i < t.features.cols(); ++i) EXPECT_EQ(t.features.col(i), t.features.col(0));
  }
  EXPECT_EQ(g[0].features.col(0), g[1].features.col(0));  // same vehicle, other camera
}

TEST(Synthetic, NoiseOnlyScalesSharedDraws) {
  SyntheticParams p;
  p.n_vehicles = 2;
  p.dimension = 4;
  p.seed = 8;
  p.noise_sigma = 0.0;
  const Gallery clean = generate_synthetic(p);
  p.noise_sigma = 0.1;
  const Gallery small = generate_synthetic(p);
  p.noise_sigma = 0.2;
  const Gallery large = generate_synthetic(p);
  for (std::size_t t = 0; t < clean.size(); ++t) {
    ASSERT_EQ(clean[t].image_count(), large[t].image_count());
    const Eigen::MatrixXd d1 = small[t].features - clean[t].features;
    const Eigen::MatrixXd d2 = large[t].features - clean[t].features;
    EXPECT_NEAR((d2 - 2.0 * d1).cwiseAbs().maxCoeff(), 0.0, 1e-6);
  }
}

TEST(Synthetic, WellSeparatedClustersGiveExactRetrieval) {
  SyntheticParams p;
  p.n_vehicles = 20;
  p.dimension = 16;
  p.noise_sigma = 0.005;
  const Gallery g = generate_synthetic(p);
  const auto report = evaluate(g, track_queries(g), {Family::mcd, Aggregation::mean50}, {});
  EXPECT_EQ(report.map, 1.0);
  EXPECT_EQ(report.rank_1, 1.0);
}

TEST(Synthetic, RejectsBadParameters) {
  SyntheticParams p;
  p.min_images = 5;
  p.max_images = 4;
  EXPECT_THROW(generate_synthetic(p), Error);
  p = {};
  p.cluster_separation = 0.0;
  EXPECT_THROW(generate_synthetic(p), Error);
  p = {};
  p.noise_sigma = -1.0;
  EXPECT_THROW(generate_synthetic(p), Error);
}
