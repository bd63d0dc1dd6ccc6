#pragma once

// On-disk formats.
//
// Feature file (LRF1), little-endian:
//   offset 0   char[4]  magic "LRF1"
//   offset 4   uint32   version (1)
//   offset 8   uint32   dimension f
//   offset 12  uint64   row count
//   offset 20  float32  row_count * f values, row-major, one row per image
//
// Track manifest: UTF-8 JSON lines, one object per track:
//   {"track_id": "...", "vehicle_id": "...", "camera_id": "...", "row_start": 0, "row_count": 6}
//
// Query selection manifest (single-image queries): JSON lines
//   {"track_id": "...", "image_index": 2}

#include "reid/core.hpp"
#include "reid/evaluation.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace reid {

using FeatureRows = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr std::array<char, 4> kFeatureMagic = {'L', 'R', 'F', '1'};
inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 20;

struct FeatureFileHeader {
  std::uint32_t version = kFeatureVersion;
  std::uint32_t dimension = 0;
  std::uint64_t row_count = 0;
};

namespace detail {

template <typename T>
void put_le(std::string& buf, T v) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) buf.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return static_cast<T>(v);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::data, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::data, "cannot create '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::data, "write failed for '" + path.string() + "'");
}

}  // namespace detail

// ----------------------------------------------------------------------------
// Feature files
// ----------------------------------------------------------------------------

inline std::string encode_features(const FeatureRows& rows) {
  if (rows.cols() == 0) fail(ErrorKind::invalid_argument, "feature dimension must be >= 1");
  if (rows.rows() == 0) fail(ErrorKind::invalid_argument, "feature file needs at least one row");
  if (rows.cols() > std::numeric_limits<std::uint32_t>::max()) fail(ErrorKind::invalid_argument, "dimension too large");
  std::string buf;
  buf.reserve(kFeatureHeaderBytes + static_cast<std::size_t>(rows.size()) * 4);
  buf.append(kFeatureMagic.data(), kFeatureMagic.size());
  detail::put_le<std::uint32_t>(buf, kFeatureVersion);
  detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(rows.cols()));
  detail::put_le<std::uint64_t>(buf, static_cast<std::uint64_t>(rows.rows()));
  const float* p = rows.data();
  for (Eigen::Index i = 0; i < rows.size(); ++i) detail::put_le<std::uint32_t>(buf, std::bit_cast<std::uint32_t>(p[i]));
  return buf;
}

inline FeatureRows decode_features(const std::string& bytes, const std::string& origin = "feature data") {
  if (bytes.size() < kFeatureHeaderBytes) {
    fail(ErrorKind::data, origin + ": truncated header (" + std::to_string(bytes.size()) + " of " +
                              std::to_string(kFeatureHeaderBytes) + " bytes)");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (std::memcmp(p, kFeatureMagic.data(), 4) != 0) fail(ErrorKind::data, origin + ": bad magic, expected LRF1");
  FeatureFileHeader h;
  h.version = detail::get_le<std::uint32_t>(p + 4);
  h.dimension = detail::get_le<std::uint32_t>(p + 8);
  h.row_count = detail::get_le<std::uint64_t>(p + 12);
  if (h.version != kFeatureVersion) fail(ErrorKind::data, origin + ": unsupported version " + std::to_string(h.version));
  if (h.dimension == 0) fail(ErrorKind::data, origin + ": dimension 0");
  if (h.row_count == 0) fail(ErrorKind::data, origin + ": row count 0");
  const std::uint64_t expected = kFeatureHeaderBytes + h.row_count * h.dimension * 4ull;
  if (bytes.size() != expected) {
    fail(ErrorKind::data, origin + ": payload size mismatch, expected " + std::to_string(expected) +
                              " bytes, found " + std::to_string(bytes.size()));
  }
  FeatureRows rows(static_cast<Eigen::Index>(h.row_count), static_cast<Eigen::Index>(h.dimension));
  float* out = rows.data();
  const unsigned char* payload = p + kFeatureHeaderBytes;
  for (Eigen::Index i = 0; i < rows.size(); ++i) out[i] = std::bit_cast<float>(detail::get_le<std::uint32_t>(payload + 4 * i));
  return rows;
}

inline void write_features(const std::filesystem::path& path, const FeatureRows& rows) {
  detail::write_file(path, encode_features(rows));
}

inline FeatureRows read_features(const std::filesystem::path& path) {
  return decode_features(detail::read_file(path), path.string());
}

// ----------------------------------------------------------------------------
// Manifests
// ----------------------------------------------------------------------------

struct ManifestRecord {
  std::string track_id;
  std::string vehicle_id;
  std::string camera_id;
  std::uint64_t row_start = 0;
  std::uint64_t row_count = 0;
};

inline std::string encode_manifest(const std::vector<ManifestRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["track_id"] = r.track_id;
    j["vehicle_id"] = r.vehicle_id;
    j["camera_id"] = r.camera_id;
    j["row_start"] = r.row_start;
    j["row_count"] = r.row_count;
    out += j.dump();
    out += '\n';
  }
  return out;
}

namespace detail {

template <typename Fn>
void for_each_json_line(const std::string& text, const std::string& origin, Fn&& fn) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      fn(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::data, origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

}  // namespace detail

inline std::vector<ManifestRecord> decode_manifest(const std::string& text, const std::string& origin = "manifest") {
  std::vector<ManifestRecord> out;
  detail::for_each_json_line(text, origin, [&](const nlohmann::json& j) {
    ManifestRecord r;
    r.track_id = j.at("track_id").get<std::string>();
    r.vehicle_id = j.at("vehicle_id").get<std::string>();
    r.camera_id = j.at("camera_id").get<std::string>();
    r.row_start = j.at("row_start").get<std::uint64_t>();
    r.row_count = j.at("row_count").get<std::uint64_t>();
    out.push_back(std::move(r));
  });
  return out;
}

inline void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
  detail::write_file(path, encode_manifest(records));
}

inline std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  return decode_manifest(detail::read_file(path), path.string());
}

inline std::vector<ImageSelection> read_query_selection(const std::filesystem::path& path) {
  std::vector<ImageSelection> out;
  detail::for_each_json_line(detail::read_file(path), path.string(), [&](const nlohmann::json& j) {
    out.push_back({j.at("track_id").get<std::string>(), j.at("image_index").get<std::size_t>()});
  });
  return out;
}

inline void write_query_selection(const std::filesystem::path& path, const std::vector<ImageSelection>& selection) {
  std::string text;
  for (const auto& s : selection) {
    nlohmann::ordered_json j;
    j["track_id"] = s.track_id;
    j["image_index"] = s.image_index;
    text += j.dump() + "\n";
  }
  detail::write_file(path, text);
}

// ----------------------------------------------------------------------------
// Gallery assembly
// ----------------------------------------------------------------------------

struct LoadOptions {
  bool allow_negative = false;
};

struct LoadedGallery {
  Gallery gallery;
  std::vector<std::string> warnings;
};

/// Builds tracks from decoded rows and manifest records. Overlapping or
/// out-of-bounds ranges and duplicate ids are errors; rows no track claims
/// only produce a warning.
inline LoadedGallery assemble_gallery(const FeatureRows& rows, const std::vector<ManifestRecord>& records,
                                      const LoadOptions& options = {}) {
  if (records.empty()) fail(ErrorKind::data, "manifest lists no tracks");
  const auto n_rows = static_cast<std::uint64_t>(rows.rows());
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (const auto& r : records) {
    if (r.row_count == 0) fail(ErrorKind::data, "track '" + r.track_id + "' has row_count 0");
    if (r.row_start >= n_rows || r.row_count > n_rows - r.row_start) {
      fail(ErrorKind::data, "track '" + r.track_id + "' rows [" + std::to_string(r.row_start) + ", " +
                                std::to_string(r.row_start + r.row_count) + ") exceed the " + std::to_string(n_rows) +
                                "-row feature file");
    }
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return records[a].row_start < records[b].row_start; });
  for (std::size_t k = 1; k < order.size(); ++k) {
    const auto& prev = records[order[k - 1]];
    const auto& cur = records[order[k]];
    if (cur.row_start < prev.row_start + prev.row_count) {
      fail(ErrorKind::data, "tracks '" + prev.track_id + "' and '" + cur.track_id + "' have overlapping row ranges");
    }
  }
  std::uint64_t claimed = 0;
  for (const auto& r : records) claimed += r.row_count;

  std::vector<TrackFeatures> tracks;
  tracks.reserve(records.size());
  for (const auto& r : records) {
    TrackFeatures t{r.track_id, r.vehicle_id, r.camera_id, {}};
    t.features = rows.middleRows(static_cast<Eigen::Index>(r.row_start), static_cast<Eigen::Index>(r.row_count))
                     .transpose()
                     .cast<double>();
    tracks.push_back(std::move(t));
  }
  LoadedGallery out{Gallery(std::move(tracks)), {}};
  if (claimed < n_rows) out.warnings.push_back(std::to_string(n_rows - claimed) + " dangling feature row(s) belong to no track");

  ValidationOptions vopts;
  vopts.allow_negative = options.allow_negative;
  const auto violations = validate_gallery(out.gallery, vopts);
  if (!violations.empty()) {
    std::string msg = "invalid gallery:";
    for (const auto& v : violations) msg += " [" + v.track_id + ": " + v.rule + "]";
    fail(ErrorKind::data, msg);
  }
  return out;
}

inline LoadedGallery load_gallery(const std::filesystem::path& feature_path, const std::filesystem::path& manifest_path,
                                  const LoadOptions& options = {}) {
  return assemble_gallery(read_features(feature_path), read_manifest(manifest_path), options);
}

/// Rows in track order plus the matching manifest.
inline std::pair<FeatureRows, std::vector<ManifestRecord>> flatten_gallery(const Gallery& gallery) {
  FeatureRows rows(static_cast<Eigen::Index>(gallery.total_images()), static_cast<Eigen::Index>(gallery.dimension()));
  std::vector<ManifestRecord> records;
  records.reserve(gallery.size());
  Eigen::Index at = 0;
  for (const auto& t : gallery.tracks()) {
    const auto n = static_cast<Eigen::Index>(t.image_count());
    rows.middleRows(at, n) = t.features.transpose().cast<float>();
    records.push_back({t.track_id, t.vehicle_id, t.camera_id, static_cast<std::uint64_t>(at), static_cast<std::uint64_t>(n)});
    at += n;
  }
  return {std::move(rows), std::move(records)};
}

inline void save_gallery(const Gallery& gallery, const std::filesystem::path& feature_path,
                         const std::filesystem::path& manifest_path) {
  const auto [rows, records] = flatten_gallery(gallery);
  write_features(feature_path, rows);
  write_manifest(manifest_path, records);
}

// ----------------------------------------------------------------------------
// Synthetic galleries
// ----------------------------------------------------------------------------

struct SyntheticParams {
  std::size_t n_vehicles = 50;
  std::size_t n_cameras = 4;
  std::size_t min_images = 3;
  std::size_t max_images = 14;
  std::size_t dimension = 64;
  double cluster_separation = 1.0;
  double noise_sigma = 0.01;
  std::uint64_t seed = 0;
};

namespace detail {

// Portable draws: the standard distributions are implementation-defined, the
// engine below is not.
class SyntheticRng {
 public:
  explicit SyntheticRng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  std::size_t below(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }

  double normal() {
    if (spare_) {
      spare_ = false;
      return cached_;
    }
    double u1 = 0.0;
    do u1 = uniform(); while (u1 <= 0.0);
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    cached_ = radius * std::sin(angle);
    spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::mt19937_64 engine_;
  bool spare_ = false;
  double cached_ = 0.0;
};

}  // namespace detail

/// One non-negative cluster centre per vehicle (uniform in
/// [0, separation)^f), one track per (vehicle, camera) whose images are the
/// centre plus half-normal noise, clipped at zero. Values are rounded to
/// float32 so a saved gallery reloads bit for bit. The noise stream does not
/// depend on sigma, so galleries that differ only in sigma share their draws.
inline Gallery generate_synthetic(const SyntheticParams& p) {
  if (p.n_vehicles == 0 || p.n_cameras == 0 || p.dimension == 0) {
    fail(ErrorKind::invalid_argument, "synthetic gallery: counts and dimension must be >= 1");
  }
  if (p.min_images == 0 || p.min_images > p.max_images) {
    fail(ErrorKind::invalid_argument, "synthetic gallery: need 1 <= min_images <= max_images");
  }
  if (!(p.cluster_separation > 0.0) || !(p.noise_sigma >= 0.0) || !std::isfinite(p.cluster_separation) ||
      !std::isfinite(p.noise_sigma)) {
    fail(ErrorKind::invalid_argument, "synthetic gallery: need separation > 0 and sigma >= 0");
  }
  detail::SyntheticRng rng(p.seed);
  const auto f = static_cast<Eigen::Index>(p.dimension);

  std::vector<LatentVector> centres(p.n_vehicles, LatentVector(f));
  for (auto& c : centres) {
    for (Eigen::Index k = 0; k < f; ++k) c[k] = static_cast<double>(static_cast<float>(p.cluster_separation * rng.uniform()));
  }

  std::vector<TrackFeatures> tracks;
  tracks.reserve(p.n_vehicles * p.n_cameras);
  char buf[64];
  for (std::size_t v = 0; v < p.n_vehicles; ++v) {
    for (std::size_t c = 0; c < p.n_cameras; ++c) {
      const std::size_t n = p.min_images + rng.below(p.max_images - p.min_images + 1);
      TrackFeatures t;
      std::snprintf(buf, sizeof buf, "t%06zu", tracks.size());
      t.track_id = buf;
      std::snprintf(buf, sizeof buf, "v%04zu", v);
      t.vehicle_id = buf;
      std::snprintf(buf, sizeof buf, "c%03zu", c);
      t.camera_id = buf;
      t.features.resize(f, static_cast<Eigen::Index>(n));
      for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
        for (Eigen::Index k = 0; k < f; ++k) {
          const double value = std::max(0.0, centres[v][k] + p.noise_sigma * std::abs(rng.normal()));
          t.features(k, i) = static_cast<double>(static_cast<float>(value));
        }
      }
      tracks.push_back(std::move(t));
    }
  }
  return Gallery(std::move(tracks));
}

}  // namespace reid
