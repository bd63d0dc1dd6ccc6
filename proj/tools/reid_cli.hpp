#pragma once

// `reid` command-line front end: evaluate, rank, synth, bench.
//
// Exit codes: 0 success, 2 usage or invalid arguments, 3 data errors,
// 4 numerical errors.

#include "reid/reid.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

namespace reid::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kData = 3, kNumerical = 4 };

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return kUsage;
    case ErrorKind::data: return kData;
    case ErrorKind::numerical: return kNumerical;
  }
  return kData;
}

/// --threads, else REID_THREADS, else the hardware concurrency.
inline std::size_t resolve_threads(std::optional<std::size_t> flag) {
  if (flag && *flag > 0) return *flag;
  if (const char* env = std::getenv("REID_THREADS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

struct MetricFlags {
  std::string metric = "mcd";
  std::string agg;
  double alpha = 1.0;
  std::optional<double> gamma;

  void attach(CLI::App& app) {
    app.add_option("--metric", metric, "med | mcd | rscr | krbf | kcos")->capture_default_str();
    app.add_option("--agg", agg, "min | mean | med | mean50 | med50 (med/mcd with track queries)");
    app.add_option("--alpha", alpha, "L1 weight for rscr")->capture_default_str();
    app.add_option("--gamma", gamma, "RBF spread for krbf (default 1/f)");
  }

  DistanceSpec resolve(QueryKind kind) const {
    DistanceSpec spec;
    const auto family = parse_family(metric);
    if (!family) fail(ErrorKind::invalid_argument, "unknown metric '" + metric + "'");
    spec.family = *family;
    spec.alpha = alpha;
    spec.gamma = gamma;
    if (is_track_level(spec.family)) {
      if (!agg.empty()) fail(ErrorKind::invalid_argument, metric + " takes no --agg");
      spec.aggregation = Aggregation::not_applicable;
    } else if (agg.empty()) {
      if (kind == QueryKind::full_track) fail(ErrorKind::invalid_argument, metric + " with track queries needs --agg");
      spec.aggregation = Aggregation::not_applicable;
    } else {
      const auto a = parse_aggregation(agg);
      if (!a) fail(ErrorKind::invalid_argument, "unknown aggregation '" + agg + "'");
      spec.aggregation = *a;
    }
    check_spec(spec, kind);
    return spec;
  }
};

struct DataFlags {
  std::string features;
  std::string manifest;
  bool allow_negative = false;
  bool include_same_camera = false;
  std::optional<std::size_t> threads;

  void attach(CLI::App& app) {
    app.add_option("--features", features, "LRF1 feature file")->required();
    app.add_option("--manifest", manifest, "JSON-lines track manifest")->required();
    app.add_flag("--allow-negative", allow_negative, "accept negative feature values");
    app.add_flag("--include-same-camera", include_same_camera,
                 "keep gallery tracks of the query vehicle seen by the query camera");
    app.add_option("--threads", threads, "worker threads (default: REID_THREADS or all cores)");
  }

  LoadedGallery load(std::ostream& err) const {
    LoadOptions opts;
    opts.allow_negative = allow_negative;
    auto loaded = load_gallery(features, manifest, opts);
    for (const auto& w : loaded.warnings) err << "warning: " << w << "\n";
    return loaded;
  }

  ExclusionPolicy policy() const {
    ExclusionPolicy p;
    p.exclude_same_camera_same_vehicle = !include_same_camera;
    return p;
  }
};

inline QueryKind parse_mode(const std::string& mode) {
  if (mode == "t2tp") return QueryKind::full_track;
  if (mode == "i2tp") return QueryKind::single_image;
  fail(ErrorKind::invalid_argument, "unknown mode '" + mode + "' (i2tp | t2tp)");
}

inline void write_text(const std::string& path, const std::string& text) {
  detail::write_file(path, text);
}

inline std::string format_distance(double d) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.10g", d);
  return buf;
}

inline std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Vehicle re-identification ranking and evaluation over latent features", "reid"};
  app.require_subcommand(1);

  // evaluate ---------------------------------------------------------------
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Rank every query against the gallery and score mAP / CMC");
  DataFlags eval_data;
  MetricFlags eval_metric;
  std::string eval_mode = "t2tp";
  std::string select = "first";
  std::string selection_path;
  std::uint64_t eval_seed = 0;
  std::size_t cmc_depth = 20;
  std::string report_path, text_path, cmc_path;
  eval_data.attach(*evaluate_cmd);
  eval_metric.attach(*evaluate_cmd);
  evaluate_cmd->add_option("--mode", eval_mode, "i2tp | t2tp")->capture_default_str();
  evaluate_cmd->add_option("--select", select, "i2tp query image: first | random | manifest")->capture_default_str();
  evaluate_cmd->add_option("--query-selection", selection_path, "JSON lines {track_id, image_index} for --select manifest");
  evaluate_cmd->add_option("--seed", eval_seed, "seed for --select random")->capture_default_str();
  evaluate_cmd->add_option("--cmc-depth", cmc_depth, "CMC curve length")->capture_default_str();
  evaluate_cmd->add_option("--report", report_path, "write the JSON report here");
  evaluate_cmd->add_option("--text", text_path, "write the key-value report here");
  evaluate_cmd->add_option("--cmc", cmc_path, "write the CMC curve (k,precision) CSV here");

  // rank -------------------------------------------------------------------
  auto* rank_cmd = app.add_subcommand("rank", "Print the top-k gallery tracks for one query");
  DataFlags rank_data;
  MetricFlags rank_metric;
  std::string rank_mode = "t2tp";
  std::string query_id;
  std::size_t image_index = 0;
  std::size_t top_k = 10;
  rank_data.attach(*rank_cmd);
  rank_metric.attach(*rank_cmd);
  rank_cmd->add_option("--mode", rank_mode, "i2tp | t2tp")->capture_default_str();
  rank_cmd->add_option("--query", query_id, "track id of the query")->required();
  rank_cmd->add_option("--image", image_index, "image index within the query track (i2tp)")->capture_default_str();
  rank_cmd->add_option("--top", top_k, "number of entries to print")->capture_default_str();

  // synth ------------------------------------------------------------------
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic clustered gallery");
  SyntheticParams synth;
  std::string synth_features, synth_manifest;
  synth_cmd->add_option("--vehicles", synth.n_vehicles)->capture_default_str();
  synth_cmd->add_option("--cameras", synth.n_cameras)->capture_default_str();
  synth_cmd->add_option("--min-images", synth.min_images)->capture_default_str();
  synth_cmd->add_option("--max-images", synth.max_images)->capture_default_str();
  synth_cmd->add_option("--dim", synth.dimension)->capture_default_str();
  synth_cmd->add_option("--separation", synth.cluster_separation)->capture_default_str();
  synth_cmd->add_option("--noise", synth.noise_sigma)->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed)->capture_default_str();
  synth_cmd->add_option("--features", synth_features, "output LRF1 file")->required();
  synth_cmd->add_option("--manifest", synth_manifest, "output manifest")->required();

  // bench ------------------------------------------------------------------
  auto* bench_cmd = app.add_subcommand("bench", "Time each metric family on a VeRi-shaped synthetic gallery");
  SyntheticParams bench;
  bench.n_vehicles = 559;  // 559 x 3 = 1677 tracks
  bench.n_cameras = 3;
  bench.min_images = 3;
  bench.max_images = 9;
  bench.dimension = 1920;
  bench.cluster_separation = 1.0;
  bench.noise_sigma = 0.05;
  std::size_t bench_queries = 100;
  std::optional<std::size_t> bench_threads;
  std::vector<std::string> bench_metrics = {"med", "mcd", "rscr", "krbf", "kcos"};
  std::string bench_agg = "mean50";
  bench_cmd->add_option("--vehicles", bench.n_vehicles)->capture_default_str();
  bench_cmd->add_option("--cameras", bench.n_cameras)->capture_default_str();
  bench_cmd->add_option("--min-images", bench.min_images)->capture_default_str();
  bench_cmd->add_option("--max-images", bench.max_images)->capture_default_str();
  bench_cmd->add_option("--dim", bench.dimension)->capture_default_str();
  bench_cmd->add_option("--seed", bench.seed)->capture_default_str();
  bench_cmd->add_option("--queries", bench_queries, "track queries timed per metric (0 = all)")->capture_default_str();
  bench_cmd->add_option("--metrics", bench_metrics, "metric families to time")->delimiter(',');
  bench_cmd->add_option("--agg", bench_agg, "aggregation for med/mcd")->capture_default_str();
  bench_cmd->add_option("--threads", bench_threads, "worker threads (default: REID_THREADS or all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (evaluate_cmd->parsed()) {
      const QueryKind kind = parse_mode(eval_mode);
      const DistanceSpec spec = eval_metric.resolve(kind);
      const auto loaded = eval_data.load(err);
      const Gallery& gallery = loaded.gallery;
      std::vector<Query> queries;
      if (kind == QueryKind::full_track) {
        queries = track_queries(gallery);
      } else if (select == "first") {
        queries = first_image_queries(gallery);
      } else if (select == "random") {
        queries = random_image_queries(gallery, eval_seed);
      } else if (select == "manifest") {
        if (selection_path.empty()) fail(ErrorKind::invalid_argument, "--select manifest needs --query-selection");
        const auto selection = read_query_selection(selection_path);
        queries = selected_image_queries(gallery, selection);
      } else {
        fail(ErrorKind::invalid_argument, "unknown --select '" + select + "'");
      }
      EvalOptions opts;
      opts.threads = resolve_threads(eval_data.threads);
      opts.cmc_depth = cmc_depth;
      const EvalReport report = evaluate(gallery, queries, spec, eval_data.policy(), opts);
      for (const auto& id : report.skipped_queries) err << "warning: query '" << id << "' has no relevant gallery track, skipped\n";
      const std::string text = report_text(report, std::string(eval_mode) + " " + spec.label());
      out << text;
      if (!report_path.empty()) write_text(report_path, report_json(report).dump(2) + "\n");
      if (!text_path.empty()) write_text(text_path, text);
      if (!cmc_path.empty()) write_text(cmc_path, cmc_csv(report));
      return kOk;
    }

    if (rank_cmd->parsed()) {
      const QueryKind kind = parse_mode(rank_mode);
      const DistanceSpec spec = rank_metric.resolve(kind);
      const auto loaded = rank_data.load(err);
      const Gallery& gallery = loaded.gallery;
      const auto idx = gallery.find(query_id);
      if (!idx) fail(ErrorKind::data, "unknown query track '" + query_id + "'");
      const Query query = kind == QueryKind::full_track ? Query::from_track(gallery[*idx])
                                                        : Query::from_image(gallery[*idx], image_index);
      const RankedList ranked = rank_gallery(query, gallery, spec, rank_data.policy());
      out << "rank\ttrack_id\tvehicle_id\tdistance\n";
      for (std::size_t k = 0; k < std::min(top_k, ranked.size()); ++k) {
        const auto& e = ranked[k];
        out << (k + 1) << "\t" << e.track_id << "\t" << gallery[e.gallery_index].vehicle_id << "\t"
            << format_distance(e.distance) << "\n";
      }
      return kOk;
    }

    if (synth_cmd->parsed()) {
      const Gallery gallery = generate_synthetic(synth);
      save_gallery(gallery, synth_features, synth_manifest);
      out << "wrote " << gallery.size() << " tracks, " << gallery.total_images() << " images, f = "
          << gallery.dimension() << "\n";
      return kOk;
    }

    if (bench_cmd->parsed()) {
      const std::size_t threads = resolve_threads(bench_threads);
      const Gallery gallery = generate_synthetic(bench);
      const auto all = track_queries(gallery);
      const std::size_t nq = bench_queries == 0 ? all.size() : std::min(bench_queries, all.size());
      const std::span<const Query> queries(all.data(), nq);
      out << "gallery: " << gallery.size() << " tracks, " << gallery.total_images() << " images, f = "
          << gallery.dimension() << ", threads = " << threads << ", queries = " << nq << "\n";
      out << "metric\tqueries\ttotal_s\tper_query_ms\tchecksum\n";
      for (const auto& name : bench_metrics) {
        MetricFlags mf;
        mf.metric = name;
        const auto family = parse_family(name);
        if (!family) fail(ErrorKind::invalid_argument, "unknown metric '" + name + "'");
        if (!is_track_level(*family)) mf.agg = bench_agg;
        const DistanceSpec spec = mf.resolve(QueryKind::full_track);

        const auto start = std::chrono::steady_clock::now();
        const GalleryIndex index(gallery, spec);
        std::vector<RankedList> ranked(nq);
        const std::size_t block = GalleryIndex::kQueryBlock;
        parallel_for((nq + block - 1) / block, threads, [&](std::size_t b) {
          const std::size_t lo = b * block, hi = std::min(nq, lo + block);
          std::vector<const Query*> batch;
          for (std::size_t i = lo; i < hi; ++i) batch.push_back(&queries[i]);
          std::vector<double> dist(batch.size() * gallery.size());
          index.distances(batch, dist);
          for (std::size_t i = 0; i < batch.size(); ++i) {
            ranked[lo + i] = rank_from_distances(*batch[i], gallery,
                                                 std::span<const double>(dist).subspan(i * gallery.size(), gallery.size()),
                                                 ExclusionPolicy{});
          }
        });
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

        std::uint64_t h = 0xcbf29ce484222325ull;
        for (const auto& list : ranked) {
          for (const auto& e : list) {
            h = fnv1a(h, e.track_id.data(), e.track_id.size());
            h = fnv1a(h, &e.distance, sizeof e.distance);
          }
        }
        char line[160];
        std::snprintf(line, sizeof line, "%s\t%zu\t%.3f\t%.3f\t%016llx\n", spec.label().c_str(), nq, seconds,
                      1e3 * seconds / static_cast<double>(nq), static_cast<unsigned long long>(h));
        out << line;
      }
      return kOk;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}

}  // namespace reid::cli
