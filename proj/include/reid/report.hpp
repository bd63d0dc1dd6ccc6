#pragma once

// Report documents written by `reid evaluate`.

#include "reid/evaluation.hpp"

#include <json.hpp>

#include <cstdio>
#include <string>

namespace reid {

/// Machine-readable report. Field names are part of the file contract:
/// map, rank_1, rank_5, cmc, per_query_ap, skipped_queries.
inline nlohmann::ordered_json report_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["map"] = r.map;
  j["rank_1"] = r.rank_1;
  j["rank_5"] = r.rank_5;
  j["cmc"] = r.cmc;
  auto per_query = nlohmann::ordered_json::array();
  for (const auto& q : r.per_query_ap) {
    nlohmann::ordered_json e;
    e["query"] = q.query_id;
    e["ap"] = q.ap;
    per_query.push_back(std::move(e));
  }
  j["per_query_ap"] = std::move(per_query);
  j["skipped_queries"] = r.skipped_queries;
  return j;
}

namespace detail {
inline std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}
}  // namespace detail

/// Key-value text summary.
inline std::string report_text(const EvalReport& r, const std::string& label) {
  std::string s;
  s += "metric = " + label + "\n";
  s += "queries = " + std::to_string(r.n_queries) + "\n";
  s += "skipped = " + std::to_string(r.skipped_queries.size()) + "\n";
  s += "map = " + detail::fixed(r.map) + "\n";
  s += "rank_1 = " + detail::fixed(r.rank_1) + "\n";
  s += "rank_5 = " + detail::fixed(r.rank_5) + "\n";
  return s;
}

/// CMC curve as CSV with columns k, precision.
inline std::string cmc_csv(const EvalReport& r) {
  std::string s = "k,precision\n";
  for (std::size_t k = 0; k < r.cmc.size(); ++k) s += std::to_string(k + 1) + "," + detail::fixed(r.cmc[k], 10) + "\n";
  return s;
}

}  // namespace reid
