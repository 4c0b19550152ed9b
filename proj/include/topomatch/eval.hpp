#pragma once

// Binary matching metrics and candidate-ranking metrics with geographic
// relevance judgments.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "topomatch/candidates.hpp"
#include "topomatch/errors.hpp"
#include "topomatch/gazetteer.hpp"
#include "topomatch/tsv.hpp"

namespace topomatch {

struct BinaryMetrics {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  // Set when the metric had a zero denominator and was defined as 0.
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;

  nlohmann::json to_json() const {
    return {{"tp", tp},
            {"fp", fp},
            {"tn", tn},
            {"fn", fn},
            {"precision", precision},
            {"recall", recall},
            {"f1", f1},
            {"macro_f1", macro_f1},
            {"accuracy", accuracy},
            {"precision_undefined", precision_undefined},
            {"recall_undefined", recall_undefined},
            {"f1_undefined", f1_undefined}};
  }
};

namespace detail {

inline double safe_ratio(double num, double den, bool* undefined = nullptr) {
  if (den == 0.0) {
    if (undefined) *undefined = true;
    return 0.0;
  }
  return num / den;
}

inline double f1_of(double tp, double fp, double fn, bool* undefined = nullptr) {
  return safe_ratio(2.0 * tp, 2.0 * tp + fp + fn, undefined);
}

}  // namespace detail

/// Positive-class precision, recall and F1, macro F1 over both classes, accuracy.
inline BinaryMetrics binary_metrics(const std::vector<bool>& predictions, const std::vector<bool>& labels) {
  if (predictions.size() != labels.size()) throw ConsistencyError("predictions and labels differ in length");
  if (predictions.empty()) throw InputError("cannot compute metrics on an empty set");
  BinaryMetrics m;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predictions[i] && labels[i]) ++m.tp;
    else if (predictions[i]) ++m.fp;
    else if (labels[i]) ++m.fn;
    else ++m.tn;
  }
  const auto tp = static_cast<double>(m.tp);
  const auto fp = static_cast<double>(m.fp);
  const auto fn = static_cast<double>(m.fn);
  const auto tn = static_cast<double>(m.tn);
  m.precision = detail::safe_ratio(tp, tp + fp, &m.precision_undefined);
  m.recall = detail::safe_ratio(tp, tp + fn, &m.recall_undefined);
  m.f1 = detail::f1_of(tp, fp, fn, &m.f1_undefined);
  m.macro_f1 = 0.5 * (m.f1 + detail::f1_of(tn, fn, fp));
  m.accuracy = (tp + tn) / static_cast<double>(labels.size());
  return m;
}

struct GoldQuery {
  std::string toponym;
  double lat = 0.0;
  double lon = 0.0;

  bool operator==(const GoldQuery&) const = default;
};

/// Reads `toponym <TAB> lat <TAB> lon`. Queries are lower-cased and
/// deduplicated on (toponym, lat, lon), keeping first-seen order.
inline std::vector<GoldQuery> read_gold(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open gold file " + path.string());
  const std::string source = path.string();
  std::vector<GoldQuery> gold;
  std::set<std::tuple<std::string, double, double>> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    const auto f = split_tabs(line);
    if (f.size() != 3) throw InputError(source, lineno, "expected 3 tab-separated fields, found " + std::to_string(f.size()));
    GoldQuery q{text::to_lower(text::trim(f[0])), parse_double(f[1], source, lineno, "latitude"),
                parse_double(f[2], source, lineno, "longitude")};
    if (q.toponym.empty()) throw InputError(source, lineno, "empty toponym");
    check_coordinates(q.lat, q.lon, source, lineno);
    if (seen.emplace(q.toponym, q.lat, q.lon).second) gold.push_back(std::move(q));
  }
  return gold;
}

struct RelevanceJudgment {
  std::string altname;
  std::string location_id;  // closest entity bearing the altname; empty if none
  double distance_km = std::numeric_limits<double>::infinity();
  bool relevant = false;
  bool found = false;  // false when the altname is not in the gazetteer
};

inline constexpr double kDefaultToleranceKm = 10.0;

/// Closest entity bearing `altname` decides relevance (inclusive tolerance).
inline RelevanceJudgment judge(const std::string& altname, const GoldQuery& gold, const Gazetteer& gazetteer,
                               double tolerance_km = kDefaultToleranceKm) {
  RelevanceJudgment j;
  j.altname = altname;
  const auto* ids = gazetteer.ids_for(altname);
  if (!ids) return j;
  j.found = true;
  for (const auto& id : *ids) {
    const auto* e = gazetteer.find(id);
    const double d = haversine_km(gold.lat, gold.lon, e->lat, e->lon);
    if (d < j.distance_km) {
      j.distance_km = d;
      j.location_id = id;
    }
  }
  j.relevant = j.distance_km <= tolerance_km;
  return j;
}

/// AP@k = sum_{r<=k} P@r * rel_r / max(1, min(R_k, k)), R_k = relevant items in the top k.
inline double average_precision_at_k(const std::vector<bool>& relevance, std::size_t k) {
  const std::size_t n = std::min(k, relevance.size());
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < n; ++r) {
    if (!relevance[r]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  return sum / static_cast<double>(std::max<std::size_t>(1, std::min(hits, k)));
}

struct RankingMetrics {
  std::size_t queries = 0;
  double p_at_1 = 0.0;
  std::map<std::size_t, double> map_at_k;
};

inline const std::vector<std::size_t> kDefaultKs = {5, 10, 20};

/// Results keyed by lower-cased query.
inline std::map<std::string, const RankedCandidates*> index_results(const std::vector<RankedCandidates>& results) {
  std::map<std::string, const RankedCandidates*> by_query;
  for (const auto& r : results) by_query.emplace(text::to_lower(r.query), &r);
  return by_query;
}

/// Per-query relevance of every retrieved item.
inline std::vector<std::vector<bool>> judge_all(const std::vector<RankedCandidates>& results,
                                                const std::vector<GoldQuery>& gold, const Gazetteer& gazetteer,
                                                double tolerance_km) {
  const auto by_query = index_results(results);
  std::vector<std::vector<bool>> rel;
  rel.reserve(gold.size());
  for (const auto& g : gold) {
    const auto it = by_query.find(g.toponym);
    if (it == by_query.end()) throw InputError("no ranked results for gold query '" + g.toponym + "'");
    std::vector<bool> row;
    for (const auto& c : it->second->items) row.push_back(judge(c.altname, g, gazetteer, tolerance_km).relevant);
    rel.push_back(std::move(row));
  }
  return rel;
}

inline RankingMetrics metrics_from_relevance(const std::vector<std::vector<bool>>& rel,
                                             const std::vector<bool>& include, const std::vector<std::size_t>& ks) {
  RankingMetrics m;
  for (auto k : ks) m.map_at_k[k] = 0.0;
  for (std::size_t q = 0; q < rel.size(); ++q) {
    if (!include[q]) continue;
    ++m.queries;
    if (!rel[q].empty() && rel[q][0]) m.p_at_1 += 1.0;
    for (auto k : ks) m.map_at_k[k] += average_precision_at_k(rel[q], k);
  }
  if (m.queries) {
    const auto n = static_cast<double>(m.queries);
    m.p_at_1 /= n;
    for (auto& [k, v] : m.map_at_k) v /= n;
  }
  return m;
}

inline RankingMetrics ranking_metrics(const std::vector<RankedCandidates>& results, const std::vector<GoldQuery>& gold,
                                      const Gazetteer& gazetteer, const std::vector<std::size_t>& ks = kDefaultKs,
                                      double tolerance_km = kDefaultToleranceKm) {
  const auto rel = judge_all(results, gold, gazetteer, tolerance_km);
  return metrics_from_relevance(rel, std::vector<bool>(rel.size(), true), ks);
}

struct MethodResults {
  std::string name;
  std::vector<RankedCandidates> results;
  std::optional<double> seconds;
};

struct ReportRow {
  std::string method;
  RankingMetrics metrics;
  std::optional<double> seconds;
};

struct ComparisonReport {
  std::size_t gold_queries = 0;
  std::size_t excluded = 0;
  double tolerance_km = kDefaultToleranceKm;
  std::vector<std::size_t> ks;
  std::vector<ReportRow> rows;

  std::string to_tsv() const {
    std::string out = "method\tqueries\texcluded\tP@1";
    for (auto k : ks) out += "\tMAP@" + std::to_string(k);
    out += "\ttime_s\n";
    char buf[64];
    for (const auto& r : rows) {
      out += r.method + "\t" + std::to_string(r.metrics.queries) + "\t" + std::to_string(excluded);
      std::snprintf(buf, sizeof buf, "\t%.4f", r.metrics.p_at_1);
      out += buf;
      for (auto k : ks) {
        std::snprintf(buf, sizeof buf, "\t%.4f", r.metrics.map_at_k.at(k));
        out += buf;
      }
      if (r.seconds) {
        std::snprintf(buf, sizeof buf, "\t%.3f\n", *r.seconds);
        out += buf;
      } else {
        out += "\tNA\n";
      }
    }
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json rows_json = nlohmann::json::array();
    for (const auto& r : rows) {
      nlohmann::json maps = nlohmann::json::object();
      for (auto k : ks) maps[std::to_string(k)] = r.metrics.map_at_k.at(k);
      rows_json.push_back({{"method", r.method},
                           {"queries", r.metrics.queries},
                           {"p_at_1", r.metrics.p_at_1},
                           {"map_at_k", maps},
                           {"time_s", r.seconds ? nlohmann::json(*r.seconds) : nlohmann::json()}});
    }
    return {{"gold_queries", gold_queries}, {"excluded", excluded}, {"tolerance_km", tolerance_km}, {"methods", rows_json}};
  }
};

/// Drops queries that no method resolves, then scores every method on the rest.
inline ComparisonReport compare_methods(const std::vector<MethodResults>& methods, const std::vector<GoldQuery>& gold,
                                        const Gazetteer& gazetteer, double tolerance_km = kDefaultToleranceKm,
                                        const std::vector<std::size_t>& ks = kDefaultKs) {
  if (methods.empty()) throw InputError("compare_methods needs at least one method");
  std::set<std::string> reference;
  for (const auto& [q, r] : index_results(methods.front().results)) reference.insert(q);
  for (const auto& m : methods) {
    std::set<std::string> qs;
    for (const auto& [q, r] : index_results(m.results)) qs.insert(q);
    if (qs != reference) throw ConsistencyError("method '" + m.name + "' was run on a different query set");
  }
  std::vector<std::vector<std::vector<bool>>> rel;
  for (const auto& m : methods) rel.push_back(judge_all(m.results, gold, gazetteer, tolerance_km));

  std::vector<bool> include(gold.size(), false);
  for (std::size_t q = 0; q < gold.size(); ++q) {
    for (const auto& per_method : rel) {
      if (std::find(per_method[q].begin(), per_method[q].end(), true) != per_method[q].end()) include[q] = true;
    }
  }
  ComparisonReport report;
  report.gold_queries = gold.size();
  report.excluded = static_cast<std::size_t>(std::count(include.begin(), include.end(), false));
  report.tolerance_km = tolerance_km;
  report.ks = ks;
  for (std::size_t i = 0; i < methods.size(); ++i) {
    report.rows.push_back({methods[i].name, metrics_from_relevance(rel[i], include, ks), methods[i].seconds});
  }
  return report;
}

}  // namespace topomatch
