#pragma once

// Gazetteer loading, altname indexing and great-circle distance.
//
// File format: UTF-8 TSV, no header, one row per (id, altname):
//   location_id <TAB> primary_name <TAB> lat <TAB> lon <TAB> altname

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "topomatch/errors.hpp"
#include "topomatch/preprocess.hpp"
#include "topomatch/tsv.hpp"

namespace topomatch {

inline constexpr double kEarthRadiusKm = 6371.0;

inline double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  constexpr double rad = std::numbers::pi / 180.0;
  const double dlat = (lat2 - lat1) * rad;
  const double dlon = (lon2 - lon1) * rad;
  const double s1 = std::sin(dlat / 2.0);
  const double s2 = std::sin(dlon / 2.0);
  const double h = s1 * s1 + std::cos(lat1 * rad) * std::cos(lat2 * rad) * s2 * s2;
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

struct GazetteerEntry {
  std::string location_id;
  std::string primary_name;
  double lat = 0.0;
  double lon = 0.0;
  std::set<std::string> altnames;  // includes primary_name
};

inline void check_coordinates(double lat, double lon, const std::string& source, std::size_t line) {
  if (!std::isfinite(lat) || lat < -90.0 || lat > 90.0) {
    throw InputError(source, line, "latitude out of range [-90, 90]");
  }
  if (!std::isfinite(lon) || lon < -180.0 || lon > 180.0) {
    throw InputError(source, line, "longitude out of range [-180, 180]");
  }
}

class Gazetteer {
 public:
  Gazetteer() = default;
  explicit Gazetteer(PreprocessOptions opts) : opts_(opts) {}

  const PreprocessOptions& options() const { return opts_; }

  /// Key used for altname lookup: shared normalization core, then case folding.
  std::string key(std::string_view raw) const { return text::fold_case(normalize_core(raw, opts_)); }

  /// Adds one (id, altname) row. Later rows for a known id only add altnames.
  void add(const std::string& id, const std::string& primary, double lat, double lon, const std::string& altname) {
    auto [it, inserted] = by_id_.try_emplace(id, entries_.size());
    if (inserted) {
      GazetteerEntry e;
      e.location_id = id;
      e.primary_name = primary;
      e.lat = lat;
      e.lon = lon;
      entries_.push_back(std::move(e));
    }
    GazetteerEntry& e = entries_[it->second];
    for (const std::string* name : {&primary, &altname}) {
      const std::string clean = text::trim(*name);
      if (clean.empty()) continue;
      if (e.altnames.insert(clean).second) {
        raw_index_[clean].insert(id);
        const std::string k = key(clean);
        if (!k.empty()) {
          key_index_[k].insert(id);
          key_spellings_[k].insert(clean);
        }
      }
    }
  }

  void load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open gazetteer " + path.string());
    const std::string source = path.string();
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (text::trim(line).empty()) continue;
      const auto f = split_tabs(line);
      if (f.size() != 5) {
        throw InputError(source, lineno, "expected 5 tab-separated fields, found " + std::to_string(f.size()));
      }
      const std::string id = text::trim(f[0]);
      if (id.empty()) throw InputError(source, lineno, "empty location id");
      const double lat = parse_double(f[2], source, lineno, "latitude");
      const double lon = parse_double(f[3], source, lineno, "longitude");
      check_coordinates(lat, lon, source, lineno);
      const std::string primary = text::trim(f[1]);
      if (primary.empty() && text::trim(f[4]).empty()) throw InputError(source, lineno, "row has no name");
      add(id, primary, lat, lon, std::string(f[4]));
    }
  }

  /// Union with another gazetteer: colliding ids keep their first coordinates
  /// and gain the other side's altnames.
  void merge(const Gazetteer& other) {
    for (const auto& e : other.entries_) {
      for (const auto& alt : e.altnames) add(e.location_id, e.primary_name, e.lat, e.lon, alt);
    }
  }

  const std::vector<GazetteerEntry>& entries() const { return entries_; }

  const GazetteerEntry* find(const std::string& id) const {
    const auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &entries_[it->second];
  }

  /// Raw altname spelling -> ids bearing exactly that spelling.
  const std::map<std::string, std::set<std::string>>& altnames() const { return raw_index_; }

  /// Normalized key -> ids.
  const std::map<std::string, std::set<std::string>>& key_index() const { return key_index_; }

  /// Normalized key -> raw spellings mapping to it.
  const std::map<std::string, std::set<std::string>>& key_spellings() const { return key_spellings_; }

  std::size_t unique_altname_count() const { return raw_index_.size(); }

  /// Ids bearing `altname`: exact spelling first, then the normalized key.
  const std::set<std::string>* ids_for(const std::string& altname) const {
    if (const auto it = raw_index_.find(altname); it != raw_index_.end()) return &it->second;
    if (const auto it = key_index_.find(key(altname)); it != key_index_.end()) return &it->second;
    return nullptr;
  }

 private:
  PreprocessOptions opts_;
  std::vector<GazetteerEntry> entries_;
  std::map<std::string, std::size_t> by_id_;
  std::map<std::string, std::set<std::string>> raw_index_;
  std::map<std::string, std::set<std::string>> key_index_;
  std::map<std::string, std::set<std::string>> key_spellings_;
};

inline Gazetteer load_gazetteer(const std::filesystem::path& path, const PreprocessOptions& opts = {}) {
  Gazetteer g(opts);
  g.load(path);
  return g;
}

}  // namespace topomatch
