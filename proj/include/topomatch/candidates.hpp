#pragma once

// Ranked candidate lists and their JSON-lines format, shared by the vector
// ranker and the string baselines:
//   {"query": ..., "candidates": [{"altname": ..., "distance": ..., "location_ids": [...]}]}

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "topomatch/errors.hpp"

namespace topomatch {

struct Candidate {
  std::string altname;
  double distance = 0.0;
  std::vector<std::string> location_ids;

  bool operator==(const Candidate&) const = default;
};

struct RankedCandidates {
  std::string query;
  std::vector<Candidate> items;

  bool operator==(const RankedCandidates&) const = default;
};

inline nlohmann::json to_json(const RankedCandidates& r) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& c : r.items) {
    items.push_back({{"altname", c.altname}, {"distance", c.distance}, {"location_ids", c.location_ids}});
  }
  return {{"query", r.query}, {"candidates", items}};
}

inline RankedCandidates ranked_from_json(const nlohmann::json& j) {
  RankedCandidates r;
  r.query = j.at("query").get<std::string>();
  for (const auto& c : j.at("candidates")) {
    r.items.push_back({c.at("altname").get<std::string>(), c.at("distance").get<double>(),
                       c.at("location_ids").get<std::vector<std::string>>()});
  }
  return r;
}

inline std::string format_ranked(const std::vector<RankedCandidates>& results) {
  std::string out;
  for (const auto& r : results) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

inline void write_ranked(const std::filesystem::path& path, const std::vector<RankedCandidates>& results) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << format_ranked(results);
}

inline std::vector<RankedCandidates> read_ranked(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open results file " + path.string());
  std::vector<RankedCandidates> results;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      results.push_back(ranked_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path.string(), lineno, e.what());
    }
  }
  return results;
}

}  // namespace topomatch
