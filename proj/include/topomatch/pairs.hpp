#pragma once

// Labeled string pairs and their TSV format:
//   string1 <TAB> string2 <TAB> TRUE|FALSE

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "topomatch/errors.hpp"
#include "topomatch/text.hpp"
#include "topomatch/tsv.hpp"

namespace topomatch {

struct LabeledPair {
  std::string first;
  std::string second;
  bool label = false;

  bool operator==(const LabeledPair&) const = default;
};

inline bool parse_label(std::string_view field, const std::string& source, std::size_t line) {
  const std::string v = text::to_upper(text::trim(field));
  if (v == "TRUE" || v == "1") return true;
  if (v == "FALSE" || v == "0") return false;
  throw InputError(source, line, "label must be TRUE or FALSE, found '" + std::string(field) + "'");
}

inline std::vector<LabeledPair> read_pairs(std::istream& in, const std::string& source) {
  std::vector<LabeledPair> pairs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    const auto f = split_tabs(line);
    if (f.size() != 3) {
      throw InputError(source, lineno, "expected 3 tab-separated fields, found " + std::to_string(f.size()));
    }
    pairs.push_back({std::string(f[0]), std::string(f[1]), parse_label(f[2], source, lineno)});
  }
  return pairs;
}

inline std::vector<LabeledPair> read_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open pair file " + path.string());
  return read_pairs(in, path.string());
}

inline std::string format_pairs(const std::vector<LabeledPair>& pairs) {
  std::string out;
  for (const auto& p : pairs) {
    out += p.first;
    out += '\t';
    out += p.second;
    out += p.label ? "\tTRUE\n" : "\tFALSE\n";
  }
  return out;
}

inline void write_pairs(const std::filesystem::path& path, const std::vector<LabeledPair>& pairs) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << format_pairs(pairs);
}

}  // namespace topomatch
