#pragma once

// Minimal tab-separated field handling shared by the file readers.

#include <charconv>
#include <string>
#include <string_view>
#include <vector>

#include "topomatch/errors.hpp"
#include "topomatch/text.hpp"

namespace topomatch {

/// Splits a line on tabs, dropping a trailing carriage return.
inline std::vector<std::string_view> split_tabs(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

inline double parse_double(std::string_view field, const std::string& source, std::size_t line, const char* what) {
  const std::string s = text::trim(field);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw InputError(source, line, std::string("cannot parse ") + what + " '" + s + "'");
  }
  return v;
}

}  // namespace topomatch
