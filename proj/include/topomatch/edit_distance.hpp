#pragma once

// Damerau-Levenshtein (optimal string alignment) distance, normalized
// similarity and Levenshtein edit scripts. All functions work on code points.

#include <algorithm>
#include <compare>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "topomatch/text.hpp"

namespace topomatch {

/// OSA distance: insert, delete, substitute and adjacent transposition, with
/// no substring edited more than once. Three rolling rows.
inline std::size_t dl_distance(std::u32string_view a, std::u32string_view b) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  if (n == 0) return m;
  if (m == 0) return n;
  std::vector<std::size_t> prev2(m + 1), prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t cost = a[i - 1] == b[j - 1] ? 0 : 1;
      std::size_t d = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost});
      if (i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1]) d = std::min(d, prev2[j - 2] + 1);
      cur[j] = d;
    }
    std::swap(prev2, prev);
    std::swap(prev, cur);
  }
  return prev[m];
}

inline std::size_t dl_distance(std::string_view a, std::string_view b) {
  return dl_distance(text::to_u32(a), text::to_u32(b));
}

/// 1 - distance / max length; two empty strings are identical.
inline double dl_similarity(std::u32string_view a, std::u32string_view b) {
  const std::size_t longest = std::max(a.size(), b.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(dl_distance(a, b)) / static_cast<double>(longest);
}

inline double dl_similarity(std::string_view a, std::string_view b) {
  return dl_similarity(text::to_u32(a), text::to_u32(b));
}

enum class EditKind { substitute, insert, remove };

/// One character-level edit. `from` is 0 for insertions, `to` is 0 for deletions.
struct EditOperation {
  EditKind kind = EditKind::substitute;
  char32_t from = 0;
  char32_t to = 0;

  auto operator<=>(const EditOperation&) const = default;

  std::string to_string() const {
    switch (kind) {
      case EditKind::substitute: return "sub(" + text::to_utf8(from) + "->" + text::to_utf8(to) + ")";
      case EditKind::insert: return "ins(" + text::to_utf8(to) + ")";
      case EditKind::remove: return "del(" + text::to_utf8(from) + ")";
    }
    return "?";
  }
};

/// Minimal Levenshtein script turning `source` into `target`. The backtrace
/// prefers match/substitute, then delete, then insert, so the script is
/// deterministic. Returned in source order.
inline std::vector<EditOperation> edit_script(std::u32string_view source, std::u32string_view target) {
  const std::size_t n = source.size();
  const std::size_t m = target.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t cost = source[i - 1] == target[j - 1] ? 0 : 1;
      at(i, j) = std::min({at(i - 1, j) + 1, at(i, j - 1) + 1, at(i - 1, j - 1) + cost});
    }
  }
  std::vector<EditOperation> ops;
  std::size_t i = n;
  std::size_t j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const std::size_t cost = source[i - 1] == target[j - 1] ? 0 : 1;
      if (at(i, j) == at(i - 1, j - 1) + cost) {
        if (cost) ops.push_back({EditKind::substitute, source[i - 1], target[j - 1]});
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ops.push_back({EditKind::remove, source[i - 1], 0});
      --i;
    } else {
      ops.push_back({EditKind::insert, 0, target[j - 1]});
      --j;
    }
  }
  std::reverse(ops.begin(), ops.end());
  return ops;
}

}  // namespace topomatch
