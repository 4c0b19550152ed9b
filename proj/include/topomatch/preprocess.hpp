#pragma once

// String normalization, character vocabulary and fixed-length encoding.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "topomatch/errors.hpp"
#include "topomatch/text.hpp"

namespace topomatch {

struct PreprocessOptions {
  bool ascii_normalize = true;
  bool lowercase = false;
  bool strip_whitespace = true;
  char32_t boundary_marker = U'|';
  int max_seq_len = 120;

  void validate() const {
    if (max_seq_len < 3) throw InputError("max_seq_len must be at least 3");
    if (boundary_marker == 0) throw InputError("boundary_marker must be a single character");
  }

  nlohmann::json to_json() const {
    return {{"ascii_normalize", ascii_normalize},
            {"lowercase", lowercase},
            {"strip_whitespace", strip_whitespace},
            {"boundary_marker", text::to_utf8(boundary_marker)},
            {"max_seq_len", max_seq_len}};
  }

  static PreprocessOptions from_json(const nlohmann::json& j) {
    PreprocessOptions o;
    o.ascii_normalize = j.at("ascii_normalize").get<bool>();
    o.lowercase = j.at("lowercase").get<bool>();
    o.strip_whitespace = j.at("strip_whitespace").get<bool>();
    const auto marker = text::to_u32(j.at("boundary_marker").get<std::string>());
    if (marker.size() != 1) throw InputError("boundary_marker must be exactly one character");
    o.boundary_marker = marker[0];
    o.max_seq_len = j.at("max_seq_len").get<int>();
    o.validate();
    return o;
  }

  bool operator==(const PreprocessOptions&) const = default;
};

/// Strip / fold / decompose without adding markers. Idempotent.
inline std::string normalize_core(std::string_view raw, const PreprocessOptions& opts) {
  std::string s = opts.strip_whitespace ? text::trim(raw) : std::string(raw);
  if (opts.ascii_normalize) {
    s = text::strip_marks(s);
    // A leading or trailing mark can hide whitespace from the first trim.
    if (opts.strip_whitespace) s = text::trim(s);
  }
  if (opts.lowercase) s = text::to_lower(s);
  return s;
}

/// Full normalization: core plus boundary markers on both ends.
/// Returns nullopt when nothing is left after stripping; such records must be dropped.
inline std::optional<std::string> normalize_string(std::string_view raw, const PreprocessOptions& opts) {
  std::string core = normalize_core(raw, opts);
  if (core.empty()) return std::nullopt;
  const std::string marker = text::to_utf8(opts.boundary_marker);
  return marker + core + marker;
}

/// Immutable character-to-index map. Index 0 is padding, 1 is unknown;
/// real characters occupy 2..V-1 in code point order.
class Vocabulary {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kUnk = 1;
  static constexpr std::int32_t kFirstChar = 2;

  Vocabulary() = default;

  static Vocabulary from_chars(const std::set<char32_t>& chars) {
    Vocabulary v;
    std::int32_t next = kFirstChar;
    for (char32_t c : chars) {
      v.index_.emplace(c, next++);
      v.chars_.push_back(c);
    }
    return v;
  }

  std::int32_t index_of(char32_t c) const {
    const auto it = index_.find(c);
    return it == index_.end() ? kUnk : it->second;
  }

  bool contains(char32_t c) const { return index_.count(c) != 0; }

  std::optional<char32_t> char_at(std::int32_t index) const {
    if (index < kFirstChar || index >= static_cast<std::int32_t>(size())) return std::nullopt;
    return chars_[static_cast<std::size_t>(index - kFirstChar)];
  }

  /// V, including the two reserved indices.
  std::size_t size() const { return chars_.size() + kFirstChar; }

  const std::map<char32_t, std::int32_t>& mapping() const { return index_; }

  /// {char: index} for real characters; reserved indices are implicit.
  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [c, i] : index_) j[text::to_utf8(c)] = i;
    return j;
  }

  static Vocabulary from_json(const nlohmann::json& j) {
    std::map<std::int32_t, char32_t> by_index;
    for (const auto& [key, value] : j.items()) {
      const auto cps = text::to_u32(key);
      if (cps.size() != 1) throw InputError("vocabulary key is not a single character: " + key);
      if (!by_index.emplace(value.get<std::int32_t>(), cps[0]).second) {
        throw InputError("duplicate vocabulary index " + value.dump());
      }
    }
    Vocabulary v;
    std::int32_t expected = kFirstChar;
    for (const auto& [i, c] : by_index) {
      if (i != expected++) throw InputError("vocabulary indices are not contiguous from 2");
      v.index_.emplace(c, i);
      v.chars_.push_back(c);
    }
    return v;
  }

  bool operator==(const Vocabulary& other) const { return index_ == other.index_; }

 private:
  std::map<char32_t, std::int32_t> index_;
  std::vector<char32_t> chars_;
};

/// Vocabulary of every character in the (already normalized) corpus.
inline Vocabulary build_vocab(std::span<const std::string> corpus) {
  if (corpus.empty()) throw InputError("cannot build a vocabulary from an empty corpus");
  std::set<char32_t> chars;
  for (const auto& s : corpus) {
    for (char32_t c : text::to_u32(s)) chars.insert(c);
  }
  return Vocabulary::from_chars(chars);
}

/// As above, and the boundary marker is always included.
inline Vocabulary build_vocab(std::span<const std::string> corpus, const PreprocessOptions& opts) {
  if (corpus.empty()) throw InputError("cannot build a vocabulary from an empty corpus");
  std::set<char32_t> chars{opts.boundary_marker};
  for (const auto& s : corpus) {
    for (char32_t c : text::to_u32(s)) chars.insert(c);
  }
  return Vocabulary::from_chars(chars);
}

struct EncodedString {
  std::vector<std::int32_t> indices;  // exactly max_seq_len entries
  int true_length = 0;

  std::span<const std::int32_t> tokens() const {
    return std::span<const std::int32_t>(indices).first(static_cast<std::size_t>(true_length));
  }

  bool operator==(const EncodedString&) const = default;
};

/// Maps an already normalized string to indices, truncating to max_seq_len
/// and right-padding with PAD. Unseen characters become UNK.
inline EncodedString encode(std::string_view normalized, const Vocabulary& vocab, const PreprocessOptions& opts) {
  const std::u32string cps = text::to_u32(normalized);
  const auto max_len = static_cast<std::size_t>(opts.max_seq_len);
  EncodedString out;
  out.indices.assign(max_len, Vocabulary::kPad);
  const std::size_t n = std::min(cps.size(), max_len);
  for (std::size_t i = 0; i < n; ++i) out.indices[i] = vocab.index_of(cps[i]);
  out.true_length = static_cast<int>(n);
  return out;
}

/// Inverse of encode for strings without UNK. UNK decodes to U+FFFD.
inline std::string decode(const EncodedString& enc, const Vocabulary& vocab) {
  std::u32string cps;
  for (std::int32_t i : enc.tokens()) cps.push_back(vocab.char_at(i).value_or(char32_t{0xFFFD}));
  return text::to_utf8(cps);
}

/// normalize_string followed by encode.
inline std::optional<EncodedString> prepare(std::string_view raw, const Vocabulary& vocab,
                                            const PreprocessOptions& opts) {
  const auto normalized = normalize_string(raw, opts);
  if (!normalized) return std::nullopt;
  return encode(*normalized, vocab, opts);
}

}  // namespace topomatch
