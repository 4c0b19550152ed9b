#pragma once

// UTF-8 / code point helpers backed by ICU.

#include <string>
#include <string_view>

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include "topomatch/errors.hpp"

namespace topomatch::text {

/// Decodes UTF-8. Ill-formed sequences become U+FFFD.
inline std::u32string to_u32(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  const auto* bytes = reinterpret_cast<const uint8_t*>(s.data());
  const auto length = static_cast<int32_t>(s.size());
  int32_t i = 0;
  while (i < length) {
    UChar32 c;
    U8_NEXT(bytes, i, length, c);
    out.push_back(c < 0 ? char32_t{0xFFFD} : static_cast<char32_t>(c));
  }
  return out;
}

inline void append_utf8(std::string& out, char32_t c) {
  uint8_t buf[U8_MAX_LENGTH];
  int32_t n = 0;
  UBool error = false;
  U8_APPEND(buf, n, U8_MAX_LENGTH, static_cast<UChar32>(c), error);
  if (error) {
    const char replacement[] = "\xEF\xBF\xBD";
    out.append(replacement, 3);
    return;
  }
  out.append(reinterpret_cast<const char*>(buf), static_cast<std::size_t>(n));
}

inline std::string to_utf8(std::u32string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char32_t c : s) append_utf8(out, c);
  return out;
}

inline std::string to_utf8(char32_t c) {
  std::string out;
  append_utf8(out, c);
  return out;
}

/// Number of code points.
inline std::size_t length(std::string_view s) { return to_u32(s).size(); }

inline bool is_space(char32_t c) { return u_isUWhiteSpace(static_cast<UChar32>(c)); }

inline std::string trim(std::string_view s) {
  const std::u32string cps = to_u32(s);
  std::size_t b = 0;
  std::size_t e = cps.size();
  while (b < e && is_space(cps[b])) ++b;
  while (e > b && is_space(cps[e - 1])) --e;
  return to_utf8(std::u32string_view(cps).substr(b, e - b));
}

/// Canonical decomposition with nonspacing marks removed, recomposed.
/// Characters without a decomposition (Greek letters, ø, ł, ...) pass through.
inline std::string strip_marks(std::string_view s) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfd = icu::Normalizer2::getNFDInstance(status);
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error("ICU normalizer unavailable");

  const icu::UnicodeString decomposed =
      nfd->normalize(icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<int32_t>(s.size()))), status);
  icu::UnicodeString kept;
  for (int32_t i = 0; i < decomposed.length();) {
    const UChar32 c = decomposed.char32At(i);
    if (u_charType(c) != U_NON_SPACING_MARK) kept.append(c);
    i += U16_LENGTH(c);
  }
  const icu::UnicodeString composed = nfc->normalize(kept, status);
  if (U_FAILURE(status)) throw Error("ICU normalization failed");
  std::string out;
  composed.toUTF8String(out);
  return out;
}

inline std::string to_lower(std::string_view s) {
  std::u32string cps = to_u32(s);
  for (char32_t& c : cps) c = static_cast<char32_t>(u_tolower(static_cast<UChar32>(c)));
  return to_utf8(cps);
}

inline std::string to_upper(std::string_view s) {
  std::u32string cps = to_u32(s);
  for (char32_t& c : cps) c = static_cast<char32_t>(u_toupper(static_cast<UChar32>(c)));
  return to_utf8(cps);
}

/// Simple (per code point) case folding.
inline std::u32string fold_case(std::u32string cps) {
  for (char32_t& c : cps) {
    c = static_cast<char32_t>(u_foldCase(static_cast<UChar32>(c), U_FOLD_CASE_DEFAULT));
  }
  return cps;
}

inline std::string fold_case(std::string_view s) { return to_utf8(fold_case(to_u32(s))); }

inline bool is_alphabetic(char32_t c) { return u_isalpha(static_cast<UChar32>(c)); }

inline bool all_alphabetic(std::string_view s) {
  for (char32_t c : to_u32(s)) {
    if (!is_alphabetic(c)) return false;
  }
  return true;
}

}  // namespace topomatch::text
