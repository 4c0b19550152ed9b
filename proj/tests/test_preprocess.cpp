#include <gtest/gtest.h>

#include <string>
#include <vector>

#include "topomatch/preprocess.hpp"
#include "topomatch/rng.hpp"

using namespace topomatch;

namespace {

PreprocessOptions with_len(int n) {
  PreprocessOptions o;
  o.max_seq_len = n;
  return o;
}

}  // namespace

TEST(NormalizeString, StripsAndAddsMarkers) {
  EXPECT_EQ(normalize_string("  Manchester ", PreprocessOptions{}), "|Manchester|");
}

TEST(NormalizeString, RemovesCombiningMarks) {
  // U+00FA decomposes to u + U+0301 (combining acute); the mark is dropped.
  EXPECT_EQ(normalize_string("Dún Laoghaire", PreprocessOptions{}), "|Dun Laoghaire|");
  // Precomposed and already decomposed input normalize identically.
  EXPECT_EQ(normalize_string("Dún", PreprocessOptions{}), "|Dun|");
}

TEST(NormalizeString, KeepsLettersWithoutAsciiMapping) {
  EXPECT_EQ(normalize_string("Αθήνα", PreprocessOptions{}),
            "|Αθηνα|");  // tonos removed, Greek letters kept
  EXPECT_EQ(normalize_string("Øster", PreprocessOptions{}), "|Øster|");
}

TEST(NormalizeString, EmptyAfterStrippingSignalsDrop) {
  EXPECT_FALSE(normalize_string("", PreprocessOptions{}).has_value());
  EXPECT_FALSE(normalize_string(" \t ", PreprocessOptions{}).has_value());
}

TEST(NormalizeString, LowercaseFlag) {
  PreprocessOptions o;
  o.lowercase = true;
  EXPECT_EQ(normalize_string("PARIS", o), "|paris|");
  EXPECT_EQ(normalize_string("PARIS", PreprocessOptions{}), "|PARIS|");
}

TEST(NormalizeString, CoreIsIdempotent) {
  PreprocessOptions o;
  o.lowercase = true;
  Rng rng(3);
  const std::u32string pool = U" aAbéÉ́zάñ\t-";
  for (int i = 0; i < 500; ++i) {
    std::u32string s;
    const auto n = rng.below(12);
    for (std::uint64_t j = 0; j < n; ++j) s.push_back(pool[rng.below(pool.size())]);
    const std::string once = normalize_core(text::to_utf8(s), o);
    EXPECT_EQ(normalize_core(once, o), once);
  }
}

TEST(BuildVocab, SortsByCodePoint) {
  const std::vector<std::string> corpus{"|ab|"};
  const Vocabulary v = build_vocab(corpus);
  EXPECT_EQ(v.size(), 5u);
  EXPECT_EQ(v.index_of(U'a'), 2);
  EXPECT_EQ(v.index_of(U'b'), 3);
  EXPECT_EQ(v.index_of(U'|'), 4);
  EXPECT_EQ(v.index_of(U'z'), Vocabulary::kUnk);
}

TEST(BuildVocab, EmptyCorpusIsAnError) {
  EXPECT_THROW(build_vocab(std::vector<std::string>{}), InputError);
}

TEST(BuildVocab, SetSemantics) {
  EXPECT_EQ(build_vocab(std::vector<std::string>{"|a|", "|a|"}), build_vocab(std::vector<std::string>{"|a|"}));
}

TEST(BuildVocab, MarkerAlwaysPresentWithOptions) {
  const Vocabulary v = build_vocab(std::vector<std::string>{"ab"}, PreprocessOptions{});
  EXPECT_TRUE(v.contains(U'|'));
}

TEST(BuildVocab, JsonRoundTrip) {
  const Vocabulary v = build_vocab(std::vector<std::string>{"|abé|"});
  EXPECT_EQ(Vocabulary::from_json(v.to_json()), v);
  EXPECT_THROW(Vocabulary::from_json(nlohmann::json{{"a", 2}, {"b", 4}}), InputError);
}

TEST(Encode, DirectLookupWithPadding) {
  const Vocabulary v = build_vocab(std::vector<std::string>{"|ab|"});
  const auto e = encode("|ab|", v, with_len(6));
  EXPECT_EQ(e.indices, (std::vector<std::int32_t>{4, 2, 3, 4, 0, 0}));
  EXPECT_EQ(e.true_length, 4);
}

TEST(Encode, UnseenCharacterIsUnk) {
  const Vocabulary v = build_vocab(std::vector<std::string>{"|ab|"});
  EXPECT_EQ(encode("|aé|", v, with_len(6)).indices, (std::vector<std::int32_t>{4, 2, 1, 4, 0, 0}));
}

TEST(Encode, TruncatesAfterMarkers) {
  const Vocabulary v = build_vocab(std::vector<std::string>{"|a|"});
  const auto e = prepare(std::string(200, 'a'), v, with_len(120));
  ASSERT_TRUE(e);
  EXPECT_EQ(e->indices.size(), 120u);
  EXPECT_EQ(e->true_length, 120);
  EXPECT_EQ(e->indices.front(), v.index_of(U'|'));
  EXPECT_EQ(e->indices.back(), v.index_of(U'a'));  // suffix marker cut off
}

TEST(Encode, LayoutInvariants) {
  const Vocabulary v = build_vocab(std::vector<std::string>{"|abc|"});
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    std::string s;
    const auto n = 1 + rng.below(10);
    for (std::uint64_t j = 0; j < n; ++j) s.push_back(static_cast<char>('a' + rng.below(4)));
    const auto e = *prepare(s, v, with_len(8));
    ASSERT_GE(e.true_length, 1);
    ASSERT_LE(e.true_length, 8);
    EXPECT_EQ(e.indices[0], v.index_of(U'|'));
    for (std::size_t k = static_cast<std::size_t>(e.true_length); k < e.indices.size(); ++k) {
      EXPECT_EQ(e.indices[k], Vocabulary::kPad);
    }
    if (static_cast<int>(s.size()) + 2 <= 8) {
      EXPECT_EQ(e.indices[static_cast<std::size_t>(e.true_length - 1)], v.index_of(U'|'));
    }
  }
}

TEST(Encode, DecodeRoundTrip) {
  const Vocabulary v = build_vocab(std::vector<std::string>{"|Athεns|"});
  const auto e = encode("|εnAt|", v, with_len(10));
  EXPECT_EQ(encode(decode(e, v), v, with_len(10)), e);
}

TEST(PreprocessOptions, Validation) {
  EXPECT_THROW(with_len(2).validate(), InputError);
  EXPECT_NO_THROW(with_len(3).validate());
  const PreprocessOptions o;
  EXPECT_EQ(PreprocessOptions::from_json(o.to_json()), o);
}
