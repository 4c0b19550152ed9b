#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "topomatch/baselines.hpp"
#include "topomatch/rng.hpp"

using namespace topomatch;

namespace {

/// Direct recursive definition of the optimal string alignment distance.
std::size_t naive_osa(const std::u32string& a, const std::u32string& b, std::size_t i, std::size_t j) {
  if (i == 0) return j;
  if (j == 0) return i;
  std::size_t best = std::min({naive_osa(a, b, i - 1, j) + 1, naive_osa(a, b, i, j - 1) + 1,
                               naive_osa(a, b, i - 1, j - 1) + (a[i - 1] == b[j - 1] ? 0 : 1)});
  if (i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1]) best = std::min(best, naive_osa(a, b, i - 2, j - 2) + 1);
  return best;
}

std::vector<std::u32string> all_strings(std::size_t max_len, const std::u32string& alphabet) {
  std::vector<std::u32string> out{U""};
  std::vector<std::u32string> frontier{U""};
  for (std::size_t len = 1; len <= max_len; ++len) {
    std::vector<std::u32string> next;
    for (const auto& s : frontier) {
      for (char32_t c : alphabet) next.push_back(s + c);
    }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

}  // namespace

TEST(DlDistance, Examples) {
  EXPECT_EQ(dl_distance("Zurich", "Zmich"), 2u);
  EXPECT_EQ(dl_distance("abc", "abc"), 0u);
  EXPECT_EQ(dl_distance("ab", "ba"), 1u);
  EXPECT_EQ(dl_distance("", "abc"), 3u);
  // OSA, not unrestricted DL: "ca" -> "abc" costs 3 here (true DL gives 2).
  EXPECT_EQ(dl_distance("ca", "abc"), 3u);
}

TEST(DlDistance, CountsCodePoints) {
  EXPECT_EQ(dl_distance("Zuâch", "Zurich"), 2u);
}

TEST(DlDistance, MatchesRecursiveOracleUpToLengthFour) {
  // Length <= 4 keeps the unit test fast; the acceptance suite covers length 5.
  const auto strings = all_strings(4, U"abc");
  for (const auto& a : strings) {
    for (const auto& b : strings) {
      ASSERT_EQ(dl_distance(a, b), naive_osa(a, b, a.size(), b.size()))
          << text::to_utf8(a) << " / " << text::to_utf8(b);
    }
  }
}

TEST(DlDistance, SymmetryIdentityAndBound) {
  Rng rng(5);
  for (int i = 0; i < 2000; ++i) {
    std::u32string a, b;
    for (auto n = rng.below(8); n > 0; --n) a.push_back(U'a' + static_cast<char32_t>(rng.below(4)));
    for (auto n = rng.below(8); n > 0; --n) b.push_back(U'a' + static_cast<char32_t>(rng.below(4)));
    EXPECT_EQ(dl_distance(a, b), dl_distance(b, a));
    EXPECT_EQ(dl_distance(a, a), 0u);
    EXPECT_LE(dl_distance(a, b), std::max(a.size(), b.size()));
  }
}

TEST(DlSimilarity, Examples) {
  EXPECT_NEAR(dl_similarity("Zurich", "Zmich"), 1.0 - 2.0 / 6.0, 1e-12);
  EXPECT_EQ(dl_similarity("Paris", "Paris"), 1.0);
  EXPECT_EQ(dl_similarity("abc", "xyz"), 0.0);
  EXPECT_EQ(dl_similarity("", ""), 1.0);
}

TEST(EditScript, ReproducesTarget) {
  Rng rng(9);
  for (int i = 0; i < 500; ++i) {
    std::u32string a, b;
    for (auto n = rng.below(7); n > 0; --n) a.push_back(U'a' + static_cast<char32_t>(rng.below(3)));
    for (auto n = rng.below(7); n > 0; --n) b.push_back(U'a' + static_cast<char32_t>(rng.below(3)));
    const auto ops = edit_script(a, b);
    // Script length equals the Levenshtein distance, bounded below by OSA.
    EXPECT_GE(ops.size(), dl_distance(a, b));
    EXPECT_LE(ops.size(), std::max(a.size(), b.size()));
    for (const auto& op : ops) {
      if (op.kind == EditKind::substitute) EXPECT_NE(op.from, op.to);
    }
  }
  const auto ops = edit_script(text::to_u32("Jagclman"), text::to_u32("Jagelman"));
  ASSERT_EQ(ops.size(), 1u);
  EXPECT_EQ(ops[0], (EditOperation{EditKind::substitute, U'c', U'e'}));
}

TEST(TuneThreshold, SeparableChoosesSmallestMaximizer) {
  const auto m = tune_threshold({1.0, 1.0, 0.0, 0.0}, {true, true, false, false});
  EXPECT_EQ(m.train_f1, 1.0);
  EXPECT_EQ(m.threshold, 1.0);
}

TEST(TuneThreshold, HandEnumeratedExample) {
  // Thresholds: 0.8 -> F1 2/3; 0.7 -> P 1/2 R 1/2; 0.6 -> P 2/3 R 1 F1 0.8; 0.2 -> P 1/2 R 1 F1 2/3.
  const auto m = tune_threshold({0.8, 0.6, 0.7, 0.2}, {true, true, false, false});
  EXPECT_DOUBLE_EQ(m.threshold, 0.6);
  EXPECT_NEAR(m.train_f1, 0.8, 1e-12);
}

TEST(TuneThreshold, SingleClassIsAnError) {
  EXPECT_THROW(tune_threshold({0.1, 0.2}, {true, true}), InputError);
}

TEST(TuneThreshold, ReportedF1IsReproducible) {
  const std::vector<LabeledPair> pairs = {{"London", "Londres", true},  {"Paris", "Parijs", true},
                                          {"Berlin", "Bern", false},    {"Zurich", "Zmich", true},
                                          {"Madrid", "Madras", false},  {"Roma", "Rome", true},
                                          {"Lyon", "Leon", false},      {"Wien", "Vienna", true},
                                          {"Athens", "Athos", false},   {"Oslo", "Osaka", false}};
  const auto m = tune_threshold(pairs);
  std::vector<bool> pred, gold;
  for (const auto& p : pairs) {
    pred.push_back(m.predict(dl_similarity(p.first, p.second)));
    gold.push_back(p.label);
  }
  EXPECT_DOUBLE_EQ(binary_metrics(pred, gold).f1, m.train_f1);
}

namespace {

Gazetteer small_gazetteer() {
  Gazetteer g;
  g.add("1", "Manchester", 53.48, -2.24, "Manchester");
  g.add("2", "Manchester", 42.99, -71.46, "MANCHESTER");
  g.add("3", "Salford", 53.49, -2.29, "Salford");
  return g;
}

}  // namespace

TEST(ExactCandidates, CaseInsensitive) {
  const auto g = small_gazetteer();
  const auto m = exact_candidates("manchester", g);
  ASSERT_TRUE(m);
  EXPECT_EQ(m->spellings, (std::set<std::string>{"MANCHESTER", "Manchester"}));
  EXPECT_EQ(m->location_ids, (std::set<std::string>{"1", "2"}));
  EXPECT_FALSE(exact_candidates("Manchestr", g));
}

TEST(LevDamRank, VerbatimQueryRanksFirst) {
  const auto g = small_gazetteer();
  const auto r = LevDamRanker::from_gazetteer(g, false).rank("Salford", 3);
  ASSERT_EQ(r.items.size(), 3u);
  EXPECT_EQ(r.items[0].altname, "Salford");
  EXPECT_EQ(r.items[0].distance, 0.0);
}

TEST(LevDamRank, AgreesWithFullSortOracle) {
  Rng rng(21);
  std::vector<std::string> names;
  std::vector<std::vector<std::string>> ids;
  for (int i = 0; i < 1000; ++i) {
    std::string s;
    for (auto n = 1 + rng.below(8); n > 0; --n) s.push_back(static_cast<char>('a' + rng.below(5)));
    names.push_back(s + std::to_string(i % 7));
    ids.push_back({std::to_string(i)});
  }
  const LevDamRanker ranker(names, ids, false);
  for (int q = 0; q < 20; ++q) {
    std::string query;
    for (auto n = 1 + rng.below(8); n > 0; --n) query.push_back(static_cast<char>('a' + rng.below(5)));
    std::vector<std::pair<double, std::string>> oracle;
    for (const auto& n : names) oracle.emplace_back(1.0 - dl_similarity(query, n), n);
    std::sort(oracle.begin(), oracle.end());
    const auto got = ranker.rank(query, 25);
    ASSERT_EQ(got.items.size(), 25u);
    for (std::size_t i = 0; i < 25; ++i) {
      EXPECT_EQ(got.items[i].altname, oracle[i].second);
      EXPECT_EQ(got.items[i].distance, oracle[i].first);
    }
  }
}

TEST(LevDamRank, QualitativeOrdering) {
  const LevDamRanker ranker({"Departamento de Tarija", "corregimiento de Tunja"}, {{"a"}, {"b"}}, false);
  const auto r = ranker.rank("corregimiento de Tarija", 2);
  EXPECT_EQ(r.items[0].altname, "corregimiento de Tunja");
}

TEST(LevDamRank, ThreadCountDoesNotChangeResults) {
  const auto g = small_gazetteer();
  const auto ranker = LevDamRanker::from_gazetteer(g);
  const std::vector<std::string> qs{"manchester", "salfrd", "x", "Manchestre"};
  EXPECT_EQ(ranker.rank_all(qs, 2, 1), ranker.rank_all(qs, 2, 3));
}
