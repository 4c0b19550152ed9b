#pragma once

// Balanced pair dataset generation from gazetteers and from aligned OCR
// tokens, and the shared dedup / rebalance / split post-processing.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "topomatch/edit_distance.hpp"
#include "topomatch/errors.hpp"
#include "topomatch/gazetteer.hpp"
#include "topomatch/pairs.hpp"
#include "topomatch/rng.hpp"
#include "topomatch/text.hpp"

namespace topomatch {

/// Counts accumulated while generating and post-processing a dataset.
struct GenerationReport {
  std::string mode;
  std::uint64_t seed = 0;
  std::map<std::string, std::size_t> counts;

  nlohmann::json to_json() const { return {{"mode", mode}, {"seed", seed}, {"counts", counts}}; }
};

namespace detail {

/// Unordered pair key used for duplicate detection.
inline std::pair<std::string, std::string> unordered_key(const std::string& a, const std::string& b) {
  return a <= b ? std::make_pair(a, b) : std::make_pair(b, a);
}

}  // namespace detail

struct GazetteerPairOptions {
  double sim_threshold = 0.25;
  double km_threshold = 50.0;
  std::size_t sample_size = 50;
  std::size_t top_n = 10;
};

/// Trivial half: identical / case-variant positives against the most
/// dissimilar of `sample_size` random foreign altnames. Challenging half:
/// same-entity altnames above `sim_threshold` against the `top_n` most
/// similar foreign altnames that lie farther than `km_threshold` from every
/// entity bearing the source. Per source and half, positives and negatives
/// are equalized; the larger half is then cut down to the smaller one.
inline std::vector<LabeledPair> gen_gazetteer_pairs(const Gazetteer& gaz, std::uint64_t seed,
                                                    const GazetteerPairOptions& opt, GenerationReport& report) {
  if (gaz.entries().size() < 2) throw InputError("pair generation needs at least two gazetteer entities");
  Rng rng(seed);

  std::vector<std::string> names;
  std::vector<std::u32string> cps;
  std::vector<std::vector<const GazetteerEntry*>> bearers;
  std::map<std::string, std::size_t> name_index;
  for (const auto& [name, ids] : gaz.altnames()) {
    name_index.emplace(name, names.size());
    names.push_back(name);
    cps.push_back(text::to_u32(name));
    std::vector<const GazetteerEntry*> es;
    for (const auto& id : ids) es.push_back(gaz.find(id));
    bearers.push_back(std::move(es));
  }
  const std::size_t n_names = names.size();

  auto shares_entity = [&](std::size_t a, std::size_t b) {
    for (const auto* ea : bearers[a]) {
      for (const auto* eb : bearers[b]) {
        if (ea == eb) return true;
      }
    }
    return false;
  };
  auto min_km = [&](std::size_t a, std::size_t b) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto* ea : bearers[a]) {
      for (const auto* eb : bearers[b]) best = std::min(best, haversine_km(ea->lat, ea->lon, eb->lat, eb->lon));
    }
    return best;
  };

  std::set<std::pair<std::string, std::string>> emitted;
  auto fresh = [&](const std::string& a, const std::string& b) { return !emitted.count(detail::unordered_key(a, b)); };
  auto mark = [&](const std::string& a, const std::string& b) { emitted.insert(detail::unordered_key(a, b)); };

  std::vector<LabeledPair> trivial_pos, trivial_neg, hard_pos, hard_neg;

  for (const auto& entry : gaz.entries()) {
    for (const auto& s : entry.altnames) {
      const std::size_t si = name_index.at(s);

      // Trivial positives: the name itself, same-entity case variants and its lower-cased form.
      std::vector<std::string> tpos;
      if (fresh(s, s)) tpos.push_back(s);
      const std::u32string folded = text::fold_case(cps[si]);
      for (const auto& t : entry.altnames) {
        if (t != s && text::fold_case(text::to_u32(t)) == folded && fresh(s, t)) tpos.push_back(t);
      }
      const std::string lower = text::to_lower(s);
      if (lower != s && !entry.altnames.count(lower) && fresh(s, lower)) tpos.push_back(lower);

      // Trivial negatives: most dissimilar among a random sample of foreign altnames.
      std::vector<std::pair<double, std::size_t>> sample;
      std::set<std::size_t> sampled;
      for (std::size_t tries = 0; sampled.size() < opt.sample_size && tries < 4 * opt.sample_size; ++tries) {
        const auto j = static_cast<std::size_t>(rng.below(n_names));
        if (shares_entity(si, j) || !sampled.insert(j).second) continue;
        sample.emplace_back(dl_similarity(cps[si], cps[j]), j);
      }
      std::sort(sample.begin(), sample.end(), [&](const auto& a, const auto& b) {
        return a.first != b.first ? a.first < b.first : names[a.second] < names[b.second];
      });
      std::vector<std::string> tneg;
      for (const auto& [sim, j] : sample) {
        if (tneg.size() == tpos.size()) break;
        if (fresh(s, names[j])) tneg.push_back(names[j]);
      }
      const std::size_t nt = std::min(tpos.size(), tneg.size());
      for (std::size_t i = 0; i < nt; ++i) {
        trivial_pos.push_back({s, tpos[i], true});
        trivial_neg.push_back({s, tneg[i], false});
        mark(s, tpos[i]);
        mark(s, tneg[i]);
      }

      // Challenging positives: other names of the same entity above the similarity threshold.
      std::vector<std::pair<double, std::string>> hpos;
      for (const auto& t : entry.altnames) {
        if (t == s || text::fold_case(text::to_u32(t)) == folded || !fresh(s, t)) continue;
        const double sim = dl_similarity(cps[si], cps[name_index.at(t)]);
        if (sim > opt.sim_threshold) hpos.emplace_back(sim, t);
      }
      if (hpos.empty()) continue;
      std::sort(hpos.begin(), hpos.end(),
                [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });

      // Challenging negatives: top_n most similar foreign names, then the distance filter.
      std::vector<std::pair<double, std::size_t>> nearest;
      for (std::size_t j = 0; j < n_names; ++j) {
        if (j == si || shares_entity(si, j)) continue;
        nearest.emplace_back(dl_similarity(cps[si], cps[j]), j);
      }
      const std::size_t keep = std::min(opt.top_n, nearest.size());
      std::partial_sort(nearest.begin(), nearest.begin() + static_cast<std::ptrdiff_t>(keep), nearest.end(),
                        [&](const auto& a, const auto& b) {
                          return a.first != b.first ? a.first > b.first : names[a.second] < names[b.second];
                        });
      std::vector<std::string> hneg;
      for (std::size_t r = 0; r < keep && hneg.size() < hpos.size(); ++r) {
        const std::size_t j = nearest[r].second;
        if (min_km(si, j) <= opt.km_threshold) {
          ++report.counts["challenging_negatives_dropped_by_distance"];
          continue;
        }
        if (fresh(s, names[j])) hneg.push_back(names[j]);
      }
      const std::size_t nh = std::min(hpos.size(), hneg.size());
      for (std::size_t i = 0; i < nh; ++i) {
        hard_pos.push_back({s, hpos[i].second, true});
        hard_neg.push_back({s, hneg[i], false});
        mark(s, hpos[i].second);
        mark(s, hneg[i]);
      }
    }
  }

  // Equalize the halves by removing matched positive/negative pairs from the larger one.
  auto trim = [&](std::vector<LabeledPair>& pos, std::vector<LabeledPair>& neg, std::size_t target) {
    std::vector<std::size_t> order(pos.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order.begin(), order.end());
    order.resize(target);
    std::sort(order.begin(), order.end());
    std::vector<LabeledPair> p, n;
    for (auto i : order) {
      p.push_back(pos[i]);
      n.push_back(neg[i]);
    }
    pos.swap(p);
    neg.swap(n);
  };
  const std::size_t half = std::min(trivial_pos.size(), hard_pos.size());
  report.counts["trivial_generated"] = 2 * trivial_pos.size();
  report.counts["challenging_generated"] = 2 * hard_pos.size();
  if (half == 0) {
    // Degenerate gazetteer without challenging pairs: keep the trivial half.
    report.counts["trivial"] = 2 * trivial_pos.size();
    report.counts["challenging"] = 0;
  } else {
    trim(trivial_pos, trivial_neg, half);
    trim(hard_pos, hard_neg, half);
    report.counts["trivial"] = 2 * half;
    report.counts["challenging"] = 2 * half;
  }

  std::vector<LabeledPair> out;
  for (auto* v : {&trivial_pos, &trivial_neg, &hard_pos, &hard_neg}) out.insert(out.end(), v->begin(), v->end());
  report.counts["generated_positives"] = trivial_pos.size() + hard_pos.size();
  report.counts["generated_negatives"] = trivial_neg.size() + hard_neg.size();
  return out;
}

/// Observed edit-operation frequencies, in the OCR -> correction direction.
using EditTable = std::map<EditOperation, std::size_t>;

struct AlignedToken {
  std::string ocr;
  std::string corrected;

  bool operator==(const AlignedToken&) const = default;
};

inline std::vector<AlignedToken> read_aligned_tokens(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open aligned token file " + path.string());
  std::vector<AlignedToken> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    const auto f = split_tabs(line);
    if (f.size() != 2) {
      throw InputError(path.string(), lineno, "expected 2 tab-separated fields, found " + std::to_string(f.size()));
    }
    out.push_back({std::string(f[0]), std::string(f[1])});
  }
  return out;
}

struct OcrFilterResult {
  std::vector<AlignedToken> kept;
  std::array<std::size_t, 6> dropped{};  // per rule, first failing rule only
  EditTable observed;                     // operations over pairs surviving rules 1-5
};

/// Rules, applied in order: (1) identical; (2) OCR token shorter than two
/// characters; (3) one is a substring of the other; (4) correction has a
/// hyphen; (5) correction has a non-alphabetic character; (6) some edit
/// operation of the pair occurs fewer than twice across the surviving corpus.
inline OcrFilterResult filter_ocr_pairs(const std::vector<AlignedToken>& tokens) {
  OcrFilterResult r;
  std::vector<AlignedToken> stage;
  std::vector<std::vector<EditOperation>> scripts;
  for (const auto& t : tokens) {
    const std::u32string o = text::to_u32(t.ocr);
    const std::u32string c = text::to_u32(t.corrected);
    int rule = 0;
    if (o == c) rule = 1;
    else if (o.size() < 2) rule = 2;
    else if (o.find(c) != std::u32string::npos || c.find(o) != std::u32string::npos) rule = 3;
    else if (c.find(U'-') != std::u32string::npos) rule = 4;
    else if (!text::all_alphabetic(t.corrected)) rule = 5;
    if (rule) {
      ++r.dropped[static_cast<std::size_t>(rule - 1)];
      continue;
    }
    stage.push_back(t);
    scripts.push_back(edit_script(o, c));
    for (const auto& op : scripts.back()) ++r.observed[op];
  }
  for (std::size_t i = 0; i < stage.size(); ++i) {
    const bool rare = std::any_of(scripts[i].begin(), scripts[i].end(), [&](const auto& op) { return r.observed[op] < 2; });
    if (rare) ++r.dropped[5];
    else r.kept.push_back(stage[i]);
  }
  return r;
}

inline constexpr std::size_t kMaxNegativeAttempts = 1000;

/// Positives pair each correction with each distinct OCR variant. For every
/// correction, as many synthetic negatives are built by 1-2 random edits
/// whose script back to the correction uses an operation absent from `observed`.
inline std::vector<LabeledPair> gen_ocr_pairs(const std::vector<AlignedToken>& filtered, const EditTable& observed,
                                              std::uint64_t seed, GenerationReport& report) {
  Rng rng(seed);
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::string>> variants;
  std::set<std::string> observed_strings;
  std::set<char32_t> alphabet_set;
  for (const auto& t : filtered) {
    auto [it, inserted] = variants.try_emplace(t.corrected);
    if (inserted) order.push_back(t.corrected);
    if (std::find(it->second.begin(), it->second.end(), t.ocr) == it->second.end()) it->second.push_back(t.ocr);
    observed_strings.insert(t.ocr);
    observed_strings.insert(t.corrected);
    for (char32_t c : text::to_u32(t.ocr)) alphabet_set.insert(c);
    for (char32_t c : text::to_u32(t.corrected)) alphabet_set.insert(c);
  }
  const std::vector<char32_t> alphabet(alphabet_set.begin(), alphabet_set.end());

  auto random_edit = [&](std::u32string s) {
    const int kind = s.size() > 1 ? static_cast<int>(rng.below(3)) : static_cast<int>(rng.below(2));
    const auto pick = [&] { return alphabet[rng.below(alphabet.size())]; };
    if (kind == 0) {
      s[rng.below(s.size())] = pick();
    } else if (kind == 1) {
      s.insert(s.begin() + static_cast<std::ptrdiff_t>(rng.below(s.size() + 1)), pick());
    } else {
      s.erase(s.begin() + static_cast<std::ptrdiff_t>(rng.below(s.size())));
    }
    return s;
  };

  std::vector<LabeledPair> pos, neg;
  for (const auto& corrected : order) {
    const auto& vs = variants.at(corrected);
    for (const auto& v : vs) pos.push_back({corrected, v, true});
    const std::u32string source = text::to_u32(corrected);
    std::set<std::string> made;
    for (std::size_t n = 0; n < vs.size(); ++n) {
      bool ok = false;
      for (std::size_t attempt = 0; attempt < kMaxNegativeAttempts && !ok; ++attempt) {
        std::u32string cand = random_edit(source);
        if (rng.below(2) == 1) cand = random_edit(cand);
        if (cand.empty() || cand == source) continue;
        const std::string cand8 = text::to_utf8(cand);
        if (observed_strings.count(cand8) || made.count(cand8)) continue;
        const auto script = edit_script(cand, source);
        if (std::none_of(script.begin(), script.end(), [&](const auto& op) { return !observed.count(op); })) continue;
        made.insert(cand8);
        neg.push_back({corrected, cand8, false});
        ok = true;
      }
      if (!ok) {
        throw InputError("could not build an unobserved transformation of '" + corrected + "' after " +
                         std::to_string(kMaxNegativeAttempts) + " attempts; alphabet too small");
      }
    }
  }
  report.counts["observed_positives"] = pos.size();
  report.counts["synthetic_negatives"] = neg.size();
  report.counts["generated_positives"] = pos.size();
  report.counts["generated_negatives"] = neg.size();
  std::vector<LabeledPair> out = std::move(pos);
  out.insert(out.end(), neg.begin(), neg.end());
  return out;
}

struct PostprocessResult {
  std::vector<LabeledPair> train_val;
  std::vector<LabeledPair> test;
};

/// Drops empty elements and duplicate unordered pairs (both copies when the
/// labels disagree), removes random pairs of the majority label until the
/// classes balance, then splits (1 - test_ratio) / test_ratio per class.
inline PostprocessResult postprocess(const std::vector<LabeledPair>& pairs, std::uint64_t seed,
                                     GenerationReport& report, double test_ratio = 0.1) {
  if (test_ratio < 0.0 || test_ratio > 1.0) throw InputError("test ratio must lie in [0, 1]");
  Rng rng(seed ^ 0x9E3779B97F4A7C15ULL);
  std::map<std::pair<std::string, std::string>, std::set<bool>> labels_of;
  std::size_t empty = 0;
  for (const auto& p : pairs) {
    if (text::trim(p.first).empty() || text::trim(p.second).empty()) {
      ++empty;
      continue;
    }
    labels_of[detail::unordered_key(p.first, p.second)].insert(p.label);
  }
  std::set<std::pair<std::string, std::string>> seen;
  std::vector<LabeledPair> pos, neg;
  std::size_t duplicates = 0, conflicting = 0;
  for (const auto& p : pairs) {
    if (text::trim(p.first).empty() || text::trim(p.second).empty()) continue;
    const auto key = detail::unordered_key(p.first, p.second);
    if (labels_of.at(key).size() > 1) {
      ++conflicting;
      continue;
    }
    if (!seen.insert(key).second) {
      ++duplicates;
      continue;
    }
    (p.label ? pos : neg).push_back(p);
  }
  auto& larger = pos.size() > neg.size() ? pos : neg;
  const std::size_t excess = pos.size() > neg.size() ? pos.size() - neg.size() : neg.size() - pos.size();
  for (std::size_t i = 0; i < excess; ++i) larger.erase(larger.begin() + static_cast<std::ptrdiff_t>(rng.below(larger.size())));

  rng.shuffle(pos.begin(), pos.end());
  rng.shuffle(neg.begin(), neg.end());
  const auto n_test = static_cast<std::size_t>(std::llround(test_ratio * static_cast<double>(pos.size())));
  PostprocessResult r;
  for (auto* cls : {&pos, &neg}) {
    r.test.insert(r.test.end(), cls->begin(), cls->begin() + static_cast<std::ptrdiff_t>(n_test));
    r.train_val.insert(r.train_val.end(), cls->begin() + static_cast<std::ptrdiff_t>(n_test), cls->end());
  }
  rng.shuffle(r.train_val.begin(), r.train_val.end());
  rng.shuffle(r.test.begin(), r.test.end());

  report.counts["input_pairs"] = pairs.size();
  report.counts["dropped_empty"] = empty;
  report.counts["dropped_duplicates"] = duplicates;
  report.counts["dropped_conflicting_labels"] = conflicting;
  report.counts["dropped_rebalance"] = excess;
  report.counts["positives"] = pos.size();
  report.counts["negatives"] = neg.size();
  report.counts["train_val"] = r.train_val.size();
  report.counts["test"] = r.test.size();
  return r;
}

}  // namespace topomatch
