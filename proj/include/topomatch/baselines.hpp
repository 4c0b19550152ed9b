#pragma once

// String-similarity comparators: a tuned-threshold pair classifier, exact
// candidate lookup and similarity-ranked candidate retrieval.

#include <algorithm>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "topomatch/candidates.hpp"
#include "topomatch/edit_distance.hpp"
#include "topomatch/errors.hpp"
#include "topomatch/eval.hpp"
#include "topomatch/gazetteer.hpp"
#include "topomatch/pairs.hpp"

namespace topomatch {

struct ThresholdModel {
  double threshold = 0.5;
  double train_f1 = 0.0;

  bool predict(double similarity) const { return similarity >= threshold; }
};

/// Picks the threshold maximizing F1 over {0, 1} and every observed
/// similarity. Ties go to the smallest threshold.
inline ThresholdModel tune_threshold(const std::vector<double>& similarities, const std::vector<bool>& labels) {
  if (similarities.size() != labels.size()) throw ConsistencyError("similarities and labels differ in length");
  const auto positives = std::count(labels.begin(), labels.end(), true);
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(labels.size())) {
    throw InputError("threshold tuning needs both positive and negative pairs");
  }
  std::set<double> candidates(similarities.begin(), similarities.end());
  candidates.insert(0.0);
  candidates.insert(1.0);
  ThresholdModel best{0.0, -1.0};
  std::vector<bool> predictions(labels.size());
  for (double t : candidates) {
    for (std::size_t i = 0; i < labels.size(); ++i) predictions[i] = similarities[i] >= t;
    const double f1 = binary_metrics(predictions, labels).f1;
    if (f1 > best.train_f1) best = {t, f1};
  }
  return best;
}

inline ThresholdModel tune_threshold(const std::vector<LabeledPair>& pairs) {
  std::vector<double> sims;
  std::vector<bool> labels;
  for (const auto& p : pairs) {
    sims.push_back(dl_similarity(p.first, p.second));
    labels.push_back(p.label);
  }
  return tune_threshold(sims, labels);
}

struct ExactMatch {
  std::string key;
  std::set<std::string> spellings;
  std::set<std::string> location_ids;
};

/// Case-insensitive lookup after the gazetteer's normalization.
inline std::optional<ExactMatch> exact_candidates(const std::string& query, const Gazetteer& gazetteer) {
  const std::string k = gazetteer.key(query);
  const auto it = gazetteer.key_index().find(k);
  if (it == gazetteer.key_index().end()) return std::nullopt;
  return ExactMatch{k, gazetteer.key_spellings().at(k), it->second};
}

/// Exact matches in the shared ranked format: every matching spelling at distance 0.
inline RankedCandidates exact_ranked(const std::string& query, const Gazetteer& gazetteer) {
  RankedCandidates r{query, {}};
  if (const auto m = exact_candidates(query, gazetteer)) {
    for (const auto& s : m->spellings) {
      const auto& ids = gazetteer.altnames().at(s);
      r.items.push_back({s, 0.0, std::vector<std::string>(ids.begin(), ids.end())});
    }
  }
  return r;
}

/// Ranks every gazetteer altname by normalized DL similarity to the query.
/// The reported distance is 1 - similarity.
class LevDamRanker {
 public:
  LevDamRanker(std::vector<std::string> altnames, std::vector<std::vector<std::string>> ids, bool case_insensitive)
      : names_(std::move(altnames)), ids_(std::move(ids)), case_insensitive_(case_insensitive) {
    if (names_.size() != ids_.size()) throw ConsistencyError("altname and id lists differ in length");
    folded_.reserve(names_.size());
    for (const auto& n : names_) folded_.push_back(prepare(n));
  }

  static LevDamRanker from_gazetteer(const Gazetteer& g, bool case_insensitive = true) {
    std::vector<std::string> names;
    std::vector<std::vector<std::string>> ids;
    for (const auto& [name, id_set] : g.altnames()) {
      names.push_back(name);
      ids.emplace_back(id_set.begin(), id_set.end());
    }
    return LevDamRanker(std::move(names), std::move(ids), case_insensitive);
  }

  std::size_t size() const { return names_.size(); }

  RankedCandidates rank(const std::string& query, std::size_t k) const {
    const std::u32string q = prepare(query);
    std::vector<std::pair<double, std::size_t>> scored(names_.size());
    for (std::size_t i = 0; i < names_.size(); ++i) scored[i] = {1.0 - dl_similarity(q, folded_[i]), i};
    const std::size_t n = std::min(k, scored.size());
    auto less = [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return names_[a.second] < names_[b.second];
    };
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), less);
    RankedCandidates r{query, {}};
    for (std::size_t i = 0; i < n; ++i) {
      const auto idx = scored[i].second;
      r.items.push_back({names_[idx], scored[i].first, ids_[idx]});
    }
    return r;
  }

  /// Ranks all queries, splitting them across `threads` workers. Output order follows input.
  std::vector<RankedCandidates> rank_all(const std::vector<std::string>& queries, std::size_t k,
                                         unsigned threads = 1) const {
    std::vector<RankedCandidates> out(queries.size());
    const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(queries.size())));
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < queries.size(); i += workers) out[i] = rank(queries[i], k);
      });
    }
    for (auto& t : pool) t.join();
    return out;
  }

 private:
  std::u32string prepare(const std::string& s) const {
    return case_insensitive_ ? text::fold_case(text::to_u32(s)) : text::to_u32(s);
  }

  std::vector<std::string> names_;
  std::vector<std::vector<std::string>> ids_;
  std::vector<std::u32string> folded_;
  bool case_insensitive_;
};

}  // namespace topomatch
