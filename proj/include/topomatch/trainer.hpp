#pragma once

// Dataset splitting, the training loop with per-epoch logging and early
// stopping, fine-tuning and inference over labeled pairs.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "topomatch/checkpoint.hpp"
#include "topomatch/errors.hpp"
#include "topomatch/eval.hpp"
#include "topomatch/model.hpp"
#include "topomatch/pairs.hpp"
#include "topomatch/preprocess.hpp"
#include "topomatch/rng.hpp"

namespace topomatch {

struct SplitSpec {
  double train_ratio = 0.72;
  double val_ratio = 0.18;
  double test_ratio = 0.10;
  std::uint64_t seed = 42;

  void validate() const {
    for (double r : {train_ratio, val_ratio, test_ratio}) {
      if (!(r >= 0.0)) throw InputError("split ratios must be non-negative");
    }
    if (std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9) throw InputError("split ratios must sum to 1");
  }
};

/// Sizes by largest-remainder rounding; remainder ties go to the earlier split.
inline std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitSpec& spec) {
  const std::array<double, 3> ratios{spec.train_ratio, spec.val_ratio, spec.test_ratio};
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = ratios[i] * static_cast<double>(n);
    sizes[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    rem[i] = exact - static_cast<double>(sizes[i]);
    assigned += sizes[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++sizes[order[k % 3]];
  return sizes;
}

template <typename T>
struct Split {
  std::vector<T> train;
  std::vector<T> val;
  std::vector<T> test;
};

/// Seeded shuffle, then contiguous train / val / test slices.
template <typename T>
Split<T> split_dataset(std::vector<T> items, const SplitSpec& spec) {
  spec.validate();
  if (items.empty()) throw InputError("cannot split an empty dataset");
  const auto sizes = split_sizes(items.size(), spec);
  const std::array<double, 3> ratios{spec.train_ratio, spec.val_ratio, spec.test_ratio};
  static constexpr const char* names[] = {"train", "validation", "test"};
  for (std::size_t i = 0; i < 3; ++i) {
    if (ratios[i] > 0.0 && sizes[i] == 0) {
      throw InputError(std::string(names[i]) + " split is empty although its ratio is positive");
    }
  }
  Rng rng(spec.seed);
  rng.shuffle(items.begin(), items.end());
  Split<T> s;
  auto it = items.begin();
  s.train.assign(it, it + static_cast<std::ptrdiff_t>(sizes[0]));
  it += static_cast<std::ptrdiff_t>(sizes[0]);
  s.val.assign(it, it + static_cast<std::ptrdiff_t>(sizes[1]));
  it += static_cast<std::ptrdiff_t>(sizes[1]);
  s.test.assign(it, items.end());
  return s;
}

/// Stops once validation loss has gone `patience` epochs without a strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {
    if (patience < 1) throw InputError("patience must be at least 1");
  }

  /// Records an epoch; returns true if it is the new best.
  bool update(int epoch, double val_loss) {
    if (!best_epoch_ || val_loss < best_loss_) {
      best_loss_ = val_loss;
      best_epoch_ = epoch;
      since_best_ = 0;
      return true;
    }
    ++since_best_;
    return false;
  }

  bool should_stop() const { return since_best_ >= patience_; }
  std::optional<int> best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  int patience_;
  double best_loss_ = 0.0;
  std::optional<int> best_epoch_;
  int since_best_ = 0;
};

struct EpochRow {
  int epoch = 0;
  double train_loss = 0.0;
  BinaryMetrics train;
  double val_loss = 0.0;
  BinaryMetrics val;
};

struct EpochLog {
  std::vector<EpochRow> rows;
  int selected_epoch = 0;

  std::string to_tsv() const {
    std::string out =
        "epoch\ttrain_loss\ttrain_accuracy\ttrain_precision\ttrain_recall\ttrain_f1\ttrain_macro_f1\t"
        "val_loss\tval_accuracy\tval_precision\tval_recall\tval_f1\tval_macro_f1\tselected\n";
    char buf[512];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%d\t%.6f\t%.4f\t%.4f\t%.4f\t%.4f\t%.4f\t%.6f\t%.4f\t%.4f\t%.4f\t%.4f\t%.4f\t%s\n",
                    r.epoch, r.train_loss, r.train.accuracy, r.train.precision, r.train.recall, r.train.f1,
                    r.train.macro_f1, r.val_loss, r.val.accuracy, r.val.precision, r.val.recall, r.val.f1,
                    r.val.macro_f1, r.epoch == selected_epoch ? "*" : "");
      out += buf;
    }
    return out;
  }
};

struct TrainOptions {
  int max_epochs = 10;
  int patience = 1;
  std::uint64_t seed = 42;
  unsigned threads = 1;
  /// Called after every epoch with the new row, for progress output.
  std::function<void(const EpochRow&)> on_epoch;
};

struct TrainResult {
  ModelCheckpoint checkpoint;
  EpochLog log;
};

/// Encodes pairs; pairs with an element that normalizes to nothing are skipped.
inline std::vector<EncodedPair> encode_pairs(const std::vector<LabeledPair>& pairs, const Vocabulary& vocab,
                                             const PreprocessOptions& opts, std::size_t* skipped = nullptr) {
  std::vector<EncodedPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    auto a = prepare(p.first, vocab, opts);
    auto b = prepare(p.second, vocab, opts);
    if (!a || !b) {
      if (skipped) ++*skipped;
      continue;
    }
    out.push_back({std::move(*a), std::move(*b), p.label});
  }
  return out;
}

/// Runs `fn(i)` for i in [0, n) over `threads` workers with a strided split.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct PairEvaluation {
  std::vector<float> probabilities;
  double loss = 0.0;
  BinaryMetrics metrics;
};

/// Eval-mode probabilities, mean loss and metrics at the 0.5 threshold.
inline PairEvaluation evaluate_pairs(const Model<float>& model, const std::vector<EncodedPair>& pairs,
                                     unsigned threads = 1) {
  if (pairs.empty()) throw InputError("cannot evaluate an empty pair set");
  PairEvaluation ev;
  ev.probabilities.resize(pairs.size());
  parallel_for(pairs.size(), threads,
               [&](std::size_t i) { ev.probabilities[i] = classify_pair(model, pairs[i].first, pairs[i].second); });
  std::vector<bool> predictions(pairs.size()), labels(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    ev.loss += loss_bce(ev.probabilities[i], pairs[i].label);
    predictions[i] = ev.probabilities[i] >= 0.5f;
    labels[i] = pairs[i].label;
  }
  ev.loss /= static_cast<double>(pairs.size());
  ev.metrics = binary_metrics(predictions, labels);
  return ev;
}

namespace detail {

inline nlohmann::json epoch_metrics_json(const EpochRow& r) {
  return {{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_loss", r.val_loss}, {"val", r.val.to_json()}};
}

/// Shared loop of train and finetune. `ck` holds the starting model and is
/// replaced by the best-validation-loss state.
inline EpochLog run_epochs(ModelCheckpoint& ck, const std::vector<EncodedPair>& train,
                           const std::vector<EncodedPair>& val, const TrainOptions& options) {
  if (train.empty()) throw InputError("training split is empty");
  if (val.empty()) throw InputError("validation split is empty");
  const auto& cfg = ck.model.config;
  Rng rng(options.seed + 1);
  auto adam = AdamState<float>::for_model(ck.model);
  EarlyStopping stopper(options.patience);
  EpochLog log;
  Model<float> best = ck.model;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<EncodedPair> batch;
  std::vector<float> probs;
  for (int epoch = 1; epoch <= options.max_epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    probs.clear();
    std::vector<bool> labels;
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(train[order[i]]);
        labels.push_back(train[order[i]].label);
      }
      loss_sum += backward_and_step(ck.model, adam, std::span<const EncodedPair>(batch), cfg.learning_rate, &rng,
                                    &probs) *
                  static_cast<double>(batch.size());
    }
    EpochRow row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(train.size());
    std::vector<bool> predictions(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) predictions[i] = probs[i] >= 0.5f;
    row.train = binary_metrics(predictions, labels);
    const auto ev = evaluate_pairs(ck.model, val, options.threads);
    row.val_loss = ev.loss;
    row.val = ev.metrics;
    log.rows.push_back(row);
    if (stopper.update(epoch, row.val_loss)) {
      best = ck.model;
      ck.epoch = epoch;
      ck.metrics = epoch_metrics_json(row);
    }
    if (options.on_epoch) options.on_epoch(row);
    if (stopper.should_stop()) break;
  }
  ck.model = std::move(best);
  log.selected_epoch = stopper.best_epoch().value_or(0);
  return log;
}

}  // namespace detail

/// Trains a fresh model. The vocabulary covers every character of the
/// normalized training and validation strings.
inline TrainResult train(const ModelConfig& config, const PreprocessOptions& preprocess,
                         const std::vector<LabeledPair>& train_pairs, const std::vector<LabeledPair>& val_pairs,
                         const TrainOptions& options) {
  config.validate();
  preprocess.validate();
  if (options.max_epochs < 1) throw InputError("max_epochs must be at least 1");
  std::vector<std::string> corpus;
  for (const auto* set : {&train_pairs, &val_pairs}) {
    for (const auto& p : *set) {
      for (const auto* s : {&p.first, &p.second}) {
        if (auto n = normalize_string(*s, preprocess)) corpus.push_back(std::move(*n));
      }
    }
  }
  if (corpus.empty()) throw InputError("training data contains no usable strings");
  TrainResult r;
  r.checkpoint.preprocess = preprocess;
  r.checkpoint.vocab = build_vocab(corpus, preprocess);
  r.checkpoint.seed = options.seed;
  r.checkpoint.model = init_model<float>(config, r.checkpoint.vocab, options.seed);
  const auto train_enc = encode_pairs(train_pairs, r.checkpoint.vocab, preprocess);
  const auto val_enc = encode_pairs(val_pairs, r.checkpoint.vocab, preprocess);
  r.log = detail::run_epochs(r.checkpoint, train_enc, val_enc, options);
  return r;
}

/// Continues training from `parent` with a fresh optimizer. The vocabulary
/// stays frozen; unseen characters encode as UNK. `learning_rate`, when set,
/// replaces the parent's.
inline TrainResult finetune(const ModelCheckpoint& parent, const std::vector<LabeledPair>& train_pairs,
                            const std::vector<LabeledPair>& val_pairs, const TrainOptions& options,
                            std::optional<double> learning_rate = std::nullopt) {
  TrainResult r;
  r.checkpoint = parent;
  r.checkpoint.parent_fingerprint = parent.fingerprint();
  r.checkpoint.seed = options.seed;
  if (learning_rate) {
    r.checkpoint.model.config.learning_rate = *learning_rate;
    r.checkpoint.model.config.validate();
  }
  if (options.max_epochs == 0) {
    r.checkpoint.epoch = 0;
    return r;
  }
  if (options.max_epochs < 0) throw InputError("max_epochs must be non-negative");
  const auto train_enc = encode_pairs(train_pairs, parent.vocab, parent.preprocess);
  const auto val_enc = encode_pairs(val_pairs, parent.vocab, parent.preprocess);
  r.log = detail::run_epochs(r.checkpoint, train_enc, val_enc, options);
  return r;
}

struct InferenceResult {
  std::vector<LabeledPair> pairs;
  std::vector<float> probabilities;
  double loss = 0.0;
  BinaryMetrics metrics;
  std::size_t skipped = 0;

  /// string1, string2, gold label, probability, predicted label.
  std::string to_tsv() const {
    std::string out;
    char buf[64];
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      std::snprintf(buf, sizeof buf, "\t%.6f\t", static_cast<double>(probabilities[i]));
      out += pairs[i].first + "\t" + pairs[i].second + (pairs[i].label ? "\tTRUE" : "\tFALSE") + buf +
             (probabilities[i] >= 0.5f ? "TRUE\n" : "FALSE\n");
    }
    return out;
  }
};

inline InferenceResult infer(const ModelCheckpoint& ck, const std::vector<LabeledPair>& pairs, unsigned threads = 1) {
  InferenceResult r;
  std::vector<EncodedPair> enc;
  for (const auto& p : pairs) {
    auto a = prepare(p.first, ck.vocab, ck.preprocess);
    auto b = prepare(p.second, ck.vocab, ck.preprocess);
    if (!a || !b) {
      ++r.skipped;
      continue;
    }
    enc.push_back({std::move(*a), std::move(*b), p.label});
    r.pairs.push_back(p);
  }
  const auto ev = evaluate_pairs(ck.model, enc, threads);
  r.probabilities = ev.probabilities;
  r.loss = ev.loss;
  r.metrics = ev.metrics;
  return r;
}

}  // namespace topomatch
