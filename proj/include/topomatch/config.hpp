#pragma once

// Flat `key = value` configuration for the command-line tool. Lines starting
// with '#' are comments. Unknown keys are rejected; missing keys keep their
// defaults.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "topomatch/errors.hpp"
#include "topomatch/model.hpp"
#include "topomatch/preprocess.hpp"
#include "topomatch/text.hpp"
#include "topomatch/trainer.hpp"

namespace topomatch {

struct ToolConfig {
  ModelConfig model;
  PreprocessOptions preprocess;
  SplitSpec split;
  std::uint64_t seed = 42;
  int max_epochs = 10;
  int patience = 1;
  unsigned threads = 1;
  std::size_t k = 20;
  double tolerance_km = 10.0;

  /// Documentation for --help.
  struct KeyDoc {
    std::string key;
    std::string description;
  };

  static const std::vector<KeyDoc>& documented_keys() {
    static const std::vector<KeyDoc> keys = {
        {"rnn_type", "recurrent cell: gru | lstm | rnn (default gru)"},
        {"embedding_dim", "character embedding size (default 60)"},
        {"hidden_dim", "recurrent hidden state size (default 60)"},
        {"num_layers", "stacked recurrent layers (default 2)"},
        {"bidirectional", "true | false (default true)"},
        {"ff_hidden_dim", "feed-forward hidden layer size (default 120)"},
        {"dropout_p", "dropout probability (default 0.01)"},
        {"learning_rate", "Adam learning rate (default 0.001)"},
        {"batch_size", "mini-batch size (default 64)"},
        {"combination_mode", "pair combination: one_minus_sq_absdiff (default)"},
        {"ascii_normalize", "strip combining marks after decomposition (default true)"},
        {"lowercase", "lower-case strings (default false)"},
        {"strip_whitespace", "trim leading and trailing whitespace (default true)"},
        {"boundary_marker", "single character added at both ends (default |)"},
        {"max_seq_len", "encoded length, at least 3 (default 120)"},
        {"train_ratio", "training share of the pair file (default 0.72)"},
        {"val_ratio", "validation share (default 0.18)"},
        {"test_ratio", "test share (default 0.10)"},
        {"seed", "seed for splitting, initialization, dropout and generation (default 42)"},
        {"max_epochs", "epoch cap (default 10)"},
        {"patience", "epochs without validation improvement before stopping (default 1)"},
        {"threads", "worker threads for vectorization, ranking and evaluation (default 1)"},
        {"k", "candidates per query (default 20)"},
        {"tolerance_km", "relevance radius for evaluation (default 10)"},
    };
    return keys;
  }

  void set(const std::string& key, const std::string& value, const std::string& source = "config",
           std::size_t line = 0) {
    auto fail = [&](const std::string& what) -> InputError {
      return line ? InputError(source, line, what) : InputError(source + ": " + what);
    };
    auto as_int = [&]() -> long long {
      long long v = 0;
      const auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
      if (value.empty() || ec != std::errc() || p != value.data() + value.size()) {
        throw fail("'" + key + "' expects an integer, got '" + value + "'");
      }
      return v;
    };
    auto as_uint = [&]() -> std::uint64_t {
      const long long v = as_int();
      if (v < 0) throw fail("'" + key + "' must be non-negative");
      return static_cast<std::uint64_t>(v);
    };
    auto as_double = [&]() -> double {
      double v = 0;
      const auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
      if (value.empty() || ec != std::errc() || p != value.data() + value.size()) {
        throw fail("'" + key + "' expects a number, got '" + value + "'");
      }
      return v;
    };
    auto as_bool = [&]() -> bool {
      const std::string v = text::to_lower(value);
      if (v == "true" || v == "1" || v == "yes") return true;
      if (v == "false" || v == "0" || v == "no") return false;
      throw fail("'" + key + "' expects true or false, got '" + value + "'");
    };
    auto parsed = [&](auto parse) {
      try {
        return parse(value);
      } catch (const Error& e) {
        throw fail(e.what());
      }
    };
    if (key == "rnn_type") model.rnn_type = parsed(parse_rnn_type);
    else if (key == "embedding_dim") model.embedding_dim = static_cast<int>(as_int());
    else if (key == "hidden_dim") model.hidden_dim = static_cast<int>(as_int());
    else if (key == "num_layers") model.num_layers = static_cast<int>(as_int());
    else if (key == "bidirectional") model.bidirectional = as_bool();
    else if (key == "ff_hidden_dim") model.ff_hidden_dim = static_cast<int>(as_int());
    else if (key == "dropout_p") model.dropout_p = as_double();
    else if (key == "learning_rate") model.learning_rate = as_double();
    else if (key == "batch_size") model.batch_size = static_cast<int>(as_int());
    else if (key == "combination_mode") model.combination_mode = parsed(parse_combination_mode);
    else if (key == "ascii_normalize") preprocess.ascii_normalize = as_bool();
    else if (key == "lowercase") preprocess.lowercase = as_bool();
    else if (key == "strip_whitespace") preprocess.strip_whitespace = as_bool();
    else if (key == "boundary_marker") {
      const auto cps = text::to_u32(value);
      if (cps.size() != 1) throw fail("'boundary_marker' must be exactly one character");
      preprocess.boundary_marker = cps[0];
    } else if (key == "max_seq_len") preprocess.max_seq_len = static_cast<int>(as_int());
    else if (key == "train_ratio") split.train_ratio = as_double();
    else if (key == "val_ratio") split.val_ratio = as_double();
    else if (key == "test_ratio") split.test_ratio = as_double();
    else if (key == "seed") seed = as_uint();
    else if (key == "max_epochs") max_epochs = static_cast<int>(as_int());
    else if (key == "patience") patience = static_cast<int>(as_int());
    else if (key == "threads") threads = static_cast<unsigned>(std::max<std::uint64_t>(1, as_uint()));
    else if (key == "k") k = static_cast<std::size_t>(as_uint());
    else if (key == "tolerance_km") tolerance_km = as_double();
    else throw fail("unknown configuration key '" + key + "'");
  }

  void validate() const {
    model.validate();
    preprocess.validate();
    split.validate();
    if (max_epochs < 0) throw InputError("max_epochs must be non-negative");
    if (patience < 1) throw InputError("patience must be at least 1");
    if (k < 1) throw InputError("k must be at least 1");
    if (!(tolerance_km >= 0.0)) throw InputError("tolerance_km must be non-negative");
  }

  void load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config file " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string t = text::trim(line);
      if (t.empty() || t[0] == '#') continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos) throw InputError(path.string(), lineno, "expected key = value");
      set(text::trim(t.substr(0, eq)), text::trim(t.substr(eq + 1)), path.string(), lineno);
    }
    split.seed = seed;
  }

  nlohmann::json to_json() const {
    return {{"model", model.to_json()},
            {"preprocess", preprocess.to_json()},
            {"split", {{"train_ratio", split.train_ratio}, {"val_ratio", split.val_ratio}, {"test_ratio", split.test_ratio}}},
            {"seed", seed},
            {"max_epochs", max_epochs},
            {"patience", patience},
            {"k", k},
            {"tolerance_km", tolerance_km}};
  }
};

}  // namespace topomatch
