// Command-line front end: pair generation, training, inference, indexing,
// ranking, baselines and evaluation.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "topomatch/topomatch.hpp"

namespace fs = std::filesystem;
using namespace topomatch;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitConsistency = 3;
constexpr int kExitNumeric = 4;

const char* kFormats = R"(File formats:
  gazetteer TSV      location_id <TAB> primary_name <TAB> lat <TAB> lon <TAB> altname  (one row per altname)
  pair TSV           string1 <TAB> string2 <TAB> TRUE|FALSE  (no header)
  aligned tokens     ocr_token <TAB> corrected_token
  gold TSV           toponym <TAB> lat <TAB> lon
  queries            one query per line; only the first tab-separated field is used
  ranked results     JSON lines {"query", "candidates": [{"altname", "distance", "location_ids"}]}
  vector index       binary "DZVIX1" file plus <index>.meta.jsonl row metadata
  checkpoint         binary "TMCKPT01" file with JSON metadata and float32 tensors
)";

std::string config_help() {
  std::string out = "Configuration file (key = value, '#' comments, flags override):\n";
  for (const auto& d : ToolConfig::documented_keys()) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "  %-18s %s\n", d.key.c_str(), d.description.c_str());
    out += buf;
  }
  return out;
}

/// Options shared by every subcommand.
struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<int> max_epochs;
  std::optional<int> patience;

  void attach(CLI::App* app, bool training = false) {
    app->add_option("--config", config, "key = value configuration file")->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "random seed (overrides the config)");
    app->add_option("--threads", threads, "worker threads; results do not depend on this");
    if (training) {
      app->add_option("--max-epochs", max_epochs, "epoch cap (overrides the config)");
      app->add_option("--patience", patience, "early-stopping patience (overrides the config)");
    }
  }

  ToolConfig resolve() const {
    ToolConfig c;
    if (!config.empty()) c.load(config);
    if (seed) c.seed = *seed;
    if (threads) c.threads = std::max(1u, *threads);
    if (max_epochs) c.max_epochs = *max_epochs;
    if (patience) c.patience = *patience;
    c.split.seed = c.seed;
    c.validate();
    return c;
  }
};

void write_json(const fs::path& path, const json& j) { io::write_file(path, j.dump(2) + "\n"); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Unique queries in first-seen order; lower-cased unless `keep_case`.
std::vector<std::string> read_queries(const fs::path& path, bool keep_case) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open query file " + path.string());
  std::vector<std::string> out;
  std::set<std::string> seen;
  std::string line;
  while (std::getline(in, line)) {
    const auto f = split_tabs(line);
    if (f.empty()) continue;
    std::string q = text::trim(f[0]);
    if (q.empty()) continue;
    if (!keep_case) q = text::to_lower(q);
    if (seen.insert(q).second) out.push_back(std::move(q));
  }
  return out;
}

fs::path timing_path(const fs::path& results) { return fs::path(results.string() + ".timing.json"); }

void write_timing(const fs::path& results, const std::string& method, double seconds, std::size_t queries,
                  const ToolConfig& cfg) {
  write_json(timing_path(results),
             {{"method", method}, {"seconds", seconds}, {"queries", queries}, {"seed", cfg.seed}, {"threads", cfg.threads}});
  std::printf("wall time: %.3f s for %zu queries\n", seconds, queries);
}

// gen-pairs ------------------------------------------------------------------

struct GenPairsArgs {
  CommonOptions common;
  std::string mode = "gazetteer";
  std::string input;
  std::string out;
  double test_ratio = 0.1;
};

int run_gen_pairs(const GenPairsArgs& a) {
  const ToolConfig cfg = a.common.resolve();
  GenerationReport report;
  report.mode = a.mode;
  report.seed = cfg.seed;
  std::vector<LabeledPair> pairs;
  if (a.mode == "gazetteer") {
    const Gazetteer gaz = load_gazetteer(a.input, cfg.preprocess);
    pairs = gen_gazetteer_pairs(gaz, cfg.seed, {}, report);
  } else {
    const auto tokens = read_aligned_tokens(a.input);
    const auto filtered = filter_ocr_pairs(tokens);
    report.counts["aligned_tokens"] = tokens.size();
    for (std::size_t i = 0; i < filtered.dropped.size(); ++i) {
      report.counts["dropped_rule_" + std::to_string(i + 1)] = filtered.dropped[i];
    }
    report.counts["kept_tokens"] = filtered.kept.size();
    report.counts["observed_operations"] = filtered.observed.size();
    pairs = gen_ocr_pairs(filtered.kept, filtered.observed, cfg.seed, report);
  }
  const auto split = postprocess(pairs, cfg.seed, report, a.test_ratio);
  const fs::path dir = a.out;
  write_pairs(dir / "train_val.tsv", split.train_val);
  write_pairs(dir / "test.tsv", split.test);
  write_json(dir / "report.json", report.to_json());
  std::printf("%zu train/validation pairs, %zu test pairs written to %s\n", split.train_val.size(), split.test.size(),
              dir.string().c_str());
  return kExitOk;
}

// train / finetune / inference -----------------------------------------------

struct TrainArgs {
  CommonOptions common;
  std::string pairs;
  std::string test;
  std::string out;
  std::string parent;  // finetune only
  std::optional<double> learning_rate;
};

Split<LabeledPair> split_for_training(const TrainArgs& a, const ToolConfig& cfg) {
  auto pairs = read_pairs(fs::path(a.pairs));
  if (a.test.empty()) return split_dataset(std::move(pairs), cfg.split);
  // A separate test file: the pair file only feeds training and validation.
  SplitSpec tv = cfg.split;
  const double sum = tv.train_ratio + tv.val_ratio;
  if (sum <= 0.0) throw InputError("train_ratio + val_ratio must be positive");
  tv.train_ratio /= sum;
  tv.val_ratio = 1.0 - tv.train_ratio;
  tv.test_ratio = 0.0;
  auto s = split_dataset(std::move(pairs), tv);
  s.test = read_pairs(fs::path(a.test));
  return s;
}

int finish_training(const TrainArgs& a, const ToolConfig& cfg, const Split<LabeledPair>& s, const TrainResult& r) {
  const fs::path dir = a.out;
  r.checkpoint.save(dir / "model.ckpt");
  io::write_file(dir / "epochs.tsv", r.log.to_tsv());
  write_pairs(dir / "train.tsv", s.train);
  write_pairs(dir / "val.tsv", s.val);
  json metrics = {{"seed", cfg.seed},
                  {"fingerprint", r.checkpoint.fingerprint()},
                  {"selected_epoch", r.log.selected_epoch},
                  {"epochs_run", r.log.rows.size()},
                  {"train_pairs", s.train.size()},
                  {"val_pairs", s.val.size()},
                  {"config", cfg.to_json()}};
  if (r.checkpoint.parent_fingerprint) metrics["parent_fingerprint"] = *r.checkpoint.parent_fingerprint;
  for (const auto& row : r.log.rows) {
    if (row.epoch == r.log.selected_epoch) metrics["val"] = detail::epoch_metrics_json(row);
  }
  if (!s.test.empty()) {
    write_pairs(dir / "test.tsv", s.test);
    const auto inf = infer(r.checkpoint, s.test, cfg.threads);
    metrics["test"] = {{"pairs", inf.pairs.size()}, {"loss", inf.loss}, {"metrics", inf.metrics.to_json()}};
    std::printf("test F1 %.4f (precision %.4f, recall %.4f, accuracy %.4f) on %zu pairs\n", inf.metrics.f1,
                inf.metrics.precision, inf.metrics.recall, inf.metrics.accuracy, inf.pairs.size());
  }
  write_json(dir / "metrics.json", metrics);
  std::printf("selected epoch %d; checkpoint %s\n", r.log.selected_epoch, (dir / "model.ckpt").string().c_str());
  return kExitOk;
}

TrainOptions train_options(const ToolConfig& cfg) {
  TrainOptions o;
  o.max_epochs = cfg.max_epochs;
  o.patience = cfg.patience;
  o.seed = cfg.seed;
  o.threads = cfg.threads;
  o.on_epoch = [](const EpochRow& r) {
    std::fprintf(stderr, "epoch %d  train loss %.4f  val loss %.4f  val F1 %.4f  val acc %.4f\n", r.epoch, r.train_loss,
                 r.val_loss, r.val.f1, r.val.accuracy);
  };
  return o;
}

int run_train(const TrainArgs& a) {
  const ToolConfig cfg = a.common.resolve();
  const auto s = split_for_training(a, cfg);
  const auto r = train(cfg.model, cfg.preprocess, s.train, s.val, train_options(cfg));
  return finish_training(a, cfg, s, r);
}

int run_finetune(const TrainArgs& a) {
  const ToolConfig cfg = a.common.resolve();
  const auto parent = ModelCheckpoint::load(a.parent);
  const auto s = split_for_training(a, cfg);
  const auto r = finetune(parent, s.train, s.val, train_options(cfg), a.learning_rate);
  return finish_training(a, cfg, s, r);
}

struct InferenceArgs {
  CommonOptions common;
  std::string model;
  std::string pairs;
  std::string out;
};

int run_inference(const InferenceArgs& a) {
  const ToolConfig cfg = a.common.resolve();
  const auto ck = ModelCheckpoint::load(a.model);
  const auto r = infer(ck, read_pairs(fs::path(a.pairs)), cfg.threads);
  const fs::path dir = a.out;
  io::write_file(dir / "predictions.tsv", r.to_tsv());
  write_json(dir / "metrics.json", {{"seed", cfg.seed},
                                    {"fingerprint", ck.fingerprint()},
                                    {"pairs", r.pairs.size()},
                                    {"skipped", r.skipped},
                                    {"loss", r.loss},
                                    {"metrics", r.metrics.to_json()}});
  std::printf("F1 %.4f (precision %.4f, recall %.4f, accuracy %.4f) on %zu pairs, %zu skipped\n", r.metrics.f1,
              r.metrics.precision, r.metrics.recall, r.metrics.accuracy, r.pairs.size(), r.skipped);
  return kExitOk;
}

// index / rank ---------------------------------------------------------------

struct IndexArgs {
  CommonOptions common;
  std::string model;
  std::string gazetteer;
  std::string queries;
  std::string out;
  bool keep_case = false;
};

int run_index(const IndexArgs& a) {
  const ToolConfig cfg = a.common.resolve();
  const auto ck = ModelCheckpoint::load(a.model);
  const auto t0 = std::chrono::steady_clock::now();
  VectorIndex ix;
  if (!a.gazetteer.empty()) {
    ix = build_index(ck, load_gazetteer(a.gazetteer, ck.preprocess), cfg.threads);
  } else {
    ix = vectorize_queries(ck, read_queries(a.queries, a.keep_case), cfg.threads);
  }
  ix.save(a.out);
  std::printf("%zu x %zu vectors written to %s in %.3f s\n", ix.rows, ix.dim, a.out.c_str(), seconds_since(t0));
  return kExitOk;
}

struct RankArgs {
  CommonOptions common;
  std::string index;
  std::string query_index;
  std::string queries;
  std::string model;
  bool on_the_fly = false;
  bool keep_case = false;
  std::optional<std::size_t> k;
  std::string out;
};

int run_rank(const RankArgs& a) {
  const ToolConfig cfg = a.common.resolve();
  const std::size_t k = a.k.value_or(cfg.k);
  const auto index = VectorIndex::load(a.index);
  std::vector<RankedCandidates> results;
  std::size_t n_queries = 0;
  double seconds = 0.0;
  if (!a.query_index.empty()) {
    const auto queries = VectorIndex::load(a.query_index);
    if (queries.fingerprint != index.fingerprint) {
      throw ConsistencyError("query vectors and index come from different models (fingerprint mismatch)");
    }
    const auto t0 = std::chrono::steady_clock::now();
    results = rank(index, queries, k, cfg.threads);
    seconds = seconds_since(t0);
    n_queries = queries.rows;
  } else {
    if (!a.on_the_fly || a.model.empty()) {
      throw InputError("ranking raw --queries needs --on-the-fly and --model");
    }
    const auto ck = ModelCheckpoint::load(a.model);
    const auto queries = read_queries(a.queries, a.keep_case);
    const auto t0 = std::chrono::steady_clock::now();
    results = rank_on_the_fly(ck, index, queries, k, cfg.threads);
    seconds = seconds_since(t0);
    n_queries = queries.size();
  }
  write_ranked(a.out, results);
  write_timing(a.out, "model", seconds, n_queries, cfg);
  return kExitOk;
}

// baselines ------------------------------------------------------------------

struct BaselineRankArgs {
  CommonOptions common;
  std::string method = "levdam";
  std::string gazetteer;
  std::string queries;
  bool keep_case = false;
  std::optional<std::size_t> k;
  std::string out;
};

int run_baseline_rank(const BaselineRankArgs& a) {
  const ToolConfig cfg = a.common.resolve();
  const Gazetteer gaz = load_gazetteer(a.gazetteer, cfg.preprocess);
  const auto queries = read_queries(a.queries, a.keep_case);
  std::vector<RankedCandidates> results;
  const auto t0 = std::chrono::steady_clock::now();
  if (a.method == "exact") {
    for (const auto& q : queries) results.push_back(exact_ranked(q, gaz));
  } else {
    const auto ranker = LevDamRanker::from_gazetteer(gaz);
    results = ranker.rank_all(queries, a.k.value_or(cfg.k), cfg.threads);
  }
  const double seconds = seconds_since(t0);
  write_ranked(a.out, results);
  write_timing(a.out, a.method, seconds, queries.size(), cfg);
  return kExitOk;
}

struct BaselineClassifyArgs {
  CommonOptions common;
  std::vector<std::string> train;
  std::string test;
  std::string out;
};

int run_baseline_classify(const BaselineClassifyArgs& a) {
  const ToolConfig cfg = a.common.resolve();
  std::vector<LabeledPair> tuning;
  for (const auto& path : a.train) {
    const auto p = read_pairs(fs::path(path));
    tuning.insert(tuning.end(), p.begin(), p.end());
  }
  const auto model = tune_threshold(tuning);
  json out = {{"seed", cfg.seed}, {"threshold", model.threshold}, {"tuning_f1", model.train_f1},
              {"tuning_pairs", tuning.size()}};
  std::printf("threshold %.4f (tuning F1 %.4f on %zu pairs)\n", model.threshold, model.train_f1, tuning.size());
  if (!a.test.empty()) {
    const auto test = read_pairs(fs::path(a.test));
    std::vector<bool> pred, gold;
    for (const auto& p : test) {
      pred.push_back(model.predict(dl_similarity(p.first, p.second)));
      gold.push_back(p.label);
    }
    const auto m = binary_metrics(pred, gold);
    out["test"] = {{"pairs", test.size()}, {"metrics", m.to_json()}};
    std::printf("test F1 %.4f (precision %.4f, recall %.4f, accuracy %.4f) on %zu pairs\n", m.f1, m.precision, m.recall,
                m.accuracy, test.size());
  }
  if (!a.out.empty()) write_json(a.out, out);
  return kExitOk;
}

// evaluate -------------------------------------------------------------------

struct EvaluateArgs {
  CommonOptions common;
  std::string gold;
  std::string gazetteer;
  std::vector<std::string> results;
  std::optional<double> tolerance_km;
  bool no_timing = false;
  std::string out;
};

int run_evaluate(const EvaluateArgs& a) {
  const ToolConfig cfg = a.common.resolve();
  const double tolerance = a.tolerance_km.value_or(cfg.tolerance_km);
  if (!(tolerance >= 0.0)) throw InputError("--tolerance-km must be non-negative");
  const auto gold = read_gold(a.gold);
  const Gazetteer gaz = load_gazetteer(a.gazetteer, cfg.preprocess);
  std::vector<MethodResults> methods;
  for (const auto& spec : a.results) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
      throw InputError("--results expects name=path, got '" + spec + "'");
    }
    MethodResults m;
    m.name = spec.substr(0, eq);
    const fs::path path = spec.substr(eq + 1);
    m.results = read_ranked(path);
    if (!a.no_timing && fs::exists(timing_path(path))) {
      try {
        m.seconds = json::parse(io::read_file(timing_path(path))).at("seconds").get<double>();
      } catch (const json::exception& e) {
        throw InputError(timing_path(path).string() + ": " + e.what());
      }
    }
    methods.push_back(std::move(m));
  }
  const auto report = compare_methods(methods, gold, gaz, tolerance);
  const std::string tsv = report.to_tsv();
  std::fputs(tsv.c_str(), stdout);
  if (!a.out.empty()) {
    io::write_file(a.out, tsv);
    json j = report.to_json();
    j["seed"] = cfg.seed;
    write_json(a.out + ".json", j);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Toponym matching with a siamese recurrent pair classifier: pair generation, training, "
               "candidate ranking, baselines and evaluation."};
  app.footer(std::string("\n") + kFormats + "\n" + config_help() +
             "\nExit codes: 0 success, 2 input error, 3 consistency error (fingerprint or dimension), "
             "4 numeric error.");
  app.require_subcommand(1);

  GenPairsArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-pairs", "Generate a balanced labeled pair dataset");
  gen.common.attach(gen_cmd);
  gen_cmd->add_option("--mode", gen.mode, "gazetteer | ocr")->check(CLI::IsMember({"gazetteer", "ocr"}));
  gen_cmd->add_option("--input", gen.input, "gazetteer TSV or aligned-token TSV")->required()->check(CLI::ExistingFile);
  gen_cmd->add_option("--out", gen.out, "output directory for train_val.tsv, test.tsv, report.json")->required();
  gen_cmd->add_option("--test-ratio", gen.test_ratio, "held-out share (default 0.1)")->check(CLI::Range(0.0, 1.0));

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model on a labeled pair file");
  tr.common.attach(train_cmd, true);
  train_cmd->add_option("--pairs", tr.pairs, "pair TSV, split by the configured ratios")->required();
  train_cmd->add_option("--test", tr.test, "separate test pair TSV; --pairs then feeds only train and validation");
  train_cmd->add_option("--out", tr.out, "output directory (model.ckpt, epochs.tsv, metrics.json, splits)")->required();

  TrainArgs ft;
  auto* ft_cmd = app.add_subcommand("finetune", "Continue training an existing checkpoint on new pairs");
  ft.common.attach(ft_cmd, true);
  ft_cmd->add_option("--model", ft.parent, "parent checkpoint")->required();
  ft_cmd->add_option("--pairs", ft.pairs, "pair TSV, split by the configured ratios")->required();
  ft_cmd->add_option("--test", ft.test, "separate test pair TSV");
  ft_cmd->add_option("--learning-rate", ft.learning_rate, "replaces the parent's learning rate");
  ft_cmd->add_option("--out", ft.out, "output directory")->required();

  InferenceArgs inf;
  auto* inf_cmd = app.add_subcommand("inference", "Score a labeled pair file with a checkpoint");
  inf.common.attach(inf_cmd);
  inf_cmd->add_option("--model", inf.model, "checkpoint")->required();
  inf_cmd->add_option("--pairs", inf.pairs, "pair TSV")->required();
  inf_cmd->add_option("--out", inf.out, "output directory (predictions.tsv, metrics.json)")->required();

  IndexArgs ix;
  auto* ix_cmd = app.add_subcommand("index", "Vectorize gazetteer altnames or a query list");
  ix.common.attach(ix_cmd);
  ix_cmd->add_option("--model", ix.model, "checkpoint")->required();
  auto* ix_gaz = ix_cmd->add_option("--gazetteer", ix.gazetteer, "gazetteer TSV");
  auto* ix_q = ix_cmd->add_option("--queries", ix.queries, "query file");
  ix_gaz->excludes(ix_q);
  ix_cmd->add_flag("--keep-case", ix.keep_case, "do not lower-case queries");
  ix_cmd->add_option("--out", ix.out, "index file; metadata goes to <out>.meta.jsonl")->required();

  RankArgs rk;
  auto* rk_cmd = app.add_subcommand("rank", "Rank gazetteer candidates for queries by L2 distance");
  rk.common.attach(rk_cmd);
  rk_cmd->add_option("--index", rk.index, "gazetteer vector index")->required();
  auto* rk_qi = rk_cmd->add_option("--query-index", rk.query_index, "precomputed query vectors");
  auto* rk_q = rk_cmd->add_option("--queries", rk.queries, "raw query file (with --on-the-fly)");
  rk_qi->excludes(rk_q);
  rk_cmd->add_option("--model", rk.model, "checkpoint (with --on-the-fly)");
  rk_cmd->add_flag("--on-the-fly", rk.on_the_fly, "vectorize raw queries with --model before ranking");
  rk_cmd->add_flag("--keep-case", rk.keep_case, "do not lower-case queries");
  rk_cmd->add_option("-k", rk.k, "candidates per query (default from config, 20)");
  rk_cmd->add_option("--out", rk.out, "ranked results (JSON lines); timing goes to <out>.timing.json")->required();

  auto* bl_cmd = app.add_subcommand("baseline", "String-similarity baselines");
  bl_cmd->require_subcommand(1);
  BaselineRankArgs blr;
  auto* blr_cmd = bl_cmd->add_subcommand("rank", "Exact-match or Levenshtein-Damerau candidate ranking");
  blr.common.attach(blr_cmd);
  blr_cmd->add_option("--method", blr.method, "exact | levdam")->check(CLI::IsMember({"exact", "levdam"}));
  blr_cmd->add_option("--gazetteer", blr.gazetteer, "gazetteer TSV")->required();
  blr_cmd->add_option("--queries", blr.queries, "query file")->required();
  blr_cmd->add_flag("--keep-case", blr.keep_case, "do not lower-case queries");
  blr_cmd->add_option("-k", blr.k, "candidates per query for levdam (default from config, 20)");
  blr_cmd->add_option("--out", blr.out, "ranked results (JSON lines)")->required();
  BaselineClassifyArgs blc;
  auto* blc_cmd = bl_cmd->add_subcommand("classify", "Threshold-tuned Levenshtein-Damerau pair classifier");
  blc.common.attach(blc_cmd);
  blc_cmd->add_option("--train", blc.train, "pair TSV(s) used to tune the threshold")->required();
  blc_cmd->add_option("--test", blc.test, "pair TSV to score");
  blc_cmd->add_option("--out", blc.out, "metrics JSON");

  EvaluateArgs ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "Compare ranked results against gold coordinates");
  ev.common.attach(ev_cmd);
  ev_cmd->add_option("--gold", ev.gold, "gold TSV")->required();
  ev_cmd->add_option("--gazetteer", ev.gazetteer, "gazetteer TSV")->required();
  ev_cmd->add_option("--results", ev.results, "name=path, repeatable")->required();
  ev_cmd->add_option("--tolerance-km", ev.tolerance_km, "relevance radius (default from config, 10)");
  ev_cmd->add_flag("--no-timing", ev.no_timing, "leave the time column as NA");
  ev_cmd->add_option("--out", ev.out, "report TSV; JSON goes to <out>.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*gen_cmd) return run_gen_pairs(gen);
    if (*train_cmd) return run_train(tr);
    if (*ft_cmd) return run_finetune(ft);
    if (*inf_cmd) return run_inference(inf);
    if (*ix_cmd) {
      if (ix.gazetteer.empty() && ix.queries.empty()) throw InputError("index needs --gazetteer or --queries");
      return run_index(ix);
    }
    if (*rk_cmd) return run_rank(rk);
    if (*blr_cmd) return run_baseline_rank(blr);
    if (*blc_cmd) return run_baseline_classify(blc);
    if (*ev_cmd) return run_evaluate(ev);
  } catch (const InputError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kExitInput;
  } catch (const ConsistencyError& e) {
    std::fprintf(stderr, "consistency error: %s\n", e.what());
    return kExitConsistency;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kExitNumeric;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kExitInput;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return kExitOk;
}
