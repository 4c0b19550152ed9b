#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <string>
#include <vector>

#include "json.hpp"
#include "support/synthetic_gazetteer.hpp"
#include "support/temp_dir.hpp"
#include "topomatch/candidates.hpp"
#include "topomatch/pairs.hpp"

using namespace topomatch;

namespace {

/// Runs the command-line tool inside `dir` and returns its exit status.
int run(const oracle::TempDir& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.path().string() + "' && '" TOPOMATCH_CLI "' " + args + " >>cli.log 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::size_t count_label(const std::vector<LabeledPair>& pairs, bool label) {
  return static_cast<std::size_t>(
      std::count_if(pairs.begin(), pairs.end(), [&](const LabeledPair& p) { return p.label == label; }));
}

const char* kSmallConfig =
    "# small model for quick runs\n"
    "embedding_dim = 16\nhidden_dim = 16\nff_hidden_dim = 32\nmax_epochs = 2\npatience = 2\n";

/// Gazetteer, gold mentions and a small config written into a fresh directory.
struct Fixture {
  oracle::TempDir dir;

  explicit Fixture(std::size_t entities = 40) {
    const oracle::SyntheticGazetteer synth({.entities = entities});
    dir.write("gaz.tsv", synth.tsv());
    std::string gold;
    for (const auto& [mention, place] : synth.mentions(30, 3)) {
      gold += mention + "\t" + std::to_string(place.lat) + "\t" + std::to_string(place.lon) + "\n";
    }
    dir.write("gold.tsv", gold);
    dir.write("small.cfg", kSmallConfig);
  }
};

}  // namespace

TEST(CliGenPairs, GazetteerModeOnFiveEntities) {
  oracle::TempDir dir;
  dir.write("gaz.tsv",
            "dz1\tAintourine\t26.7\t6.4\tAintourine\n"
            "dz1\tAintourine\t26.7\t6.4\tAïn Toûrîne\n"
            "dz1\tAintourine\t26.7\t6.4\tAm Toûrîne\n"
            "dz2\tTigantourine\t27.9\t9.0\tTigantourine\n"
            "dz2\tTigantourine\t27.9\t9.0\tTiguentourine\n"
            "nl1\tHaagsche Bosch\t52.09\t4.33\tHaagsche Bosch\n"
            "nl1\tHaagsche Bosch\t52.09\t4.33\tHet Haagse Bos\n"
            "ir1\tSorkhankalateh\t36.9\t54.6\tSorkhankalateh\n"
            "gr1\tAthens\t37.98\t23.73\tAthens\n"
            "gr1\tAthens\t37.98\t23.73\tAthina\n");
  ASSERT_EQ(run(dir, "gen-pairs --mode gazetteer --input gaz.tsv --out pairs --seed 3"), 0);
  auto pairs = read_pairs(dir / "pairs/train_val.tsv");
  const auto test = read_pairs(dir / "pairs/test.tsv");
  pairs.insert(pairs.end(), test.begin(), test.end());
  EXPECT_FALSE(pairs.empty());
  EXPECT_EQ(count_label(pairs, true), count_label(pairs, false));
  const auto report = nlohmann::json::parse(oracle::slurp(dir / "pairs/report.json"));
  EXPECT_EQ(report.at("seed").get<int>(), 3);
  EXPECT_EQ(report.at("mode").get<std::string>(), "gazetteer");
  EXPECT_EQ(report.at("counts").at("positives"), report.at("counts").at("negatives"));
}

TEST(CliGenPairs, OcrModeOnTableStrings) {
  oracle::TempDir dir;
  std::string tokens;
  for (int copy = 0; copy < 2; ++copy) {
    tokens += "Zmich\tZurich\n7urich\tZurich\nZuiich\tZurich\nZunch\tZurich\nZurich\tZurich\nZ\tZurich\n";
  }
  dir.write("ocr.tsv", tokens);
  ASSERT_EQ(run(dir, "gen-pairs --mode ocr --input ocr.tsv --out pairs --seed 1 --test-ratio 0"), 0);
  const auto pairs = read_pairs(dir / "pairs/train_val.tsv");
  EXPECT_EQ(count_label(pairs, true), 4u);
  EXPECT_EQ(count_label(pairs, false), 4u);
  EXPECT_TRUE(std::any_of(pairs.begin(), pairs.end(), [](const LabeledPair& p) {
    return p.label && p.first == "Zurich" && p.second == "Zmich";
  }));
  const auto report = nlohmann::json::parse(oracle::slurp(dir / "pairs/report.json"));
  EXPECT_EQ(report.at("counts").at("dropped_rule_1").get<int>(), 2);
  EXPECT_EQ(report.at("counts").at("dropped_rule_2").get<int>(), 2);
}

TEST(CliGenPairs, MissingInputIsExitTwo) {
  oracle::TempDir dir;
  EXPECT_EQ(run(dir, "gen-pairs --input missing.tsv --out pairs"), 2);
  dir.write("short.tsv", "a\tb\n");
  EXPECT_EQ(run(dir, "gen-pairs --input short.tsv --out pairs"), 2);
  EXPECT_NE(oracle::slurp(dir / "cli.log").find("short.tsv:1"), std::string::npos);
}

TEST(CliTrain, TrainInferFinetune) {
  Fixture fx;
  auto& dir = fx.dir;
  ASSERT_EQ(run(dir, "gen-pairs --input gaz.tsv --out pairs"), 0);
  ASSERT_EQ(run(dir, "train --config small.cfg --pairs pairs/train_val.tsv --test pairs/test.tsv --out model"), 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "model/model.ckpt"));
  EXPECT_NE(oracle::slurp(dir / "model/epochs.tsv").find("\t*\n"), std::string::npos);
  const auto metrics = nlohmann::json::parse(oracle::slurp(dir / "model/metrics.json"));
  EXPECT_EQ(metrics.at("seed").get<int>(), 42);

  ASSERT_EQ(run(dir, "inference --model model/model.ckpt --pairs pairs/test.tsv --out inf"), 0);
  const auto inf = nlohmann::json::parse(oracle::slurp(dir / "inf/metrics.json"));
  EXPECT_EQ(inf.at("metrics").at("f1"), metrics.at("test").at("metrics").at("f1"));
  ASSERT_EQ(run(dir, "inference --model model/model.ckpt --pairs pairs/test.tsv --out inf2"), 0);
  EXPECT_EQ(oracle::slurp(dir / "inf/predictions.tsv"), oracle::slurp(dir / "inf2/predictions.tsv"));

  ASSERT_EQ(run(dir, "finetune --config small.cfg --max-epochs 1 --model model/model.ckpt --pairs pairs/test.tsv "
                     "--out tuned"),
            0);
  const auto tuned = nlohmann::json::parse(oracle::slurp(dir / "tuned/metrics.json"));
  EXPECT_EQ(tuned.at("parent_fingerprint"), metrics.at("fingerprint"));
}

TEST(CliTrain, UnknownConfigKeyIsExitTwo) {
  Fixture fx;
  fx.dir.write("bad.cfg", "hidden_size = 8\n");
  ASSERT_EQ(run(fx.dir, "gen-pairs --input gaz.tsv --out pairs"), 0);
  EXPECT_EQ(run(fx.dir, "train --config bad.cfg --pairs pairs/train_val.tsv --out model"), 2);
  EXPECT_NE(oracle::slurp(fx.dir / "cli.log").find("bad.cfg:1"), std::string::npos);
}

TEST(CliRank, IndexThenRankEqualsOnTheFly) {
  Fixture fx;
  auto& dir = fx.dir;
  ASSERT_EQ(run(dir, "gen-pairs --input gaz.tsv --out pairs"), 0);
  ASSERT_EQ(run(dir, "train --config small.cfg --max-epochs 1 --pairs pairs/train_val.tsv --out m1"), 0);
  ASSERT_EQ(run(dir, "index --model m1/model.ckpt --gazetteer gaz.tsv --out gaz.idx"), 0);
  ASSERT_EQ(run(dir, "index --model m1/model.ckpt --queries gold.tsv --out q.idx"), 0);
  ASSERT_EQ(run(dir, "rank --index gaz.idx --query-index q.idx -k 5 --out a.jsonl"), 0);
  ASSERT_EQ(run(dir, "rank --index gaz.idx --queries gold.tsv --model m1/model.ckpt --on-the-fly -k 5 --out b.jsonl"), 0);
  EXPECT_EQ(oracle::slurp(dir / "a.jsonl"), oracle::slurp(dir / "b.jsonl"));
  EXPECT_TRUE(std::filesystem::exists(dir / "a.jsonl.timing.json"));

  ASSERT_EQ(run(dir, "rank --index gaz.idx --query-index q.idx -k 1 --threads 3 --out one.jsonl"), 0);
  for (const auto& r : read_ranked(dir / "one.jsonl")) EXPECT_EQ(r.items.size(), 1u);

  ASSERT_EQ(run(dir, "train --config small.cfg --max-epochs 1 --seed 7 --pairs pairs/train_val.tsv --out m2"), 0);
  EXPECT_EQ(run(dir, "rank --index gaz.idx --queries gold.tsv --model m2/model.ckpt --on-the-fly --out c.jsonl"), 3);
  ASSERT_EQ(run(dir, "index --model m2/model.ckpt --queries gold.tsv --out q2.idx"), 0);
  EXPECT_EQ(run(dir, "rank --index gaz.idx --query-index q2.idx --out c.jsonl"), 3);
}

TEST(CliEvaluate, ReportShapeAndTolerance) {
  Fixture fx;
  auto& dir = fx.dir;
  ASSERT_EQ(run(dir, "baseline rank --method levdam --gazetteer gaz.tsv --queries gold.tsv -k 5 --out lev.jsonl"), 0);
  ASSERT_EQ(run(dir, "baseline rank --method exact --gazetteer gaz.tsv --queries gold.tsv --out exact.jsonl"), 0);
  ASSERT_EQ(run(dir, "evaluate --gold gold.tsv --gazetteer gaz.tsv --results levdam=lev.jsonl --results exact=exact.jsonl "
                     "--out report.tsv"),
            0);
  const std::string report = oracle::slurp(dir / "report.tsv");
  EXPECT_EQ(report.rfind("method\tqueries\texcluded\tP@1\tMAP@5\tMAP@10\tMAP@20\ttime_s\n", 0), 0u);
  EXPECT_EQ(std::count(report.begin(), report.end(), '\n'), 3);
  EXPECT_EQ(report.find("\tNA"), std::string::npos);  // both methods were timed

  ASSERT_EQ(run(dir, "evaluate --gold gold.tsv --gazetteer gaz.tsv --results levdam=lev.jsonl --results exact=exact.jsonl "
                     "--tolerance-km 161 --no-timing --out wide.tsv"),
            0);
  const std::string wide = oracle::slurp(dir / "wide.tsv");
  EXPECT_EQ(std::count(wide.begin(), wide.end(), '\n'), 3);
  EXPECT_NE(wide.find("\tNA\n"), std::string::npos);
  const auto j = nlohmann::json::parse(oracle::slurp(dir / "wide.tsv.json"));
  EXPECT_EQ(j.at("tolerance_km").get<double>(), 161.0);

  dir.write("bad_gold.tsv", "london\t51.5\n");
  EXPECT_EQ(run(dir, "evaluate --gold bad_gold.tsv --gazetteer gaz.tsv --results levdam=lev.jsonl"), 2);
  EXPECT_EQ(run(dir, "evaluate --gold gold.tsv --gazetteer gaz.tsv --results lev.jsonl"), 2);
}

TEST(CliBaseline, ClassifyReportsThresholdAndTestF1) {
  Fixture fx;
  ASSERT_EQ(run(fx.dir, "gen-pairs --input gaz.tsv --out pairs"), 0);
  ASSERT_EQ(run(fx.dir, "baseline classify --train pairs/train_val.tsv --test pairs/test.tsv --out lev.json"), 0);
  const auto j = nlohmann::json::parse(oracle::slurp(fx.dir / "lev.json"));
  EXPECT_GE(j.at("threshold").get<double>(), 0.0);
  EXPECT_LE(j.at("threshold").get<double>(), 1.0);
  EXPECT_TRUE(j.at("test").contains("metrics"));
}

TEST(CliMisc, HelpAndUsageErrors) {
  oracle::TempDir dir;
  EXPECT_EQ(run(dir, "--help"), 0);
  EXPECT_EQ(run(dir, ""), 2);
  EXPECT_EQ(run(dir, "rank --index x.idx"), 2);
  const std::string log = oracle::slurp(dir / "cli.log");
  EXPECT_NE(log.find("hidden_dim"), std::string::npos);
  EXPECT_NE(log.find("Exit codes"), std::string::npos);
}
