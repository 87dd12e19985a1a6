#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include "../support/oracles.hpp"
#include "s2v/cli.hpp"
#include "s2v/config.hpp"
#include "s2v/errors.hpp"

using namespace s2v;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out, err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "s2v");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return "<missing " + p.string() + ">";
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_rows(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    rows.push_back(f);
  }
  return rows;
}

// Shared corpus plus a tiny configuration that trains in seconds.
class CliRun : public ::testing::Test {
 protected:
  static fs::path root() { return fs::temp_directory_path() / "s2v_cli_test"; }
  static fs::path data() { return root() / "data.csv"; }
  static fs::path config() { return root() / "tiny.cfg"; }

  static void SetUpTestSuite() {
    fs::remove_all(root());
    fs::create_directories(root());
    ASSERT_EQ(cli({"gen-synthetic", "--series", "8", "--groups", "2", "--days", "160", "--seed", "3", "-o",
                   data().string()})
                  .code,
              0);
    std::ofstream(config()) << "data = " << data().string() << "\n"
                            << "categorical = symbol, group, day_of_week\n"
                               "continuous = lag1_price, ma5\n"
                               "group_column = group\n"
                               "window = 8\n"
                               "s2v_hidden = 16, 8\n"
                               "tcn_blocks = 2\n"
                               "tcn_channels = 4\n"
                               "lstm_hidden = 8\n"
                               "feature_map = 4\n"
                               "head_hidden = 8\n"
                               "batch_size = 64\n"
                               "ts_epochs = 2\n"
                               "s2v_cycle_epochs = 2\n"
                               "head_cycle_epochs = 1\n"
                               "head_cycles = 1\n"
                               "finetune_epochs = 1\n";
  }
  static void TearDownTestSuite() { fs::remove_all(root()); }

  static CliResult train(const std::string& model, const fs::path& dir, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{"train", "--config", config().string(), "--model", model, "--out-dir", dir.string()};
    args.insert(args.end(), extra.begin(), extra.end());
    return cli(args);
  }
};

}  // namespace

// ---------------------------------------------------------------- config grammar

TEST(Config, ParsesCommentsListsAndDefaults) {
  std::istringstream in(
      "# a comment\n\n"
      "model = tcn-stock2vec   # trailing comment\n"
      "categorical = a, b\n"
      "s2v_hidden = 64,32\n"
      "log_wall_time = 1\n");
  const auto cfg = parse_config(in);
  EXPECT_EQ(cfg.model, ModelKind::tcn_stock2vec);
  EXPECT_EQ(cfg.schema.categorical, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(cfg.s2v_hidden, (std::vector<std::size_t>{64, 32}));
  EXPECT_TRUE(cfg.log_wall_time);
  EXPECT_EQ(cfg.window, 260u);
  EXPECT_EQ(cfg.tcn_blocks, 8u);
  EXPECT_EQ(cfg.protocol.batch_size, 128u);
}

TEST(Config, DefaultsCarryTheReferenceHyperparameters) {
  const RunConfig cfg;
  EXPECT_EQ(cfg.s2v_hidden, (std::vector<std::size_t>{1024, 512}));
  EXPECT_EQ(cfg.s2v_dropout, (std::vector<double>{0.001, 0.01}));
  EXPECT_EQ(cfg.tcn_channels, 16u);
  EXPECT_EQ(cfg.tcn_kernel, 2u);
  EXPECT_EQ(cfg.tcn_dropout, 0.01);
  EXPECT_EQ(cfg.lstm_layers, 2u);
  EXPECT_EQ(cfg.lstm_hidden, 50u);
  EXPECT_EQ(cfg.feature_map, 30u);
  EXPECT_EQ(cfg.protocol.ts_lr, 1e-4);
  EXPECT_EQ(cfg.protocol.s2v_max_lr, 1e-3);
  EXPECT_EQ(cfg.protocol.head_max_lr, 3e-4);
  EXPECT_EQ(cfg.protocol.finetune_lr, 1e-5);
}

TEST(Config, ErrorsNameTheLine) {
  auto expect_error = [](const std::string& text, const std::string& fragment) {
    std::istringstream in(text);
    try {
      parse_config(in, "run.cfg");
      ADD_FAILURE() << "no error for: " << text;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
    }
  };
  expect_error("window = 5\nwindw = 3\n", "run.cfg:2: unknown config key 'windw'");
  expect_error("window = 5\n\nwindow = 6\n", "run.cfg:3: duplicate key 'window'");
  expect_error("window\n", "run.cfg:1:");
  expect_error("window = -3\n", "run.cfg:1:");
  expect_error("clip_norm = fast\n", "run.cfg:1:");
  expect_error("model = xgboost\n", "run.cfg:1:");
  expect_error("log_wall_time = maybe\n", "run.cfg:1:");
  EXPECT_THROW(load_config("/nonexistent/run.cfg"), ConfigError);
}

TEST(Config, EffectiveDumpReparsesToTheSameConfig) {
  RunConfig cfg;
  cfg.data = "x.csv";
  cfg.schema.categorical = {"symbol", "sector"};
  cfg.schema.continuous = {"lag1_price"};
  cfg.model = ModelKind::lstm_stock2vec;
  cfg.protocol.min_delta = 3.5e-7;
  cfg.protocol.clip_norm = 0.1;
  cfg.seed = 99;
  std::ostringstream a;
  write_effective_config(a, cfg);
  std::istringstream in(a.str());
  const auto back = parse_config(in);
  std::ostringstream b;
  write_effective_config(b, back);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(back.protocol.min_delta, 3.5e-7);
  // every key appears, each with an origin note
  for (const auto& key : config_keys()) EXPECT_NE(a.str().find("\n" + key + " = "), std::string::npos) << key;
  std::istringstream lines(a.str());
  std::string line;
  std::getline(lines, line);
  while (std::getline(lines, line)) EXPECT_NE(line.find("  # "), std::string::npos) << line;
}

// ---------------------------------------------------------------- exit codes

TEST(ExitCodes, UsageErrorsAreTwo) {
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"fly"}).code, 2);
  EXPECT_EQ(cli({"gen-synthetic", "--groups", "0"}).code, 2);
  EXPECT_EQ(cli({"gen-synthetic", "--series", "abc"}).code, 2);
  EXPECT_EQ(cli({"evaluate"}).code, 2);
  EXPECT_EQ(cli({"train", "--set", "nope=1"}).code, 2);
  EXPECT_EQ(cli({"train", "--set", "window"}).code, 2);
  EXPECT_EQ(cli({"train", "--model", "xgboost"}).code, 2);
  EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST(ExitCodes, ProcessExitStatusMatches) {
  const std::string bin = S2V_CLI_PATH;
  const auto status = [&](const std::string& args) {
    const int raw = std::system((bin + " " + args + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(raw);
  };
  EXPECT_EQ(status("gen-synthetic --groups 0"), 2);
  EXPECT_EQ(status("evaluate --checkpoint /nonexistent/c.s2v"), 1);
  EXPECT_EQ(status("--help"), 0);
}

// ---------------------------------------------------------------- gen-synthetic

TEST_F(CliRun, GenSyntheticIsDeterministicAndSummarises) {
  const auto a = root() / "g1.csv", b = root() / "g2.csv";
  const auto r = cli({"gen-synthetic", "--series", "20", "--groups", "4", "--days", "100", "--seed", "7", "-o",
                      a.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("20 series, 1600 rows, 4 groups"), std::string::npos) << r.out;
  ASSERT_EQ(cli({"gen-synthetic", "--series", "20", "--groups", "4", "--days", "100", "--seed", "7", "--out",
                 b.string()})
                .code,
            0);
  EXPECT_EQ(slurp(a), slurp(b));
}

// ---------------------------------------------------------------- train / evaluate / predict / analyze

TEST_F(CliRun, TrainIsByteDeterministic) {
  const auto d1 = root() / "det1", d2 = root() / "det2";
  const auto r1 = train("stock2vec", d1);
  ASSERT_EQ(r1.code, 0) << r1.err;
  ASSERT_EQ(train("stock2vec", d2).code, 0);
  for (const char* f : {"checkpoint.s2v", "train_log.csv", "stages.csv"}) EXPECT_EQ(slurp(d1 / f), slurp(d2 / f)) << f;
  // the dump differs only in the out_dir line
  auto strip = [](std::string s) {
    const auto at = s.find("\nout_dir = ");
    return s.erase(at, s.find('\n', at + 1) - at);
  };
  EXPECT_EQ(strip(slurp(d1 / "effective_config.txt")), strip(slurp(d2 / "effective_config.txt")));
  const auto log = read_rows(d1 / "train_log.csv");
  ASSERT_GT(log.size(), 1u);
  EXPECT_EQ(log[0].front(), "epoch");
}

TEST_F(CliRun, EffectiveConfigReproducesTheRun) {
  const auto d1 = root() / "eff1";
  ASSERT_EQ(train("ts-tcn", d1, {"--seed", "4"}).code, 0);
  const auto d2 = root() / "eff2";
  const auto r = cli({"train", "--config", (d1 / "effective_config.txt").string(), "--out-dir", d2.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(d1 / "checkpoint.s2v"), slurp(d2 / "checkpoint.s2v"));
  EXPECT_EQ(slurp(d1 / "train_log.csv"), slurp(d2 / "train_log.csv"));
}

TEST_F(CliRun, HybridNeedsPretrainedModules) {
  const auto r = train("tcn-stock2vec", root() / "nopre");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("pretrain"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(root() / "nopre" / "checkpoint.s2v"));
}

TEST_F(CliRun, HybridWithPretrainAuto) {
  const auto dir = root() / "hyb";
  const auto r = train("lstm-stock2vec", dir, {"--pretrain-auto"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "checkpoint.s2v"));
  EXPECT_TRUE(fs::exists(dir / "pretrain" / "stock2vec" / "checkpoint.s2v"));
  EXPECT_TRUE(fs::exists(dir / "pretrain" / "ts-lstm" / "checkpoint.s2v"));
  const auto stages = read_rows(dir / "stages.csv");
  ASSERT_EQ(stages.size(), 3u);
  EXPECT_EQ(stages[1][0], "head");
  EXPECT_EQ(stages[2][0], "finetune");
  // a checkpoint of the wrong kind is refused
  const auto bad = train("lstm-stock2vec", root() / "hyb_bad",
                         {"--set", "pretrained_stock2vec=" + (dir / "pretrain" / "ts-lstm" / "checkpoint.s2v").string(),
                          "--set", "pretrained_temporal=" + (dir / "pretrain" / "ts-lstm" / "checkpoint.s2v").string()});
  EXPECT_EQ(bad.code, 1);
}

TEST_F(CliRun, EvaluateReportsAgreeWithThePredictions) {
  const auto dir = root() / "ev";
  ASSERT_EQ(train("stock2vec", dir).code, 0);
  const auto rep = root() / "ev_report";
  const auto r = cli({"evaluate", "--checkpoint", (dir / "checkpoint.s2v").string(), "--out-dir", rep.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("per group"), std::string::npos);

  metrics::ForecastSet fs;
  const auto preds = read_rows(rep / "predictions.csv");
  ASSERT_EQ(preds[0], (std::vector<std::string>{"date", "series_id", "group", "y", "y_hat"}));
  for (std::size_t i = 1; i < preds.size(); ++i)
    fs.push_back({preds[i][1], preds[i][2], data::parse_date(preds[i][0]), std::stod(preds[i][3]), std::stod(preds[i][4])});
  const auto oracle = s2v::testing::brute_metrics(fs);
  const auto global = read_rows(rep / "metrics_global.csv");
  ASSERT_EQ(global.size(), 2u);
  EXPECT_EQ(global[1][0], "all");
  EXPECT_NEAR(std::stod(global[1][1]), oracle.rmse, 1e-12 * oracle.rmse);
  EXPECT_NEAR(std::stod(global[1][2]), oracle.mae, 1e-12 * oracle.mae);
  EXPECT_NEAR(std::stod(global[1][3]), oracle.mape, 1e-12 * oracle.mape);
  EXPECT_NEAR(std::stod(global[1][4]), oracle.rmspe, 1e-12 * oracle.rmspe);
  EXPECT_EQ(std::stoul(global[1][5]), fs.size());

  for (const char* file : {"metrics_group.csv", "metrics_series.csv"}) {
    std::size_t total = 0;
    const auto rows = read_rows(rep / file);
    for (std::size_t i = 1; i < rows.size(); ++i) total += std::stoul(rows[i][5]);
    EXPECT_EQ(total, fs.size()) << file;
  }
  EXPECT_EQ(read_rows(rep / "metrics_group.csv").size(), 3u);

  // test split holds the last 15% of dates
  std::set<std::string> dates;
  for (std::size_t i = 1; i < preds.size(); ++i) dates.insert(preds[i][0]);
  EXPECT_NEAR(static_cast<double>(dates.size()), 0.15 * 140, 2.0);

  // repeating the command gives identical reports
  const auto rep2 = root() / "ev_report2";
  ASSERT_EQ(cli({"evaluate", "--checkpoint", (dir / "checkpoint.s2v").string(), "--out-dir", rep2.string()}).code, 0);
  for (const char* f : {"predictions.csv", "metrics_global.csv", "metrics_group.csv", "metrics_series.csv"})
    EXPECT_EQ(slurp(rep / f), slurp(rep2 / f)) << f;
  EXPECT_EQ(cli({"evaluate", "--checkpoint", (dir / "checkpoint.s2v").string(), "--split", "holdout"}).code, 2);
}

TEST_F(CliRun, PredictCoversTheRequestedRange) {
  const auto dir = root() / "pr";
  ASSERT_EQ(train("ts-lstm", dir).code, 0);
  const auto out = root() / "pred.csv";
  const auto r = cli({"predict", "--checkpoint", (dir / "checkpoint.s2v").string(), "--data", data().string(), "-o",
                      out.string(), "--from", "2000-01-01"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = read_rows(out);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"date", "series_id", "group", "y_hat"}));
  // every row with at least one earlier row: 8 series x (140 - 1)
  EXPECT_EQ(rows.size() - 1, 8u * 139u);
  const auto bounded = root() / "pred_b.csv";
  ASSERT_EQ(cli({"predict", "--checkpoint", (dir / "checkpoint.s2v").string(), "-o", bounded.string(), "--from",
                 rows[100][0], "--to", rows[100][0]})
                .code,
            1);  // empty range
  const auto far = cli({"predict", "--checkpoint", (dir / "checkpoint.s2v").string(), "--from", "2100-01-01"});
  EXPECT_EQ(far.code, 1);
}

TEST_F(CliRun, AnalyzeEmbeddings) {
  const auto dir = root() / "an";
  ASSERT_EQ(train("stock2vec", dir).code, 0);
  const auto rep = root() / "an_report";
  const auto r = cli({"analyze-embeddings", "--checkpoint", (dir / "checkpoint.s2v").string(), "--feature", "symbol",
                      "--neighbors", "S000", "-k", "6", "--out-dir", rep.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto line = r.out.substr(0, r.out.find('\n'));
  ASSERT_EQ(line.rfind("S000:", 0), 0u) << line;
  std::vector<double> dists;
  for (std::size_t at = line.find('('); at != std::string::npos; at = line.find('(', at + 1))
    dists.push_back(std::stod(line.substr(at + 1)));
  ASSERT_EQ(dists.size(), 6u);
  for (std::size_t i = 1; i < dists.size(); ++i) EXPECT_LE(dists[i - 1], dists[i]);
  EXPECT_EQ(read_rows(rep / "projections.csv").size(), 9u);
  EXPECT_EQ(read_rows(rep / "neighbors.csv").size(), 7u);

  const auto grp = root() / "an_group";
  ASSERT_EQ(cli({"analyze-embeddings", "--checkpoint", (dir / "checkpoint.s2v").string(), "--feature", "group",
                 "--out-dir", grp.string()})
                .code,
            0);
  const auto var = read_rows(grp / "variance.csv");
  EXPECT_NEAR(std::stod(var.back()[2]), 1.0, 1e-9);

  EXPECT_EQ(cli({"analyze-embeddings", "--checkpoint", (dir / "checkpoint.s2v").string(), "--feature", "sector"}).code,
            1);
  EXPECT_EQ(cli({"analyze-embeddings", "--checkpoint", (dir / "checkpoint.s2v").string(), "-k", "0"}).code, 2);

  const auto ts = root() / "an_ts";
  ASSERT_EQ(train("ts-tcn", ts).code, 0);
  const auto bad = cli({"analyze-embeddings", "--checkpoint", (ts / "checkpoint.s2v").string()});
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find("no categorical embeddings"), std::string::npos) << bad.err;
}
