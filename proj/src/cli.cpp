#include "s2v/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "s2v/analysis.hpp"
#include "s2v/config.hpp"
#include "s2v/csv.hpp"
#include "s2v/errors.hpp"
#include "s2v/pipeline.hpp"
#include "s2v/synthetic.hpp"

namespace s2v {

namespace fs = std::filesystem;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string model;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "key = value configuration file");
  cmd->add_option("--seed", f.seed, "root seed (overrides the config)");
  cmd->add_option("--out-dir", f.out_dir, "output directory (overrides the config)");
  cmd->add_option("--model", f.model, "ts-tcn, ts-lstm, stock2vec, lstm-stock2vec or tcn-stock2vec");
  cmd->add_option("--set", f.sets, "extra `key=value` override; repeatable");
}

RunConfig resolve_config(const CommonFlags& f) {
  RunConfig cfg = f.config.empty() ? RunConfig{} : load_config(f.config);
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  if (f.seed) cfg.seed = *f.seed;
  if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
  if (!f.model.empty()) cfg.model = parse_model_kind(f.model);
  return cfg;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  return out;
}

// ---------------------------------------------------------------- gen-synthetic

struct GenFlags {
  data::SyntheticConfig syn;
  std::string out = "synthetic.csv";
};

int cmd_gen(const GenFlags& f, std::ostream& out) {
  if (f.syn.groups == 0) throw ConfigError("--groups must be positive");
  if (f.syn.series < f.syn.groups) throw ConfigError("--series must be at least --groups");
  if (f.syn.days < 30) throw ConfigError("--days must be at least 30");
  const auto ds = data::gen_synthetic(f.syn);
  const fs::path path(f.out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  data::write_csv(ds, path.string());
  std::set<std::string> groups;
  std::set<std::string> series;
  for (const auto& r : ds.rows) {
    groups.insert(r.group);
    series.insert(r.series_id);
  }
  out << "wrote " << path.string() << ": " << series.size() << " series, " << ds.rows.size() << " rows, "
      << groups.size() << " groups\n";
  return 0;
}

// ---------------------------------------------------------------- train

ModelKind temporal_for(ModelKind hybrid) {
  return hybrid == ModelKind::tcn_stock2vec ? ModelKind::ts_tcn : ModelKind::ts_lstm;
}

void write_stage_summary(std::ostream& out, const train::ProtocolReport& rep) {
  csv::write_row(out, {"stage", "epochs", "initial_valid", "best_valid", "best_epoch", "stopped_early", "steps"});
  for (const auto& s : rep.stages) {
    csv::write_row(out, {s.name, std::to_string(s.epochs.size()), csv::format_double(s.initial_valid),
                         csv::format_double(s.best_valid), std::to_string(s.best_epoch),
                         s.stopped_early ? "true" : "false", std::to_string(s.steps)});
  }
}

// Trains cfg.model into `dir`: checkpoint.s2v, train_log.csv, stages.csv and
// effective_config.txt. Returns the checkpoint path.
fs::path train_into(const RunConfig& cfg, const pipeline::Prepared& data, const fs::path& dir,
                    const train::Pretrained& pre, std::ostream& out) {
  fs::create_directories(dir);
  {
    auto f = open_out(dir / "effective_config.txt");
    write_effective_config(f, cfg);
  }
  auto log = open_out(dir / "train_log.csv");
  train::write_log_header(log);
  const auto sink = [&](const train::EpochLog& e) {
    train::write_log_row(log, e, cfg.log_wall_time);
    log.flush();
    out << to_string(cfg.model) << " epoch " << e.epoch << " [" << e.stage << "] train_mse "
        << csv::format_double(e.train_mse, 6) << " valid_mse " << csv::format_double(e.valid_mse, 6) << '\n';
  };
  const auto result = pipeline::train_model(cfg, data, pre, sink);
  {
    auto f = open_out(dir / "stages.csv");
    write_stage_summary(f, result.report);
  }
  const fs::path path = dir / "checkpoint.s2v";
  ckpt::save_checkpoint(result.checkpoint, path);
  out << to_string(cfg.model) << " best valid_mse " << csv::format_double(result.report.best_valid, 6) << " -> "
      << path.string() << '\n';
  return path;
}

ckpt::Checkpoint load_pretrained(const std::string& path, ModelKind expected) {
  auto c = ckpt::load_checkpoint(path);
  const ModelKind kind = c.model_spec().kind;
  if (kind != expected) {
    throw ProtocolError("pretrained checkpoint '" + path + "' holds a " + to_string(kind) + " model, expected " +
                        to_string(expected));
  }
  return c;
}

int cmd_train(const CommonFlags& f, bool pretrain_auto, std::ostream& out) {
  const RunConfig cfg = resolve_config(f);
  const fs::path dir(cfg.out_dir);
  const bool hybrid = is_hybrid(cfg.model);
  const bool have_pre = !cfg.pretrained_stock2vec.empty() && !cfg.pretrained_temporal.empty();
  if (hybrid && !have_pre && !pretrain_auto) {
    throw ProtocolError(to_string(cfg.model) +
                        " needs pretrained_stock2vec and pretrained_temporal checkpoints (or --pretrain-auto)");
  }
  const auto data = pipeline::prepare(cfg);
  out << "samples: train " << data.train.size() << ", valid " << data.valid.size() << ", test " << data.test.size()
      << '\n';
  if (!hybrid) {
    train_into(cfg, data, dir, {}, out);
    return 0;
  }
  std::string s2v_path = cfg.pretrained_stock2vec;
  std::string temporal_path = cfg.pretrained_temporal;
  if (!have_pre) {
    RunConfig sub = cfg;
    sub.model = ModelKind::stock2vec;
    s2v_path = train_into(sub, data, dir / "pretrain" / "stock2vec", {}, out).string();
    sub.model = temporal_for(cfg.model);
    temporal_path = train_into(sub, data, dir / "pretrain" / to_string(sub.model), {}, out).string();
  }
  const auto s2v = load_pretrained(s2v_path, ModelKind::stock2vec);
  const auto temporal = load_pretrained(temporal_path, temporal_for(cfg.model));
  train_into(cfg, data, dir, {&s2v, &temporal}, out);
  return 0;
}

// ---------------------------------------------------------------- evaluate / predict

struct Loaded {
  ckpt::Checkpoint checkpoint;
  nn::ForecastModel<float> model;
  pipeline::Prepared data;
};

Loaded load_for_inference(const std::string& checkpoint_path, const std::string& data_override) {
  auto c = ckpt::load_checkpoint(checkpoint_path);
  auto model = ckpt::model_from_checkpoint<float>(c);
  const auto encoder = pipeline::checkpoint_encoder(c);
  std::string data_path = data_override;
  if (data_path.empty() && c.metadata.contains("data")) data_path = c.metadata.at("data").get<std::string>();
  if (data_path.empty()) throw ConfigError("no data file: pass --data");
  auto ds = data::load_csv(data_path, encoder.schema);
  auto prepared = pipeline::prepare_fitted(std::move(ds), encoder, pipeline::checkpoint_split(c),
                                           pipeline::checkpoint_window(c));
  return {std::move(c), std::move(model), std::move(prepared)};
}

using ReportRows = std::vector<std::pair<std::string, metrics::MetricReport>>;

ReportRows by_key(const metrics::ForecastSet& fs, metrics::GroupBy g) {
  const auto m = metrics::aggregate(fs, g);
  return {m.begin(), m.end()};
}

int cmd_evaluate(const std::string& checkpoint, const std::string& data_path, const std::string& out_dir,
                 const std::string& partition, std::ostream& out) {
  const auto part = pipeline::parse_partition(partition);
  const auto l = load_for_inference(checkpoint, data_path);
  const auto& samples = l.data.part(part);
  if (samples.empty()) throw DataError("the " + partition + " partition has no samples");
  const auto fs = pipeline::forecast(l.model, l.data.encoder, samples, l.data.window);

  const fs::path dir(out_dir);
  fs::create_directories(dir);
  {
    auto f = open_out(dir / "predictions.csv");
    metrics::write_predictions_csv(f, fs);
  }
  const ReportRows global{{"all", metrics::compute_metrics(fs)}};
  const auto groups = by_key(fs, metrics::GroupBy::group);
  const auto series = by_key(fs, metrics::GroupBy::series);
  {
    auto f = open_out(dir / "metrics_global.csv");
    metrics::write_report_csv(f, global);
  }
  {
    auto f = open_out(dir / "metrics_group.csv");
    metrics::write_report_csv(f, groups);
  }
  {
    auto f = open_out(dir / "metrics_series.csv");
    metrics::write_report_csv(f, series);
  }
  metrics::print_report_table(out, partition + " (" + to_string(l.checkpoint.model_spec().kind) + ")", global);
  metrics::print_report_table(out, "per group", groups);
  return 0;
}

int cmd_predict(const std::string& checkpoint, const std::string& data_path, const std::string& out_path,
                const std::string& from, const std::string& to, std::ostream& out) {
  const auto l = load_for_inference(checkpoint, data_path);
  const data::Date begin = from.empty() ? l.data.split.test_start : data::parse_date(from);
  const data::Date end = to.empty() ? data::Date::max() : data::parse_date(to);
  std::vector<data::WindowedSample> all = l.data.train;
  all.insert(all.end(), l.data.valid.begin(), l.data.valid.end());
  all.insert(all.end(), l.data.test.begin(), l.data.test.end());
  auto samples = data::select_dates(all, begin, end);
  if (samples.empty()) throw DataError("no rows in the requested date range");
  const auto fs = pipeline::forecast(l.model, l.data.encoder, samples, l.data.window);
  const fs::path path(out_path);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  auto f = open_out(path);
  csv::write_row(f, {"date", "series_id", "group", "y_hat"});
  for (const auto& r : fs) csv::write_row(f, {data::format_date(r.date), r.series_id, r.group, csv::format_double(r.y_hat)});
  out << "wrote " << fs.size() << " predictions to " << path.string() << '\n';
  return 0;
}

// ---------------------------------------------------------------- analyze-embeddings

struct AnalyzeFlags {
  std::string checkpoint;
  std::string feature;
  std::vector<std::string> neighbors;
  std::size_t k = 6;
  std::string out_dir = "analysis";
  bool all_neighbors = false;
  bool normalize = false;
};

int cmd_analyze(const AnalyzeFlags& f, std::ostream& out) {
  const auto c = ckpt::load_checkpoint(f.checkpoint);
  const ModelSpec spec = c.model_spec();
  if (!has_stock2vec(spec.kind)) {
    throw LookupError("a " + to_string(spec.kind) + " checkpoint has no categorical embeddings to analyze");
  }
  const auto encoder = pipeline::checkpoint_encoder(c);
  const auto model = ckpt::model_from_checkpoint<float>(c);
  const std::string feature = f.feature.empty() ? encoder.schema.categorical.at(0) : f.feature;
  const auto& cats = encoder.schema.categorical;
  const auto it = std::find(cats.begin(), cats.end(), feature);
  if (it == cats.end()) {
    std::string names;
    for (const auto& n : cats) names += (names.empty() ? "" : ", ") + n;
    throw LookupError("no embedding for feature '" + feature + "' (available: " + names + ")");
  }
  const auto& labels = encoder.vocabularies[static_cast<std::size_t>(it - cats.begin())].labels();
  auto em = analysis::extract_embeddings(model, feature, labels);
  if (f.normalize) {
    for (std::size_t i = 0; i < em.rows(); ++i) {
      double n = 0.0;
      for (std::size_t j = 0; j < em.dim; ++j) n += em.values[i * em.dim + j] * em.values[i * em.dim + j];
      n = std::sqrt(n);
      if (n == 0.0) throw DegenerateVectorError("zero embedding row for '" + em.labels[i] + "'");
      for (std::size_t j = 0; j < em.dim; ++j) em.values[i * em.dim + j] /= n;
    }
  }
  const auto result = analysis::pca(em);

  std::vector<std::string> queries = f.neighbors;
  if (f.all_neighbors) queries = labels;
  std::vector<analysis::NeighborTable> tables;
  for (const auto& q : queries) {
    tables.push_back({q, analysis::nearest_neighbors(em, q, f.k)});
    out << q << ":";
    for (const auto& n : tables.back().neighbors) out << ' ' << n.label << " (" << csv::format_double(n.distance, 4) << ")";
    out << '\n';
  }
  // Group labels for plots: the series' group when the feature's labels are series ids.
  const auto series_groups = pipeline::checkpoint_groups(c);
  std::map<std::string, std::string> group_of;
  for (const auto& label : labels) {
    const auto g = series_groups.find(label);
    group_of[label] = g == series_groups.end() ? "" : g->second;
  }
  analysis::export_report(f.out_dir, em, result, group_of, tables);
  out << feature << ": " << em.rows() << " labels x " << em.dim << " dims; PC1 explains "
      << csv::format_double(100.0 * result.ratios.at(0), 4) << "% of variance; reports in " << f.out_dir << '\n';
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stock2Vec forecasting toolkit", "s2v"};
  app.require_subcommand(1);

  GenFlags gen;
  auto* gen_cmd = app.add_subcommand("gen-synthetic", "write a synthetic panel with group structure");
  gen_cmd->add_option("--series", gen.syn.series, "number of series (K)");
  gen_cmd->add_option("--groups", gen.syn.groups, "number of groups (G)");
  gen_cmd->add_option("--days", gen.syn.days, "number of trading days (N)");
  gen_cmd->add_option("--seed", gen.syn.seed, "generator seed");
  gen_cmd->add_option("--out,-o", gen.out, "output CSV path");

  CommonFlags train_flags;
  bool pretrain_auto = false;
  auto* train_cmd = app.add_subcommand("train", "train one model through its staged protocol");
  add_common(train_cmd, train_flags);
  train_cmd->add_flag("--pretrain-auto", pretrain_auto, "hybrids: train the stock2vec and temporal parts first");

  std::string eval_ckpt, eval_data, eval_out = "eval", eval_part = "test";
  auto* eval_cmd = app.add_subcommand("evaluate", "score a checkpoint on one partition");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--data", eval_data, "CSV (default: the training data recorded in the checkpoint)");
  eval_cmd->add_option("--out-dir", eval_out, "report directory");
  eval_cmd->add_option("--split", eval_part, "train, valid or test");

  std::string pred_ckpt, pred_data, pred_out = "predictions.csv", pred_from, pred_to;
  auto* pred_cmd = app.add_subcommand("predict", "write one-step-ahead forecasts for a date range");
  pred_cmd->add_option("--checkpoint", pred_ckpt, "checkpoint file")->required();
  pred_cmd->add_option("--data", pred_data, "CSV (default: the training data recorded in the checkpoint)");
  pred_cmd->add_option("--out,-o", pred_out, "output CSV path");
  pred_cmd->add_option("--from", pred_from, "first date (default: test start)");
  pred_cmd->add_option("--to", pred_to, "end date, exclusive (default: open)");

  AnalyzeFlags an;
  auto* an_cmd = app.add_subcommand("analyze-embeddings", "PCA and cosine neighbors of learned embeddings");
  an_cmd->add_option("--checkpoint", an.checkpoint, "checkpoint file")->required();
  an_cmd->add_option("--feature", an.feature, "categorical feature (default: the first)");
  an_cmd->add_option("--neighbors", an.neighbors, "labels whose neighbors are listed; repeatable");
  an_cmd->add_flag("--all-neighbors", an.all_neighbors, "list neighbors of every label");
  an_cmd->add_option("-k", an.k, "neighbors per label")->check(CLI::PositiveNumber);
  an_cmd->add_option("--out-dir", an.out_dir, "report directory");
  an_cmd->add_flag("--normalize", an.normalize, "L2-normalise rows before PCA");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  try {
    if (*gen_cmd) return cmd_gen(gen, out);
    if (*train_cmd) return cmd_train(train_flags, pretrain_auto, out);
    if (*eval_cmd) return cmd_evaluate(eval_ckpt, eval_data, eval_out, eval_part, out);
    if (*pred_cmd) return cmd_predict(pred_ckpt, pred_data, pred_out, pred_from, pred_to, out);
    if (*an_cmd) return cmd_analyze(an, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

int run_cli(int argc, const char* const* argv) { return run_cli(argc, argv, std::cout, std::cerr); }

}  // namespace s2v
