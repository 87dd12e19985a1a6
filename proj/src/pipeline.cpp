#include "s2v/pipeline.hpp"

#include <algorithm>
#include <set>

#include "s2v/errors.hpp"
#include "s2v/rng.hpp"

namespace s2v::pipeline {

SplitDates resolve_split(const RunConfig& cfg, const data::TabularDataset& ds) {
  std::set<data::Date> unique;
  for (const auto& r : ds.rows) unique.insert(r.date);
  const std::vector<data::Date> dates(unique.begin(), unique.end());
  if (dates.size() < 3) throw SplitError("need at least 3 distinct dates to split");
  SplitDates s;
  s.valid_start = cfg.valid_start.empty() ? dates[dates.size() * 70 / 100] : data::parse_date(cfg.valid_start);
  s.test_start = cfg.test_start.empty() ? dates[dates.size() * 85 / 100] : data::parse_date(cfg.test_start);
  return s;
}

Partition parse_partition(const std::string& name) {
  if (name == "train") return Partition::train;
  if (name == "valid") return Partition::valid;
  if (name == "test") return Partition::test;
  throw ConfigError("unknown partition '" + name + "' (expected train, valid or test)");
}

const std::vector<data::WindowedSample>& Prepared::part(Partition p) const {
  switch (p) {
    case Partition::train:
      return train;
    case Partition::valid:
      return valid;
    case Partition::test:
      return test;
  }
  return test;
}

Prepared prepare_fitted(data::TabularDataset ds, const data::Encoder& encoder, SplitDates split, std::size_t window) {
  Prepared p;
  p.encoder = encoder;
  p.split = split;
  p.window = window;
  const auto all = data::make_windows(ds, window, encoder);
  p.train = data::select_dates(all, data::Date::min(), split.valid_start);
  p.valid = data::select_dates(all, split.valid_start, split.test_start);
  p.test = data::select_dates(all, split.test_start, data::Date::max());
  p.dataset = std::move(ds);
  return p;
}

Prepared prepare(const RunConfig& cfg, data::TabularDataset ds) {
  const SplitDates split = resolve_split(cfg, ds);
  const auto parts = data::chrono_split(ds, split.valid_start, split.test_start);
  const auto encoder = data::Encoder::fit(parts.train, cfg.target_mode);
  Prepared p = prepare_fitted(std::move(ds), encoder, split, cfg.window);
  if (p.train.empty() || p.valid.empty()) throw SplitError("training or validation partition has no samples");
  return p;
}

Prepared prepare(const RunConfig& cfg) {
  if (cfg.data.empty()) throw ConfigError("'data' is not set");
  return prepare(cfg, data::load_csv(cfg.data, cfg.schema));
}

TrainResult train_model(const RunConfig& cfg, const Prepared& data, const train::Pretrained& pretrained,
                        const train::EpochSink& sink) {
  const ModelSpec spec = cfg.model_spec(data.encoder);
  nn::ForecastModel<float> model(spec, sub_seed(cfg.seed, "init"));
  train::ProtocolConfig pc = cfg.protocol;
  pc.seed = cfg.seed;
  TrainResult r;
  r.report = train::run_protocol(model, pc, data.train, data.valid, data.window, pretrained, sink);

  nlohmann::json groups = nlohmann::json::object();
  for (const auto& row : data.dataset.rows) groups[row.series_id] = row.group;
  nlohmann::json meta = {
      {"encoder", data.encoder.to_json()},
      {"window", data.window},
      {"valid_start", data::format_date(data.split.valid_start)},
      {"test_start", data::format_date(data.split.test_start)},
      {"data", cfg.data},
      {"groups", groups},
  };
  r.checkpoint = ckpt::make_checkpoint(model, &r.report.optimizer, cfg.seed, r.report.best_valid, std::move(meta));
  return r;
}

namespace {
const nlohmann::json& meta_field(const ckpt::Checkpoint& c, const char* key) {
  if (!c.metadata.is_object() || !c.metadata.contains(key)) {
    throw SchemaError(std::string("checkpoint metadata lacks '") + key + "'");
  }
  return c.metadata.at(key);
}
}  // namespace

data::Encoder checkpoint_encoder(const ckpt::Checkpoint& c) { return data::Encoder::from_json(meta_field(c, "encoder")); }

SplitDates checkpoint_split(const ckpt::Checkpoint& c) {
  return {data::parse_date(meta_field(c, "valid_start").get<std::string>()),
          data::parse_date(meta_field(c, "test_start").get<std::string>())};
}

std::size_t checkpoint_window(const ckpt::Checkpoint& c) { return meta_field(c, "window").get<std::size_t>(); }

std::map<std::string, std::string> checkpoint_groups(const ckpt::Checkpoint& c) {
  return meta_field(c, "groups").get<std::map<std::string, std::string>>();
}

metrics::ForecastSet forecast(const nn::ForecastModel<float>& model, const data::Encoder& encoder,
                              const std::vector<data::WindowedSample>& samples, std::size_t window) {
  const auto scaled = train::predict(model, samples, window);
  metrics::ForecastSet fs;
  fs.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    fs.push_back({s.series_id, s.group, s.date, s.target_raw, encoder.decode_target(scaled[i], s.anchor)});
  }
  return fs;
}

}  // namespace s2v::pipeline
