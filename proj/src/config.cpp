#include "s2v/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <ostream>
#include <set>
#include <sstream>

#include "s2v/csv.hpp"
#include "s2v/errors.hpp"

namespace s2v {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::string join(const std::vector<std::string>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + xs[i];
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  return x;
}

std::size_t parse_size(const std::string& key, const std::string& v) { return static_cast<std::size_t>(parse_u64(key, v)); }

double parse_real(const std::string& key, const std::string& v) {
  double x = 0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size() || !std::isfinite(x))
    throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("'" + key + "' expects true or false, got '" + v + "'");
}

std::string fmt(double v) { return csv::format_double(v); }
std::string fmt(std::size_t v) { return std::to_string(v); }

std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& s : split_list(v)) out.push_back(parse_size(key, s));
  return out;
}

std::vector<double> parse_reals(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& s : split_list(v)) out.push_back(parse_real(key, s));
  return out;
}

template <class X>
std::string fmt_list(const std::vector<X>& xs) {
  std::vector<std::string> s;
  for (const auto& x : xs) s.push_back(fmt(x));
  return join(s);
}

struct Key {
  const char* name;
  const char* origin;  // where the default comes from
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define S2V_SIZE(field) \
  [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_size(k, v); }, \
      [](const RunConfig& c) { return fmt(c.field); }
#define S2V_REAL(field) \
  [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_real(k, v); }, \
      [](const RunConfig& c) { return fmt(c.field); }
#define S2V_TEXT(field) \
  [](RunConfig& c, const std::string&, const std::string& v) { c.field = v; }, \
      [](const RunConfig& c) { return c.field; }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"data", "required: input CSV", S2V_TEXT(data)},
      {"categorical", "dataset schema",
       [](RunConfig& c, const std::string&, const std::string& v) { c.schema.categorical = split_list(v); },
       [](const RunConfig& c) { return join(c.schema.categorical); }},
      {"continuous", "dataset schema",
       [](RunConfig& c, const std::string&, const std::string& v) { c.schema.continuous = split_list(v); },
       [](const RunConfig& c) { return join(c.schema.continuous); }},
      {"group_column", "dataset schema; per-group metric breakdown", S2V_TEXT(schema.group_column)},
      {"valid_start", "empty = date at 70% of unique dates", S2V_TEXT(valid_start)},
      {"test_start", "empty = date at 85% of unique dates", S2V_TEXT(test_start)},
      {"window", "about one trading year of history", S2V_SIZE(window)},
      {"target_mode", "change from the last observed value",
       [](RunConfig& c, const std::string&, const std::string& v) { c.target_mode = data::parse_target_mode(v); },
       [](const RunConfig& c) { return data::to_string(c.target_mode); }},
      {"model", "one of ts-tcn, ts-lstm, stock2vec, lstm-stock2vec, tcn-stock2vec",
       [](RunConfig& c, const std::string&, const std::string& v) { c.model = parse_model_kind(v); },
       [](const RunConfig& c) { return to_string(c.model); }},
      {"embedding_max_dim", "reference: dim = min(ceil(|C|/2), 50)", S2V_SIZE(embedding_max_dim)},
      {"s2v_hidden", "reference: 1024, 512",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.s2v_hidden = parse_sizes(k, v); },
       [](const RunConfig& c) { return fmt_list(c.s2v_hidden); }},
      {"s2v_dropout", "reference: 0.001, 0.01",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.s2v_dropout = parse_reals(k, v); },
       [](const RunConfig& c) { return fmt_list(c.s2v_dropout); }},
      {"tcn_blocks", "reference: 8 blocks, dilations 1..128", S2V_SIZE(tcn_blocks)},
      {"tcn_channels", "reference: 16", S2V_SIZE(tcn_channels)},
      {"tcn_kernel", "reference: 2", S2V_SIZE(tcn_kernel)},
      {"tcn_dropout", "reference: 0.01", S2V_REAL(tcn_dropout)},
      {"lstm_layers", "reference: 2", S2V_SIZE(lstm_layers)},
      {"lstm_hidden", "reference: 50", S2V_SIZE(lstm_hidden)},
      {"feature_map", "reference: 30", S2V_SIZE(feature_map)},
      {"head_hidden", "chosen: width not given",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.head_hidden = parse_sizes(k, v); },
       [](const RunConfig& c) { return fmt_list(c.head_hidden); }},
      {"batch_size", "reference: 128", S2V_SIZE(protocol.batch_size)},
      {"clip_norm", "chosen: global-norm clip", S2V_REAL(protocol.clip_norm)},
      {"patience", "chosen: early-stopping patience", S2V_SIZE(protocol.patience)},
      {"min_delta", "chosen: improvement threshold", S2V_REAL(protocol.min_delta)},
      {"ts_lr", "reference: Adam 1e-4", S2V_REAL(protocol.ts_lr)},
      {"ts_epochs", "chosen: epoch count not given", S2V_SIZE(protocol.ts_epochs)},
      {"s2v_max_lr", "reference: one-cycle peak 1e-3", S2V_REAL(protocol.s2v_max_lr)},
      {"s2v_cycle_epochs", "reference: 3-epoch cycles", S2V_SIZE(protocol.s2v_cycle_epochs)},
      {"s2v_cycles", "chosen: cycle count not given", S2V_SIZE(protocol.s2v_cycles)},
      {"head_max_lr", "reference: 3e-4", S2V_REAL(protocol.head_max_lr)},
      {"head_cycle_epochs", "reference: 2 epochs per cycle", S2V_SIZE(protocol.head_cycle_epochs)},
      {"head_cycles", "reference: 2 cycles", S2V_SIZE(protocol.head_cycles)},
      {"finetune_lr", "reference: Adam 1e-5", S2V_REAL(protocol.finetune_lr)},
      {"finetune_epochs", "reference: 10 epochs", S2V_SIZE(protocol.finetune_epochs)},
      {"seed", "root seed; init/shuffle/dropout seeds derive from it",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = parse_u64(k, v); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      {"out_dir", "output directory", S2V_TEXT(out_dir)},
      {"pretrained_stock2vec", "hybrids: stock2vec checkpoint", S2V_TEXT(pretrained_stock2vec)},
      {"pretrained_temporal", "hybrids: ts-tcn or ts-lstm checkpoint", S2V_TEXT(pretrained_temporal)},
      {"log_wall_time", "chosen: off keeps logs byte-identical across runs; true records seconds per epoch",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.log_wall_time = parse_bool(k, v); },
       [](const RunConfig& c) { return std::string(c.log_wall_time ? "true" : "false"); }},
  };
  return table;
}

#undef S2V_SIZE
#undef S2V_REAL
#undef S2V_TEXT

}  // namespace

ModelSpec RunConfig::model_spec(const data::Encoder& encoder) const {
  ModelSpec s = data::spec_for(model, encoder, embedding_max_dim);
  s.s2v_hidden = s2v_hidden;
  s.s2v_dropout = s2v_dropout;
  s.tcn_blocks = tcn_blocks;
  s.tcn_channels = tcn_channels;
  s.tcn_kernel = tcn_kernel;
  s.tcn_dropout = tcn_dropout;
  s.lstm_layers = lstm_layers;
  s.lstm_hidden = lstm_hidden;
  s.feature_map = feature_map;
  s.head_hidden = head_hidden;
  s.validate();
  return s;
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : keys()) {
    if (key == k.name) {
      k.set(cfg, key, trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_config(std::istream& in, const std::string& source) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (!seen.insert(key).second) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    try {
      apply_setting(cfg, key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  return parse_config(in, path);
}

void write_effective_config(std::ostream& out, const RunConfig& cfg) {
  out << "# effective configuration\n";
  for (const auto& k : keys()) out << k.name << " = " << k.get(cfg) << "  # " << k.origin << '\n';
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : keys()) out.push_back(k.name);
  return out;
}

}  // namespace s2v
