#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "s2v/dataset.hpp"
#include "s2v/model_spec.hpp"
#include "s2v/trainer.hpp"

namespace s2v {

// Grammar: one `key = value` per line; `#` starts a comment; blank lines are
// ignored; list values are comma-separated. Unknown or repeated keys are
// rejected with ConfigError.
struct RunConfig {
  // data
  std::string data;
  data::Schema schema;
  std::string valid_start;  // empty: date at 70% of the sorted unique dates
  std::string test_start;   // empty: date at 85%
  std::size_t window = 260;
  data::TargetMode target_mode = data::TargetMode::change;
  // model
  ModelKind model = ModelKind::stock2vec;
  std::size_t embedding_max_dim = 50;
  std::vector<std::size_t> s2v_hidden{1024, 512};
  std::vector<double> s2v_dropout{0.001, 0.01};
  std::size_t tcn_blocks = 8;
  std::size_t tcn_channels = 16;
  std::size_t tcn_kernel = 2;
  double tcn_dropout = 0.01;
  std::size_t lstm_layers = 2;
  std::size_t lstm_hidden = 50;
  std::size_t feature_map = 30;
  std::vector<std::size_t> head_hidden{128};
  // training
  train::ProtocolConfig protocol;
  // run
  std::uint64_t seed = 0;
  std::string out_dir = "runs";
  std::string pretrained_stock2vec;
  std::string pretrained_temporal;
  bool log_wall_time = false;  // wall-clock seconds make logs run-dependent

  // Architecture fields of a ModelSpec for this config (categorical
  // cardinalities come from the fitted encoder).
  ModelSpec model_spec(const data::Encoder& encoder) const;
};

RunConfig parse_config(std::istream& in, const std::string& source = "<config>");
RunConfig load_config(const std::string& path);
// Applies one `key=value` assignment (same value syntax as the file).
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

// Every key with its effective value, annotated with where the default comes
// from. Parsing the dump yields the same configuration.
void write_effective_config(std::ostream& out, const RunConfig& cfg);

std::vector<std::string> config_keys();

}  // namespace s2v
