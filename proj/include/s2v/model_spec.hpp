#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"

namespace s2v {

enum class ModelKind { ts_tcn, ts_lstm, stock2vec, lstm_stock2vec, tcn_stock2vec };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

bool has_stock2vec(ModelKind kind);
bool has_tcn(ModelKind kind);
bool has_lstm(ModelKind kind);
bool has_temporal(ModelKind kind);
bool is_hybrid(ModelKind kind);

// Embedding width rule: half the category count (rounded up), capped at max_dim.
std::size_t embedding_dim(std::size_t cardinality, std::size_t max_dim = 50);

struct CategoricalFeature {
  std::string name;
  std::size_t cardinality = 0;  // vocabulary size; the table has one extra UNK row
  std::size_t dim = 0;
};

// Declarative description of one architecture plus every width that shapes
// its parameters.
struct ModelSpec {
  ModelKind kind = ModelKind::stock2vec;
  std::vector<CategoricalFeature> categoricals;
  std::size_t num_continuous = 0;
  std::size_t history_channels = 1;

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

  // Width of the stock2vec trunk output (last hidden layer).
  std::size_t trunk_width() const;
  std::size_t trunk_input_width() const;
  // Output width of the temporal projection: 1 for TS models, feature_map for hybrids.
  std::size_t temporal_out_width() const;

  void validate() const;
};

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const nlohmann::json& j);
// Hex FNV-1a of the canonical JSON form.
std::string spec_hash(const ModelSpec& spec);

struct ParameterCount {
  std::size_t trainable = 0;
  std::size_t buffers = 0;
};
// Closed-form count (see README "Parameter counts").
ParameterCount parameter_count(const ModelSpec& spec);

}  // namespace s2v
