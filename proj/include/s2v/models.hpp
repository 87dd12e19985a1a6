#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "s2v/layers.hpp"
#include "s2v/model_spec.hpp"

namespace s2v::nn {

// Parameter groups used for freezing and transfer.
inline constexpr const char* kTrunk = "stock2vec";        // embeddings + hidden layers
inline constexpr const char* kTrunkOut = "stock2vec_out"; // stock2vec scalar output layer
inline constexpr const char* kTemporal = "temporal";      // TCN blocks or LSTM layers
inline constexpr const char* kTemporalProj = "temporal_proj";
inline constexpr const char* kHead = "head";

template <class T>
struct Batch {
  std::vector<std::vector<std::int32_t>> cats;  // [feature][row]
  Tensor<T> conts;                              // [B x num_continuous]
  Tensor<T> history;                            // [B x C x T]
  Tensor<T> target;                             // [B x 1]

  std::size_t size() const { return target.defined() ? target.dim(0) : 0; }
};

// One of the five architectures, selected by ModelSpec::kind.
//   ts-tcn / ts-lstm : temporal module with width-1 projection
//   stock2vec        : embeddings ++ continuous -> hidden layers -> dense(1)
//   *-stock2vec      : head(concat(trunk features, relu(temporal feature map)))
template <class T>
class ForecastModel {
 public:
  ForecastModel(ModelSpec spec, std::uint64_t init_seed);

  const ModelSpec& spec() const { return spec_; }

  // Prediction per row, [B x 1].
  Tensor<T> forward(const Context<T>& ctx, const Batch<T>& batch) const;

  // Output of the last stock2vec hidden layer, [B x trunk_width].
  Tensor<T> trunk_features(const Context<T>& ctx, const Batch<T>& batch) const;
  // Temporal projection of the history window, [B x temporal_out_width] (no activation).
  Tensor<T> temporal_output(const Context<T>& ctx, const Tensor<T>& history) const;
  // Head layers of a hybrid applied to already-concatenated features.
  Tensor<T> head_forward(const Context<T>& ctx, const Tensor<T>& features) const;

  // Every parameter and buffer in a stable order.
  ParamList<T> parameters() const;
  // Trainable parameters outside frozen groups.
  std::vector<NamedTensor<T>> trainable() const;

  // Frozen groups lose requires_grad and run in evaluation mode.
  void set_frozen(const std::set<std::string>& groups);
  const std::set<std::string>& frozen() const { return frozen_; }

  const Embedding<T>* embedding(const std::string& feature) const;
  const std::vector<Embedding<T>>& embeddings() const { return embeddings_; }
  const TCNStack<T>* tcn() const { return tcn_ ? &*tcn_ : nullptr; }
  const LSTMStack<T>* lstm() const { return lstm_ ? &*lstm_ : nullptr; }
  const std::vector<Dense<T>>& trunk_layers() const { return trunk_; }

 private:
  Context<T> module_ctx(const Context<T>& ctx, const char* group) const;

  ModelSpec spec_;
  std::vector<Embedding<T>> embeddings_;
  std::vector<Dense<T>> trunk_;
  std::optional<Dense<T>> trunk_out_;
  std::optional<TCNStack<T>> tcn_;
  std::optional<LSTMStack<T>> lstm_;
  std::vector<Dense<T>> head_;
  std::set<std::string> frozen_;
};

extern template class ForecastModel<float>;
extern template class ForecastModel<double>;

}  // namespace s2v::nn
