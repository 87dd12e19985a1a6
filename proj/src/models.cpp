#include "s2v/models.hpp"

#include "s2v/errors.hpp"

namespace s2v::nn {

template <class T>
ForecastModel<T>::ForecastModel(ModelSpec spec, std::uint64_t init_seed) : spec_(std::move(spec)) {
  spec_.validate();
  Rng rng(init_seed);
  const auto kind = spec_.kind;
  if (has_stock2vec(kind)) {
    for (const auto& c : spec_.categoricals) {
      embeddings_.emplace_back(c.name, c.cardinality + 1, c.dim, rng);
    }
    std::size_t in = spec_.trunk_input_width();
    for (auto h : spec_.s2v_hidden) {
      trunk_.emplace_back(in, h, rng);
      in = h;
    }
    if (!is_hybrid(kind)) trunk_out_.emplace(in, 1, rng);
  }
  if (has_tcn(kind)) {
    tcn_.emplace(spec_.history_channels, spec_.tcn_blocks, spec_.tcn_channels, spec_.tcn_kernel,
                 spec_.tcn_dropout, spec_.temporal_out_width(), rng);
  }
  if (has_lstm(kind)) {
    lstm_.emplace(spec_.history_channels, spec_.lstm_layers, spec_.lstm_hidden,
                  spec_.temporal_out_width(), rng);
  }
  if (is_hybrid(kind)) {
    std::size_t in = spec_.trunk_width() + spec_.feature_map;
    for (auto h : spec_.head_hidden) {
      head_.emplace_back(in, h, rng);
      in = h;
    }
    head_.emplace_back(in, 1, rng);
  }
}

template <class T>
Context<T> ForecastModel<T>::module_ctx(const Context<T>& ctx, const char* group) const {
  return Context<T>{ctx.tape, ctx.training && !frozen_.contains(group), ctx.rng};
}

template <class T>
Tensor<T> ForecastModel<T>::trunk_features(const Context<T>& ctx, const Batch<T>& batch) const {
  if (!has_stock2vec(spec_.kind)) throw SchemaError("model has no stock2vec trunk");
  if (batch.cats.size() != spec_.categoricals.size()) {
    throw SchemaError("expected " + std::to_string(spec_.categoricals.size()) +
                      " categorical features, got " + std::to_string(batch.cats.size()));
  }
  const std::size_t B = batch.size();
  if (spec_.num_continuous > 0 &&
      (!batch.conts.defined() || batch.conts.rank() != 2 || batch.conts.dim(1) != spec_.num_continuous ||
       batch.conts.dim(0) != B)) {
    throw SchemaError("expected continuous block [" + std::to_string(B) + "x" +
                      std::to_string(spec_.num_continuous) + "]");
  }
  const auto c = module_ctx(ctx, kTrunk);
  std::vector<Tensor<T>> parts;
  for (std::size_t f = 0; f < embeddings_.size(); ++f) {
    if (batch.cats[f].size() != B) {
      throw SchemaError("categorical '" + spec_.categoricals[f].name + "' has " +
                        std::to_string(batch.cats[f].size()) + " rows, batch has " +
                        std::to_string(B));
    }
    parts.push_back(embeddings_[f].forward(c, batch.cats[f]));
  }
  if (spec_.num_continuous > 0) parts.push_back(batch.conts);
  Tensor<T> h = parts.size() == 1 ? parts.front() : ad::concat(c.tape, parts, 1);
  for (std::size_t l = 0; l < trunk_.size(); ++l) {
    h = dropout(c, ad::relu(c.tape, trunk_[l].forward(c, h)), spec_.s2v_dropout[l]);
  }
  return h;
}

template <class T>
Tensor<T> ForecastModel<T>::temporal_output(const Context<T>& ctx, const Tensor<T>& history) const {
  if (!history.defined() || history.rank() != 3 || history.dim(2) < 1) {
    throw WindowError("history window must be [B x C x T] with T >= 1");
  }
  if (history.dim(1) != spec_.history_channels) {
    throw SchemaError("history has " + std::to_string(history.dim(1)) + " channels, expected " +
                      std::to_string(spec_.history_channels));
  }
  const auto c = module_ctx(ctx, kTemporal);
  if (tcn_) return tcn_->forward_last(c, history);
  if (lstm_) return lstm_->forward(c, history);
  throw SchemaError("model has no temporal module");
}

template <class T>
Tensor<T> ForecastModel<T>::head_forward(const Context<T>& ctx, const Tensor<T>& features) const {
  const auto c = module_ctx(ctx, kHead);
  Tensor<T> h = features;
  for (std::size_t l = 0; l + 1 < head_.size(); ++l) h = ad::relu(c.tape, head_[l].forward(c, h));
  return head_.back().forward(c, h);
}

template <class T>
Tensor<T> ForecastModel<T>::forward(const Context<T>& ctx, const Batch<T>& batch) const {
  switch (spec_.kind) {
    case ModelKind::ts_tcn:
    case ModelKind::ts_lstm:
      return temporal_output(ctx, batch.history);
    case ModelKind::stock2vec:
      return trunk_out_->forward(module_ctx(ctx, kTrunkOut), trunk_features(ctx, batch));
    case ModelKind::lstm_stock2vec:
    case ModelKind::tcn_stock2vec: {
      auto f = trunk_features(ctx, batch);
      if (batch.history.defined() && batch.history.rank() == 3 && batch.history.dim(0) != f.dim(0)) {
        throw SchemaError("history batch size differs from feature batch size");
      }
      auto tmap = ad::relu(ctx.tape, temporal_output(ctx, batch.history));
      return head_forward(ctx, ad::concat(ctx.tape, {f, tmap}, 1));
    }
  }
  throw SchemaError("unknown model kind");
}

template <class T>
ParamList<T> ForecastModel<T>::parameters() const {
  ParamList<T> out;
  for (const auto& e : embeddings_) e.collect(out, "stock2vec.embed." + e.feature(), kTrunk);
  for (std::size_t l = 0; l < trunk_.size(); ++l)
    trunk_[l].collect(out, "stock2vec.fc" + std::to_string(l + 1), kTrunk);
  if (trunk_out_) trunk_out_->collect(out, "stock2vec.out", kTrunkOut);
  if (tcn_) {
    tcn_->collect_blocks(out, "tcn", kTemporal);
    tcn_->collect_projection(out, "tcn", kTemporalProj);
  }
  if (lstm_) {
    lstm_->collect_layers(out, "lstm", kTemporal);
    lstm_->collect_projection(out, "lstm", kTemporalProj);
  }
  for (std::size_t l = 0; l < head_.size(); ++l) {
    const bool last = l + 1 == head_.size();
    head_[l].collect(out, last ? std::string("head.out") : "head.fc" + std::to_string(l + 1), kHead);
  }
  return out;
}

template <class T>
std::vector<NamedTensor<T>> ForecastModel<T>::trainable() const {
  std::vector<NamedTensor<T>> out;
  for (auto& p : parameters())
    if (p.trainable && !frozen_.contains(p.group)) out.push_back(p);
  return out;
}

template <class T>
void ForecastModel<T>::set_frozen(const std::set<std::string>& groups) {
  frozen_ = groups;
  for (auto& p : parameters()) {
    if (p.trainable) p.tensor.set_requires_grad(!frozen_.contains(p.group));
  }
}

template <class T>
const Embedding<T>* ForecastModel<T>::embedding(const std::string& feature) const {
  for (const auto& e : embeddings_)
    if (e.feature() == feature) return &e;
  return nullptr;
}

template class ForecastModel<float>;
template class ForecastModel<double>;

}  // namespace s2v::nn
