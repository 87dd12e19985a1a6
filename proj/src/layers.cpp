#include "s2v/layers.hpp"

#include <cmath>
#include <cstdint>

#include "s2v/errors.hpp"

namespace s2v::nn {

template <class T>
void glorot_uniform(Tensor<T>& w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : w.mutable_data()) v = static_cast<T>(dist(rng));
}

template <class T>
Tensor<T> dropout(const Context<T>& ctx, const Tensor<T>& x, double p) {
  if (!ctx.training || p <= 0.0) return x;
  if (p >= 1.0) throw ContractError("dropout probability must be < 1");
  if (ctx.rng == nullptr) throw ContractError("dropout in training mode needs an rng");
  // Each 64-bit draw decides two elements: drop when a 32-bit half < p * 2^32.
  const auto threshold = static_cast<std::uint64_t>(std::llround(p * 4294967296.0));
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(x.numel());
  for (std::size_t i = 0; i < mask.size(); i += 2) {
    const std::uint64_t r = (*ctx.rng)();
    mask[i] = (r & 0xffffffffu) < threshold ? T(0) : keep_scale;
    if (i + 1 < mask.size()) mask[i + 1] = (r >> 32) < threshold ? T(0) : keep_scale;
  }
  return ad::mul(ctx.tape, x, Tensor<T>(x.shape(), std::move(mask)));
}

// ---------------------------------------------------------------- Embedding

template <class T>
Embedding<T>::Embedding(std::string feature, std::size_t rows, std::size_t dim, Rng& rng)
    : feature_(std::move(feature)), weight_(Tensor<T>::zeros({rows, dim}, true)) {
  if (rows == 0 || dim == 0) throw ContractError("embedding '" + feature_ + "' has zero size");
  std::uniform_real_distribution<double> dist(-0.05, 0.05);
  for (auto& v : weight_.mutable_data()) v = static_cast<T>(dist(rng));
}

template <class T>
Tensor<T> Embedding<T>::forward(const Context<T>& ctx,
                                std::span<const std::int32_t> indices) const {
  for (auto idx : indices) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= rows()) {
      throw IndexError("embedding '" + feature_ + "': index " + std::to_string(idx) +
                       " outside [0," + std::to_string(rows()) + ")");
    }
  }
  return ad::gather_rows(ctx.tape, weight_, indices);
}

template <class T>
void Embedding<T>::collect(ParamList<T>& out, const std::string& prefix,
                           const std::string& group) const {
  out.push_back({prefix, group, weight_, true});
}

// ---------------------------------------------------------------- Dense

template <class T>
Dense<T>::Dense(std::size_t in, std::size_t out, Rng& rng)
    : weight_(Tensor<T>::zeros({in, out}, true)), bias_(Tensor<T>::zeros({out}, true)) {
  glorot_uniform(weight_, in, out, rng);
}

template <class T>
Tensor<T> Dense<T>::forward(const Context<T>& ctx, const Tensor<T>& x) const {
  return ad::add_bias(ctx.tape, ad::matmul(ctx.tape, x, weight_), bias_);
}

template <class T>
void Dense<T>::collect(ParamList<T>& out, const std::string& prefix,
                       const std::string& group) const {
  out.push_back({prefix + ".weight", group, weight_, true});
  out.push_back({prefix + ".bias", group, bias_, true});
}

// ---------------------------------------------------------------- CausalConv1d

template <class T>
CausalConv1d<T>::CausalConv1d(std::size_t in_channels, std::size_t out_channels,
                              std::size_t kernel_width, std::size_t dilation, Rng& rng)
    : kernel_(Tensor<T>::zeros({out_channels, in_channels, kernel_width}, true)),
      bias_(Tensor<T>::zeros({out_channels}, true)),
      dilation_(dilation) {
  if (kernel_width == 0 || dilation == 0) {
    throw ContractError("conv kernel width and dilation must be >= 1");
  }
  glorot_uniform(kernel_, in_channels * kernel_width, out_channels * kernel_width, rng);
}

template <class T>
Tensor<T> CausalConv1d<T>::forward(const Context<T>& ctx, const Tensor<T>& x) const {
  return ad::causal_conv1d(ctx.tape, x, kernel_, bias_, dilation_);
}

template <class T>
void CausalConv1d<T>::collect(ParamList<T>& out, const std::string& prefix,
                              const std::string& group) const {
  out.push_back({prefix + ".weight", group, kernel_, true});
  out.push_back({prefix + ".bias", group, bias_, true});
}

// ---------------------------------------------------------------- BatchNorm

template <class T>
BatchNorm<T>::BatchNorm(std::size_t channels)
    : gamma_(Tensor<T>::full({channels}, T(1), true)),
      beta_(Tensor<T>::zeros({channels}, true)),
      running_mean_(Tensor<T>::zeros({channels})),
      running_var_(Tensor<T>::full({channels}, T(1))) {}

template <class T>
Tensor<T> BatchNorm<T>::forward(const Context<T>& ctx, const Tensor<T>& x) const {
  const T eps = static_cast<T>(kEps);
  if (!ctx.training) {
    return ad::batch_norm_eval(ctx.tape, x, gamma_, beta_, running_mean_.data(),
                               running_var_.data(), eps);
  }
  std::vector<T> mean, var;
  auto y = ad::batch_norm_train(ctx.tape, x, gamma_, beta_, eps, &mean, &var);
  Tensor<T> rm = running_mean_;
  Tensor<T> rv = running_var_;
  auto rmd = rm.mutable_data();
  auto rvd = rv.mutable_data();
  const T m = static_cast<T>(kMomentum);
  for (std::size_t c = 0; c < mean.size(); ++c) {
    rmd[c] = (T(1) - m) * rmd[c] + m * mean[c];
    rvd[c] = (T(1) - m) * rvd[c] + m * var[c];
  }
  return y;
}

template <class T>
void BatchNorm<T>::collect(ParamList<T>& out, const std::string& prefix,
                           const std::string& group) const {
  out.push_back({prefix + ".gamma", group, gamma_, true});
  out.push_back({prefix + ".beta", group, beta_, true});
  out.push_back({prefix + ".running_mean", group, running_mean_, false});
  out.push_back({prefix + ".running_var", group, running_var_, false});
}

// ---------------------------------------------------------------- ResidualBlock

template <class T>
ResidualBlock<T>::ResidualBlock(std::size_t in_channels, std::size_t channels,
                                std::size_t kernel_width, std::size_t dilation, double dropout,
                                Rng& rng)
    : conv1_(in_channels, channels, kernel_width, dilation, rng),
      conv2_(channels, channels, kernel_width, dilation, rng),
      bn1_(channels),
      bn2_(channels),
      dropout_(dropout),
      has_skip_(in_channels != channels) {
  if (has_skip_) skip_ = CausalConv1d<T>(in_channels, channels, 1, 1, rng);
}

template <class T>
Tensor<T> ResidualBlock<T>::forward(const Context<T>& ctx, const Tensor<T>& x) const {
  auto& tape = ctx.tape;
  auto h = dropout(ctx, ad::relu(tape, bn1_.forward(ctx, conv1_.forward(ctx, x))), dropout_);
  h = dropout(ctx, ad::relu(tape, bn2_.forward(ctx, conv2_.forward(ctx, h))), dropout_);
  const auto skip = has_skip_ ? skip_.forward(ctx, x) : x;
  return ad::relu(tape, ad::add(tape, h, skip));
}

template <class T>
void ResidualBlock<T>::collect(ParamList<T>& out, const std::string& prefix,
                               const std::string& group) const {
  conv1_.collect(out, prefix + ".conv1", group);
  bn1_.collect(out, prefix + ".bn1", group);
  conv2_.collect(out, prefix + ".conv2", group);
  bn2_.collect(out, prefix + ".bn2", group);
  if (has_skip_) skip_.collect(out, prefix + ".skip", group);
}

// ---------------------------------------------------------------- TCNStack

template <class T>
TCNStack<T>::TCNStack(std::size_t in_channels, std::size_t blocks, std::size_t channels,
                      std::size_t kernel_width, double dropout, std::size_t out_width, Rng& rng) {
  if (blocks == 0) throw ContractError("TCN needs at least one block");
  std::size_t in = in_channels;
  for (std::size_t b = 0; b < blocks; ++b) {
    blocks_.emplace_back(in, channels, kernel_width, std::size_t{1} << b, dropout, rng);
    in = channels;
  }
  proj_ = CausalConv1d<T>(channels, out_width, 1, 1, rng);
}

template <class T>
Tensor<T> TCNStack<T>::forward_blocks(const Context<T>& ctx, const Tensor<T>& x) const {
  if (x.rank() != 3 || x.dim(2) == 0) {
    throw WindowError("TCN input must be [B x C x T] with T >= 1, got " + ad::shape_str(x.shape()));
  }
  Tensor<T> h = x;
  for (const auto& block : blocks_) h = block.forward(ctx, h);
  return h;
}

template <class T>
Tensor<T> TCNStack<T>::forward_sequence(const Context<T>& ctx, const Tensor<T>& x) const {
  return proj_.forward(ctx, forward_blocks(ctx, x));
}

template <class T>
Tensor<T> TCNStack<T>::forward_last(const Context<T>& ctx, const Tensor<T>& x) const {
  auto h = forward_blocks(ctx, x);
  const std::size_t T_len = h.dim(2);
  auto last = ad::slice(ctx.tape, h, 2, T_len - 1, T_len);
  auto y = proj_.forward(ctx, last);
  return ad::reshape(ctx.tape, y, {y.dim(0), y.dim(1)});
}

template <class T>
void TCNStack<T>::collect_blocks(ParamList<T>& out, const std::string& prefix,
                                 const std::string& group) const {
  for (std::size_t b = 0; b < blocks_.size(); ++b)
    blocks_[b].collect(out, prefix + ".block" + std::to_string(b), group);
}

template <class T>
void TCNStack<T>::collect_projection(ParamList<T>& out, const std::string& prefix,
                                     const std::string& group) const {
  proj_.collect(out, prefix + ".proj", group);
}

template <class T>
std::size_t TCNStack<T>::receptive_field() const {
  std::size_t rf = 1;
  for (const auto& b : blocks_) rf += b.reach();
  return rf;
}

// ---------------------------------------------------------------- LSTM

template <class T>
std::pair<Tensor<T>, Tensor<T>> lstm_cell(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& h,
                                          const Tensor<T>& c, const Tensor<T>& w_ih,
                                          const Tensor<T>& w_hh, const Tensor<T>& bias) {
  const std::size_t H = w_hh.dim(0);
  auto gates = ad::add_bias(
      tape, ad::add(tape, ad::matmul(tape, x, w_ih), ad::matmul(tape, h, w_hh)), bias);
  auto i = ad::sigmoid(tape, ad::slice(tape, gates, 1, 0, H));
  auto f = ad::sigmoid(tape, ad::slice(tape, gates, 1, H, 2 * H));
  auto g = ad::tanh(tape, ad::slice(tape, gates, 1, 2 * H, 3 * H));
  auto o = ad::sigmoid(tape, ad::slice(tape, gates, 1, 3 * H, 4 * H));
  auto c_next = ad::add(tape, ad::mul(tape, f, c), ad::mul(tape, i, g));
  auto h_next = ad::mul(tape, o, ad::tanh(tape, c_next));
  return {h_next, c_next};
}

template <class T>
LSTMStack<T>::LSTMStack(std::size_t in_channels, std::size_t layers, std::size_t hidden,
                        std::size_t out_width, Rng& rng)
    : hidden_(hidden) {
  if (layers == 0 || hidden == 0) throw ContractError("LSTM needs >= 1 layer and hidden unit");
  std::size_t in = in_channels;
  for (std::size_t l = 0; l < layers; ++l) {
    Layer layer{Tensor<T>::zeros({in, 4 * hidden}, true), Tensor<T>::zeros({hidden, 4 * hidden}, true),
                Tensor<T>::zeros({4 * hidden}, true)};
    glorot_uniform(layer.w_ih, in, 4 * hidden, rng);
    glorot_uniform(layer.w_hh, hidden, 4 * hidden, rng);
    auto b = layer.bias.mutable_data();
    for (std::size_t j = hidden; j < 2 * hidden; ++j) b[j] = T(1);  // forget gate
    layers_.push_back(std::move(layer));
    in = hidden;
  }
  proj_ = Dense<T>(hidden, out_width, rng);
}

template <class T>
Tensor<T> LSTMStack<T>::forward(const Context<T>& ctx, const Tensor<T>& x) const {
  if (x.rank() != 3 || x.dim(2) == 0) {
    throw WindowError("LSTM input must be [B x C x T] with T >= 1, got " +
                      ad::shape_str(x.shape()));
  }
  auto& tape = ctx.tape;
  const std::size_t B = x.dim(0), C = x.dim(1), steps = x.dim(2);
  std::vector<Tensor<T>> h(layers_.size(), Tensor<T>::zeros({B, hidden_}));
  std::vector<Tensor<T>> c(layers_.size(), Tensor<T>::zeros({B, hidden_}));
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor<T> input = ad::reshape(tape, ad::slice(tape, x, 2, t, t + 1), {B, C});
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& L = layers_[l];
      std::tie(h[l], c[l]) = lstm_cell(tape, input, h[l], c[l], L.w_ih, L.w_hh, L.bias);
      input = h[l];
    }
  }
  return proj_.forward(ctx, h.back());
}

template <class T>
void LSTMStack<T>::collect_layers(ParamList<T>& out, const std::string& prefix,
                                  const std::string& group) const {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    out.push_back({p + ".w_ih", group, layers_[l].w_ih, true});
    out.push_back({p + ".w_hh", group, layers_[l].w_hh, true});
    out.push_back({p + ".bias", group, layers_[l].bias, true});
  }
}

template <class T>
void LSTMStack<T>::collect_projection(ParamList<T>& out, const std::string& prefix,
                                      const std::string& group) const {
  proj_.collect(out, prefix + ".proj", group);
}

#define S2V_INSTANTIATE(T)                                                                  \
  template void glorot_uniform(Tensor<T>&, std::size_t, std::size_t, Rng&);                \
  template Tensor<T> dropout(const Context<T>&, const Tensor<T>&, double);                 \
  template class Embedding<T>;                                                             \
  template class Dense<T>;                                                                 \
  template class CausalConv1d<T>;                                                          \
  template class BatchNorm<T>;                                                             \
  template class ResidualBlock<T>;                                                         \
  template class TCNStack<T>;                                                              \
  template class LSTMStack<T>;                                                             \
  template std::pair<Tensor<T>, Tensor<T>> lstm_cell(Tape<T>&, const Tensor<T>&,           \
                                                     const Tensor<T>&, const Tensor<T>&,   \
                                                     const Tensor<T>&, const Tensor<T>&,   \
                                                     const Tensor<T>&);

S2V_INSTANTIATE(float)
S2V_INSTANTIATE(double)
#undef S2V_INSTANTIATE

}  // namespace s2v::nn
