#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "s2v/ops.hpp"
#include "s2v/rng.hpp"
#include "s2v/tensor.hpp"

namespace s2v::nn {

using ad::Shape;
using ad::Tape;
using ad::Tensor;

template <class T>
struct Context {
  Tape<T>& tape;
  bool training = false;
  Rng* rng = nullptr;  // dropout masks; required when training with p > 0
};

// A parameter (trainable) or buffer (running statistics), addressed by a
// dotted name such as "tcn.block3.conv1.weight".
template <class T>
struct NamedTensor {
  std::string name;
  std::string group;
  Tensor<T> tensor;
  bool trainable = true;
};

template <class T>
using ParamList = std::vector<NamedTensor<T>>;

template <class T>
void glorot_uniform(Tensor<T>& w, std::size_t fan_in, std::size_t fan_out, Rng& rng);

// Inverted dropout: identity at eval time, scales kept units by 1/(1-p) when training.
template <class T>
Tensor<T> dropout(const Context<T>& ctx, const Tensor<T>& x, double p);

template <class T>
class Embedding {
 public:
  Embedding() = default;
  // `rows` counts every index the table accepts (vocabulary plus reserved rows).
  Embedding(std::string feature, std::size_t rows, std::size_t dim, Rng& rng);

  Tensor<T> forward(const Context<T>& ctx, std::span<const std::int32_t> indices) const;
  void collect(ParamList<T>& out, const std::string& prefix, const std::string& group) const;

  const std::string& feature() const { return feature_; }
  std::size_t rows() const { return weight_.dim(0); }
  std::size_t dim() const { return weight_.dim(1); }
  const Tensor<T>& weight() const { return weight_; }

 private:
  std::string feature_;
  Tensor<T> weight_;
};

// y = x W + b, W stored [in x out].
template <class T>
class Dense {
 public:
  Dense() = default;
  Dense(std::size_t in, std::size_t out, Rng& rng);

  Tensor<T> forward(const Context<T>& ctx, const Tensor<T>& x) const;
  void collect(ParamList<T>& out, const std::string& prefix, const std::string& group) const;

  std::size_t in_features() const { return weight_.dim(0); }
  std::size_t out_features() const { return weight_.dim(1); }
  const Tensor<T>& weight() const { return weight_; }
  const Tensor<T>& bias() const { return bias_; }

 private:
  Tensor<T> weight_;
  Tensor<T> bias_;
};

// Left zero-padded dilated convolution over [B x C x T]; output length T.
template <class T>
class CausalConv1d {
 public:
  CausalConv1d() = default;
  CausalConv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_width,
               std::size_t dilation, Rng& rng);

  Tensor<T> forward(const Context<T>& ctx, const Tensor<T>& x) const;
  void collect(ParamList<T>& out, const std::string& prefix, const std::string& group) const;

  std::size_t in_channels() const { return kernel_.dim(1); }
  std::size_t out_channels() const { return kernel_.dim(0); }
  std::size_t kernel_width() const { return kernel_.dim(2); }
  std::size_t dilation() const { return dilation_; }
  // Number of past steps this layer reaches back: (k - 1) * d.
  std::size_t reach() const { return (kernel_width() - 1) * dilation_; }
  const Tensor<T>& kernel() const { return kernel_; }
  const Tensor<T>& bias() const { return bias_; }

 private:
  Tensor<T> kernel_;
  Tensor<T> bias_;
  std::size_t dilation_ = 1;
};

// Per-channel normalisation over axis 1. Momentum 0.1, eps 1e-5.
template <class T>
class BatchNorm {
 public:
  static constexpr double kMomentum = 0.1;
  static constexpr double kEps = 1e-5;

  BatchNorm() = default;
  explicit BatchNorm(std::size_t channels);

  // Training mode updates the running statistics.
  Tensor<T> forward(const Context<T>& ctx, const Tensor<T>& x) const;
  void collect(ParamList<T>& out, const std::string& prefix, const std::string& group) const;

  const Tensor<T>& gamma() const { return gamma_; }
  const Tensor<T>& beta() const { return beta_; }
  const Tensor<T>& running_mean() const { return running_mean_; }
  const Tensor<T>& running_var() const { return running_var_; }

 private:
  Tensor<T> gamma_, beta_, running_mean_, running_var_;
};

// conv -> bn -> relu -> dropout, twice (shared dilation); output
// relu(branch(x) + skip(x)) with a 1x1 conv skip when channel counts differ.
template <class T>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(std::size_t in_channels, std::size_t channels, std::size_t kernel_width,
                std::size_t dilation, double dropout, Rng& rng);

  Tensor<T> forward(const Context<T>& ctx, const Tensor<T>& x) const;
  void collect(ParamList<T>& out, const std::string& prefix, const std::string& group) const;

  bool has_skip_conv() const { return has_skip_; }
  std::size_t reach() const { return conv1_.reach() + conv2_.reach(); }

 private:
  CausalConv1d<T> conv1_, conv2_, skip_;
  BatchNorm<T> bn1_, bn2_;
  double dropout_ = 0.0;
  bool has_skip_ = false;
};

// Residual blocks with dilations 1, 2, 4, ... and a 1x1 conv projection to
// `out_width` channels.
template <class T>
class TCNStack {
 public:
  TCNStack() = default;
  TCNStack(std::size_t in_channels, std::size_t blocks, std::size_t channels,
           std::size_t kernel_width, double dropout, std::size_t out_width, Rng& rng);

  // Block outputs at every step, [B x channels x T].
  Tensor<T> forward_blocks(const Context<T>& ctx, const Tensor<T>& x) const;
  // Projection applied at every step, [B x out_width x T].
  Tensor<T> forward_sequence(const Context<T>& ctx, const Tensor<T>& x) const;
  // Projection of the last step only, [B x out_width].
  Tensor<T> forward_last(const Context<T>& ctx, const Tensor<T>& x) const;

  void collect_blocks(ParamList<T>& out, const std::string& prefix, const std::string& group) const;
  void collect_projection(ParamList<T>& out, const std::string& prefix,
                          const std::string& group) const;

  // 1 + sum over conv layers of (k - 1) * d.
  std::size_t receptive_field() const;
  std::size_t out_width() const { return proj_.out_channels(); }

 private:
  std::vector<ResidualBlock<T>> blocks_;
  CausalConv1d<T> proj_;
};

// Stacked LSTM over [B x C x T] with zero initial states; returns a dense
// projection of the top layer's final hidden state, [B x out_width].
template <class T>
class LSTMStack {
 public:
  LSTMStack() = default;
  LSTMStack(std::size_t in_channels, std::size_t layers, std::size_t hidden, std::size_t out_width,
            Rng& rng);

  Tensor<T> forward(const Context<T>& ctx, const Tensor<T>& x) const;
  void collect_layers(ParamList<T>& out, const std::string& prefix, const std::string& group) const;
  void collect_projection(ParamList<T>& out, const std::string& prefix,
                          const std::string& group) const;

  std::size_t hidden() const { return hidden_; }

  struct Layer {
    Tensor<T> w_ih;  // [in x 4H], gate order i, f, g, o
    Tensor<T> w_hh;  // [H x 4H]
    Tensor<T> bias;  // [4H]
  };
  const std::vector<Layer>& layers() const { return layers_; }

 private:
  std::vector<Layer> layers_;
  Dense<T> proj_;
  std::size_t hidden_ = 0;
};

// One LSTM cell step; exposed for tests. Returns {h, c}.
template <class T>
std::pair<Tensor<T>, Tensor<T>> lstm_cell(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& h,
                                          const Tensor<T>& c, const Tensor<T>& w_ih,
                                          const Tensor<T>& w_hh, const Tensor<T>& bias);

}  // namespace s2v::nn
