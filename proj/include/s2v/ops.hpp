#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "s2v/tensor.hpp"

// Differentiable primitives. Every op takes the tape it records onto; nothing
// is recorded when no operand requires a gradient.
namespace s2v::ad {

// [m x k] x [k x n] -> [m x n]
template <class T>
Tensor<T> matmul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

enum class PointwiseOp { relu, sigmoid, tanh, add, sub, mul, scale };

// Unary tags take one operand, binary tags two of identical shape; `scale`
// takes one operand and multiplies by `factor`.
template <class T>
Tensor<T> pointwise(Tape<T>& tape, PointwiseOp op, std::span<const Tensor<T>> operands,
                    T factor = T(1));

template <class T> Tensor<T> relu(Tape<T>& tape, const Tensor<T>& x);
template <class T> Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& x);
template <class T> Tensor<T> tanh(Tape<T>& tape, const Tensor<T>& x);
template <class T> Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> scale(Tape<T>& tape, const Tensor<T>& a, T factor);

// x[m x n] + bias[n] added to every row.
template <class T>
Tensor<T> add_bias(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& bias);

// Sum of all elements, as a scalar.
template <class T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x);

template <class T>
Tensor<T> mse_loss(Tape<T>& tape, const Tensor<T>& pred, const Tensor<T>& target);

// Empty (zero-element) operands are skipped.
template <class T>
Tensor<T> concat(Tape<T>& tape, const std::vector<Tensor<T>>& parts, std::size_t axis);

// Half-open range [begin, end) along `axis`.
template <class T>
Tensor<T> slice(Tape<T>& tape, const Tensor<T>& x, std::size_t axis, std::size_t begin,
                std::size_t end);

template <class T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& x, Shape shape);

// Row gather: out[i] = table[indices[i]]; gradient flows to gathered rows only.
template <class T>
Tensor<T> gather_rows(Tape<T>& tape, const Tensor<T>& table,
                      std::span<const std::int32_t> indices);

// x[B x Cin x T], kernel[Cout x Cin x k], bias[Cout] (may be undefined).
// out[b,o,t] = bias[o] + sum_{c,i} kernel[o,c,i] * x[b,c,t - dilation*i],
// with x treated as zero before t = 0.
template <class T>
Tensor<T> causal_conv1d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& kernel,
                        const Tensor<T>& bias, std::size_t dilation);

// Batch statistics per channel (axis 1) over every other axis. `batch_mean`
// and `batch_var` receive the statistics used (variance is the unbiased one,
// for running-average updates).
template <class T>
Tensor<T> batch_norm_train(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gamma,
                           const Tensor<T>& beta, T eps, std::vector<T>* batch_mean,
                           std::vector<T>* batch_var);

template <class T>
Tensor<T> batch_norm_eval(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gamma,
                          const Tensor<T>& beta, std::span<const T> running_mean,
                          std::span<const T> running_var, T eps);

}  // namespace s2v::ad
