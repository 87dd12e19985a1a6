#include "s2v/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "s2v/errors.hpp"

namespace s2v::ad {
namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using CMap = Eigen::Map<const RowMat<T>>;
template <class T>
using MMap = Eigen::Map<RowMat<T>>;

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

template <class T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

std::size_t prod(const Shape& s, std::size_t from, std::size_t to) {
  std::size_t p = 1;
  for (std::size_t i = from; i < to; ++i) p *= s[i];
  return p;
}

}  // namespace

template <class T>
Tensor<T> matmul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  std::vector<T> out(static_cast<std::size_t>(m * n));
  MMap<T>(out.data(), m, n).noalias() =
      CMap<T>(a.data().data(), m, k) * CMap<T>(b.data().data(), k, n);
  Tensor<T> result({a.dim(0), b.dim(1)}, std::move(out));
  tape.record({a, b}, result, [a, b, m, k, n](const Tensor<T>& o) {
    CMap<T> g(o.grad().data(), m, n);
    if (a.requires_grad()) {
      MMap<T>(a.grad_buffer().data(), m, k).noalias() +=
          g * CMap<T>(b.data().data(), k, n).transpose();
    }
    if (b.requires_grad()) {
      MMap<T>(b.grad_buffer().data(), k, n).noalias() +=
          CMap<T>(a.data().data(), m, k).transpose() * g;
    }
  });
  return result;
}

template <class T>
Tensor<T> pointwise(Tape<T>& tape, PointwiseOp op, std::span<const Tensor<T>> operands,
                    T factor) {
  const bool binary = op == PointwiseOp::add || op == PointwiseOp::sub || op == PointwiseOp::mul;
  const std::size_t arity = binary ? 2 : 1;
  if (operands.size() != arity) {
    throw ContractError("pointwise: expected " + std::to_string(arity) + " operand(s), got " +
                        std::to_string(operands.size()));
  }
  const Tensor<T> a = operands[0];
  if (binary) require_same_shape(a, operands[1], "pointwise");
  const auto x = a.data();
  const std::size_t n = x.size();
  std::vector<T> out(n);

  switch (op) {
    case PointwiseOp::relu:
      for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
      break;
    case PointwiseOp::sigmoid:
      for (std::size_t i = 0; i < n; ++i) out[i] = stable_sigmoid(x[i]);
      break;
    case PointwiseOp::tanh:
      for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(x[i]);
      break;
    case PointwiseOp::scale:
      for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * factor;
      break;
    case PointwiseOp::add: {
      const auto y = operands[1].data();
      for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
      break;
    }
    case PointwiseOp::sub: {
      const auto y = operands[1].data();
      for (std::size_t i = 0; i < n; ++i) out[i] = x[i] - y[i];
      break;
    }
    case PointwiseOp::mul: {
      const auto y = operands[1].data();
      for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
      break;
    }
  }
  Tensor<T> result(a.shape(), std::move(out));

  if (!binary) {
    tape.record({a}, result, [a, op, factor](const Tensor<T>& o) {
      if (!a.requires_grad()) return;
      const auto g = o.grad();
      const auto y = o.data();
      const auto xin = a.data();
      auto ga = a.grad_buffer();
      const std::size_t m = g.size();
      switch (op) {
        case PointwiseOp::relu:
          for (std::size_t i = 0; i < m; ++i) ga[i] += xin[i] > T(0) ? g[i] : T(0);
          break;
        case PointwiseOp::sigmoid:
          for (std::size_t i = 0; i < m; ++i) ga[i] += g[i] * y[i] * (T(1) - y[i]);
          break;
        case PointwiseOp::tanh:
          for (std::size_t i = 0; i < m; ++i) ga[i] += g[i] * (T(1) - y[i] * y[i]);
          break;
        case PointwiseOp::scale:
          for (std::size_t i = 0; i < m; ++i) ga[i] += g[i] * factor;
          break;
        default: break;
      }
    });
  } else {
    const Tensor<T> b = operands[1];
    tape.record({a, b}, result, [a, b, op](const Tensor<T>& o) {
      const auto g = o.grad();
      const std::size_t m = g.size();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        if (op == PointwiseOp::mul) {
          const auto bv = b.data();
          for (std::size_t i = 0; i < m; ++i) ga[i] += g[i] * bv[i];
        } else {
          for (std::size_t i = 0; i < m; ++i) ga[i] += g[i];
        }
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        if (op == PointwiseOp::add) {
          for (std::size_t i = 0; i < m; ++i) gb[i] += g[i];
        } else if (op == PointwiseOp::sub) {
          for (std::size_t i = 0; i < m; ++i) gb[i] -= g[i];
        } else {
          const auto av = a.data();
          for (std::size_t i = 0; i < m; ++i) gb[i] += g[i] * av[i];
        }
      }
    });
  }
  return result;
}

template <class T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& x) {
  return pointwise<T>(tape, PointwiseOp::relu, std::span(&x, 1));
}
template <class T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& x) {
  return pointwise<T>(tape, PointwiseOp::sigmoid, std::span(&x, 1));
}
template <class T>
Tensor<T> tanh(Tape<T>& tape, const Tensor<T>& x) {
  return pointwise<T>(tape, PointwiseOp::tanh, std::span(&x, 1));
}
template <class T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& a, T factor) {
  return pointwise<T>(tape, PointwiseOp::scale, std::span(&a, 1), factor);
}
template <class T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  const Tensor<T> ops[2] = {a, b};
  return pointwise<T>(tape, PointwiseOp::add, ops);
}
template <class T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  const Tensor<T> ops[2] = {a, b};
  return pointwise<T>(tape, PointwiseOp::sub, ops);
}
template <class T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  const Tensor<T> ops[2] = {a, b};
  return pointwise<T>(tape, PointwiseOp::mul, ops);
}

template <class T>
Tensor<T> add_bias(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& bias) {
  if (x.rank() != 2 || bias.numel() != x.dim(1)) {
    throw DimensionError("add_bias: " + shape_str(x.shape()) + " with bias " +
                         shape_str(bias.shape()));
  }
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<T> out(x.data().begin(), x.data().end());
  const auto bv = bias.data();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += bv[c];
  Tensor<T> result(x.shape(), std::move(out));
  tape.record({x, bias}, result, [x, bias, m, n](const Tensor<T>& o) {
    const auto g = o.grad();
    if (x.requires_grad()) {
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (bias.requires_grad()) {
      auto gb = bias.grad_buffer();
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) gb[c] += g[r * n + c];
    }
  });
  return result;
}

template <class T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x) {
  T acc = T(0);
  for (T v : x.data()) acc += v;
  Tensor<T> result = Tensor<T>::scalar(acc);
  tape.record({x}, result, [x](const Tensor<T>& o) {
    if (!x.requires_grad()) return;
    const T g = o.grad()[0];
    for (auto& v : x.grad_buffer()) v += g;
  });
  return result;
}

template <class T>
Tensor<T> mse_loss(Tape<T>& tape, const Tensor<T>& pred, const Tensor<T>& target) {
  require_same_shape(pred, target, "mse_loss");
  const std::size_t n = pred.numel();
  if (n == 0) throw ContractError("mse_loss: empty input");
  const auto p = pred.data();
  const auto y = target.data();
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    const T d = p[i] - y[i];
    acc += d * d;
  }
  Tensor<T> result = Tensor<T>::scalar(acc / static_cast<T>(n));
  tape.record({pred, target}, result, [pred, target, n](const Tensor<T>& o) {
    const T g = o.grad()[0] * T(2) / static_cast<T>(n);
    const auto p = pred.data();
    const auto y = target.data();
    if (pred.requires_grad()) {
      auto gp = pred.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) gp[i] += g * (p[i] - y[i]);
    }
    if (target.requires_grad()) {
      auto gt = target.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) gt[i] -= g * (p[i] - y[i]);
    }
  });
  return result;
}

template <class T>
Tensor<T> concat(Tape<T>& tape, const std::vector<Tensor<T>>& parts, std::size_t axis) {
  std::vector<Tensor<T>> used;
  for (const auto& p : parts)
    if (p.defined() && p.numel() > 0) used.push_back(p);
  if (used.empty()) {
    throw DimensionError("concat: no non-empty operands");
  }
  const Shape& ref = used.front().shape();
  if (axis >= ref.size()) {
    throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(ref));
  }
  Shape out_shape = ref;
  out_shape[axis] = 0;
  for (const auto& p : used) {
    const Shape& s = p.shape();
    bool ok = s.size() == ref.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d)
      if (d != axis && s[d] != ref[d]) ok = false;
    if (!ok) {
      throw DimensionError("concat: incompatible shapes " + shape_str(ref) + " and " +
                           shape_str(s) + " along axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  const std::size_t outer = prod(ref, 0, axis);
  const std::size_t inner = prod(ref, axis + 1, ref.size());
  const std::size_t out_row = out_shape[axis] * inner;
  std::vector<T> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : used) {
    offsets.push_back(off);
    const std::size_t row = p.dim(axis) * inner;
    const auto src = p.data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(src.begin() + static_cast<long>(o * row), row,
                  out.begin() + static_cast<long>(o * out_row + off));
    off += row;
  }
  Tensor<T> result(out_shape, std::move(out));
  tape.record(used, result, [used, offsets, outer, inner, out_row, axis](const Tensor<T>& o) {
    const auto g = o.grad();
    for (std::size_t k = 0; k < used.size(); ++k) {
      if (!used[k].requires_grad()) continue;
      const std::size_t row = used[k].dim(axis) * inner;
      auto gp = used[k].grad_buffer();
      for (std::size_t r = 0; r < outer; ++r)
        for (std::size_t j = 0; j < row; ++j) gp[r * row + j] += g[r * out_row + offsets[k] + j];
    }
  });
  return result;
}

template <class T>
Tensor<T> slice(Tape<T>& tape, const Tensor<T>& x, std::size_t axis, std::size_t begin,
                std::size_t end) {
  if (axis >= x.rank() || begin > end || end > x.dim(axis)) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") on axis " + std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  const std::size_t outer = prod(x.shape(), 0, axis);
  const std::size_t inner = prod(x.shape(), axis + 1, x.rank());
  const std::size_t src_row = x.dim(axis) * inner;
  const std::size_t dst_row = (end - begin) * inner;
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  std::vector<T> out(outer * dst_row);
  const auto src = x.data();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(src.begin() + static_cast<long>(o * src_row + begin * inner), dst_row,
                out.begin() + static_cast<long>(o * dst_row));
  Tensor<T> result(out_shape, std::move(out));
  tape.record({x}, result, [x, outer, inner, src_row, dst_row, begin](const Tensor<T>& o) {
    if (!x.requires_grad()) return;
    const auto g = o.grad();
    auto gx = x.grad_buffer();
    for (std::size_t r = 0; r < outer; ++r)
      for (std::size_t j = 0; j < dst_row; ++j) gx[r * src_row + begin * inner + j] += g[r * dst_row + j];
  });
  return result;
}

template <class T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  Tensor<T> result(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
  tape.record({x}, result, [x](const Tensor<T>& o) {
    if (!x.requires_grad()) return;
    const auto g = o.grad();
    auto gx = x.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
  return result;
}

template <class T>
Tensor<T> gather_rows(Tape<T>& tape, const Tensor<T>& table,
                      std::span<const std::int32_t> indices) {
  if (table.rank() != 2) {
    throw DimensionError("gather_rows: table must be 2-D, got " + shape_str(table.shape()));
  }
  const std::size_t rows = table.dim(0), width = table.dim(1);
  std::vector<T> out(indices.size() * width);
  const auto src = table.data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto idx = indices[i];
    if (idx < 0 || static_cast<std::size_t>(idx) >= rows) {
      throw IndexError("gather_rows: index " + std::to_string(idx) + " outside [0," +
                       std::to_string(rows) + ")");
    }
    std::copy_n(src.begin() + static_cast<long>(static_cast<std::size_t>(idx) * width), width,
                out.begin() + static_cast<long>(i * width));
  }
  Tensor<T> result({indices.size(), width}, std::move(out));
  std::vector<std::int32_t> idx_copy(indices.begin(), indices.end());
  tape.record({table}, result, [table, idx_copy, width](const Tensor<T>& o) {
    if (!table.requires_grad()) return;
    const auto g = o.grad();
    auto gt = table.grad_buffer();
    for (std::size_t i = 0; i < idx_copy.size(); ++i) {
      const std::size_t row = static_cast<std::size_t>(idx_copy[i]);
      for (std::size_t j = 0; j < width; ++j) gt[row * width + j] += g[i * width + j];
    }
  });
  return result;
}

template <class T>
Tensor<T> causal_conv1d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& kernel,
                        const Tensor<T>& bias, std::size_t dilation) {
  if (x.rank() != 3 || kernel.rank() != 3 || kernel.dim(1) != x.dim(1)) {
    throw DimensionError("causal_conv1d: input " + shape_str(x.shape()) + " with kernel " +
                         shape_str(kernel.shape()));
  }
  if (bias.defined() && bias.numel() != kernel.dim(0)) {
    throw DimensionError("causal_conv1d: bias " + shape_str(bias.shape()) + " for " +
                         std::to_string(kernel.dim(0)) + " output channels");
  }
  if (dilation == 0) throw ContractError("causal_conv1d: dilation must be >= 1");
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  const std::size_t O = kernel.dim(0), K = kernel.dim(2);
  const std::size_t BL = B * L;
  if (L == 0) throw WindowError("causal_conv1d: empty time axis");

  // Column matrix: row (c, i) holds x[:, c, t - dilation*i] for every (b, t).
  auto col = std::make_shared<RowMat<T>>(RowMat<T>::Zero(static_cast<Eigen::Index>(C * K),
                                                         static_cast<Eigen::Index>(BL)));
  const auto xv = x.data();
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < K; ++i) {
      const std::size_t shift = dilation * i;
      if (shift >= L) continue;
      T* dst = col->row(static_cast<Eigen::Index>(c * K + i)).data();
      for (std::size_t b = 0; b < B; ++b) {
        const T* src = xv.data() + (b * C + c) * L;
        std::copy(src, src + (L - shift), dst + b * L + shift);
      }
    }
  }
  RowMat<T> out_mat(static_cast<Eigen::Index>(O), static_cast<Eigen::Index>(BL));
  out_mat.noalias() =
      CMap<T>(kernel.data().data(), static_cast<Eigen::Index>(O), static_cast<Eigen::Index>(C * K)) *
      (*col);
  std::vector<T> out(B * O * L);
  const bool has_bias = bias.defined();
  for (std::size_t o = 0; o < O; ++o) {
    const T bo = has_bias ? bias.data()[o] : T(0);
    const T* row = out_mat.row(static_cast<Eigen::Index>(o)).data();
    for (std::size_t b = 0; b < B; ++b) {
      T* dst = out.data() + (b * O + o) * L;
      for (std::size_t t = 0; t < L; ++t) dst[t] = row[b * L + t] + bo;
    }
  }
  Tensor<T> result({B, O, L}, std::move(out));

  std::vector<Tensor<T>> inputs{x, kernel};
  if (has_bias) inputs.push_back(bias);
  tape.record(inputs, result, [x, kernel, bias, col, B, C, L, O, K, dilation](const Tensor<T>& o) {
    const auto g = o.grad();
    const auto BLi = static_cast<Eigen::Index>(B * L);
    RowMat<T> gm(static_cast<Eigen::Index>(O), BLi);
    for (std::size_t oc = 0; oc < O; ++oc) {
      T* row = gm.row(static_cast<Eigen::Index>(oc)).data();
      for (std::size_t b = 0; b < B; ++b) {
        const T* src = g.data() + (b * O + oc) * L;
        std::copy(src, src + L, row + b * L);
      }
    }
    if (kernel.requires_grad()) {
      MMap<T>(kernel.grad_buffer().data(), static_cast<Eigen::Index>(O),
              static_cast<Eigen::Index>(C * K))
          .noalias() += gm * col->transpose();
    }
    if (bias.defined() && bias.requires_grad()) {
      auto gb = bias.grad_buffer();
      for (std::size_t oc = 0; oc < O; ++oc) gb[oc] += gm.row(static_cast<Eigen::Index>(oc)).sum();
    }
    if (x.requires_grad()) {
      RowMat<T> dcol(static_cast<Eigen::Index>(C * K), BLi);
      dcol.noalias() = CMap<T>(kernel.data().data(), static_cast<Eigen::Index>(O),
                               static_cast<Eigen::Index>(C * K))
                           .transpose() *
                       gm;
      auto gx = x.grad_buffer();
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t i = 0; i < K; ++i) {
          const std::size_t shift = dilation * i;
          if (shift >= L) continue;
          const T* src = dcol.row(static_cast<Eigen::Index>(c * K + i)).data();
          for (std::size_t b = 0; b < B; ++b) {
            T* dst = gx.data() + (b * C + c) * L;
            const T* s = src + b * L + shift;
            for (std::size_t t = 0; t + shift < L; ++t) dst[t] += s[t];
          }
        }
      }
    }
  });
  return result;
}

template <class T>
Tensor<T> batch_norm_train(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gamma,
                           const Tensor<T>& beta, T eps, std::vector<T>* batch_mean,
                           std::vector<T>* batch_var) {
  if (x.rank() < 2 || gamma.numel() != x.dim(1) || beta.numel() != x.dim(1)) {
    throw DimensionError("batch_norm: input " + shape_str(x.shape()) + " with affine " +
                         shape_str(gamma.shape()));
  }
  const std::size_t B = x.dim(0), C = x.dim(1);
  const std::size_t inner = prod(x.shape(), 2, x.rank());
  const std::size_t N = B * inner;
  if (N == 0) throw DimensionError("batch_norm: empty batch");
  const auto xv = x.data();
  const auto gv = gamma.data();
  const auto bv = beta.data();

  auto xhat = std::make_shared<std::vector<T>>(xv.size());
  auto inv_std = std::make_shared<std::vector<T>>(C);
  std::vector<T> out(xv.size());
  if (batch_mean) batch_mean->assign(C, T(0));
  if (batch_var) batch_var->assign(C, T(0));
  for (std::size_t c = 0; c < C; ++c) {
    T mean = T(0);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t j = 0; j < inner; ++j) mean += xv[(b * C + c) * inner + j];
    mean /= static_cast<T>(N);
    T var = T(0);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t j = 0; j < inner; ++j) {
        const T d = xv[(b * C + c) * inner + j] - mean;
        var += d * d;
      }
    const T biased = var / static_cast<T>(N);
    const T is = T(1) / std::sqrt(biased + eps);
    (*inv_std)[c] = is;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t j = 0; j < inner; ++j) {
        const std::size_t k = (b * C + c) * inner + j;
        (*xhat)[k] = (xv[k] - mean) * is;
        out[k] = gv[c] * (*xhat)[k] + bv[c];
      }
    if (batch_mean) (*batch_mean)[c] = mean;
    if (batch_var) (*batch_var)[c] = N > 1 ? var / static_cast<T>(N - 1) : biased;
  }
  Tensor<T> result(x.shape(), std::move(out));
  tape.record({x, gamma, beta}, result, [x, gamma, beta, xhat, inv_std, B, C, inner, N](const Tensor<T>& o) {
    const auto g = o.grad();
    const auto gv = gamma.data();
    for (std::size_t c = 0; c < C; ++c) {
      T sum_g = T(0), sum_gx = T(0);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t j = 0; j < inner; ++j) {
          const std::size_t k = (b * C + c) * inner + j;
          sum_g += g[k];
          sum_gx += g[k] * (*xhat)[k];
        }
      if (gamma.requires_grad()) gamma.grad_buffer()[c] += sum_gx;
      if (beta.requires_grad()) beta.grad_buffer()[c] += sum_g;
      if (x.requires_grad()) {
        auto gx = x.grad_buffer();
        // d xhat = g * gamma; dx = inv_std/N * (N dxhat - sum dxhat - xhat sum(dxhat xhat))
        const T scale_c = gv[c] * (*inv_std)[c] / static_cast<T>(N);
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t j = 0; j < inner; ++j) {
            const std::size_t k = (b * C + c) * inner + j;
            gx[k] += scale_c * (static_cast<T>(N) * g[k] - sum_g - (*xhat)[k] * sum_gx);
          }
      }
    }
  });
  return result;
}

template <class T>
Tensor<T> batch_norm_eval(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gamma,
                          const Tensor<T>& beta, std::span<const T> running_mean,
                          std::span<const T> running_var, T eps) {
  if (x.rank() < 2 || gamma.numel() != x.dim(1) || beta.numel() != x.dim(1) ||
      running_mean.size() != x.dim(1) || running_var.size() != x.dim(1)) {
    throw DimensionError("batch_norm: input " + shape_str(x.shape()) + " with affine " +
                         shape_str(gamma.shape()));
  }
  const std::size_t B = x.dim(0), C = x.dim(1);
  const std::size_t inner = prod(x.shape(), 2, x.rank());
  std::vector<T> mean(running_mean.begin(), running_mean.end());
  std::vector<T> inv_std(C);
  for (std::size_t c = 0; c < C; ++c) inv_std[c] = T(1) / std::sqrt(running_var[c] + eps);
  const auto xv = x.data();
  const auto gv = gamma.data();
  const auto bv = beta.data();
  std::vector<T> out(xv.size());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t j = 0; j < inner; ++j) {
        const std::size_t k = (b * C + c) * inner + j;
        out[k] = gv[c] * (xv[k] - mean[c]) * inv_std[c] + bv[c];
      }
  Tensor<T> result(x.shape(), std::move(out));
  tape.record({x, gamma, beta}, result, [x, gamma, beta, mean, inv_std, B, C, inner](const Tensor<T>& o) {
    const auto g = o.grad();
    const auto xv = x.data();
    const auto gv = gamma.data();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t j = 0; j < inner; ++j) {
          const std::size_t k = (b * C + c) * inner + j;
          if (x.requires_grad()) x.grad_buffer()[k] += g[k] * gv[c] * inv_std[c];
          if (gamma.requires_grad()) gamma.grad_buffer()[c] += g[k] * (xv[k] - mean[c]) * inv_std[c];
          if (beta.requires_grad()) beta.grad_buffer()[c] += g[k];
        }
  });
  return result;
}

#define S2V_INSTANTIATE(T)                                                                       \
  template Tensor<T> matmul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> pointwise(Tape<T>&, PointwiseOp, std::span<const Tensor<T>>, T);           \
  template Tensor<T> relu(Tape<T>&, const Tensor<T>&);                                          \
  template Tensor<T> sigmoid(Tape<T>&, const Tensor<T>&);                                       \
  template Tensor<T> tanh(Tape<T>&, const Tensor<T>&);                                          \
  template Tensor<T> add(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> sub(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> mul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> scale(Tape<T>&, const Tensor<T>&, T);                                      \
  template Tensor<T> add_bias(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> sum(Tape<T>&, const Tensor<T>&);                                           \
  template Tensor<T> mse_loss(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> concat(Tape<T>&, const std::vector<Tensor<T>>&, std::size_t);              \
  template Tensor<T> slice(Tape<T>&, const Tensor<T>&, std::size_t, std::size_t, std::size_t);  \
  template Tensor<T> reshape(Tape<T>&, const Tensor<T>&, Shape);                                \
  template Tensor<T> gather_rows(Tape<T>&, const Tensor<T>&, std::span<const std::int32_t>);    \
  template Tensor<T> causal_conv1d(Tape<T>&, const Tensor<T>&, const Tensor<T>&,                \
                                   const Tensor<T>&, std::size_t);                              \
  template Tensor<T> batch_norm_train(Tape<T>&, const Tensor<T>&, const Tensor<T>&,             \
                                      const Tensor<T>&, T, std::vector<T>*, std::vector<T>*);   \
  template Tensor<T> batch_norm_eval(Tape<T>&, const Tensor<T>&, const Tensor<T>&,              \
                                     const Tensor<T>&, std::span<const T>, std::span<const T>, T);

S2V_INSTANTIATE(float)
S2V_INSTANTIATE(double)
#undef S2V_INSTANTIATE

}  // namespace s2v::ad
