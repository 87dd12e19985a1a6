#include "s2v/optim.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "s2v/errors.hpp"

namespace s2v::train {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "sgd"; }

Optimizer::Optimizer(OptimizerKind kind, AdamConfig cfg) : kind_(kind), cfg_(cfg) {}

template <class T>
void Optimizer::step(std::span<const NamedTensor<T>> params, double lr) {
  const std::uint64_t next = t_ + 1;
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (T g : p.tensor.grad()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw NumericError("non-finite gradient in '" + p.name + "' at step " +
                           std::to_string(next));
      }
    }
  }
  t_ = next;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (const auto& p : params) {
    Tensor<T> w = p.tensor;
    auto data = w.mutable_data();
    const auto grad = p.tensor.grad();
    const bool has = !grad.empty();
    if (kind_ == OptimizerKind::sgd) {
      if (!has) continue;
      for (std::size_t i = 0; i < data.size(); ++i)
        data[i] = static_cast<T>(static_cast<double>(data[i]) - lr * static_cast<double>(grad[i]));
      continue;
    }
    auto& mom = moments_[p.name];
    if (mom.m.size() != data.size()) {
      mom.m.assign(data.size(), 0.0);
      mom.v.assign(data.size(), 0.0);
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = has ? static_cast<double>(grad[i]) : 0.0;
      mom.m[i] = b1 * mom.m[i] + (1.0 - b1) * g;
      mom.v[i] = b2 * mom.v[i] + (1.0 - b2) * g * g;
      const double m_hat = mom.m[i] / c1;
      const double v_hat = mom.v[i] / c2;
      data[i] = static_cast<T>(static_cast<double>(data[i]) -
                               lr * m_hat / (std::sqrt(v_hat) + cfg_.eps));
    }
  }
}

void Optimizer::restore(std::uint64_t steps, std::map<std::string, Moments> moments) {
  t_ = steps;
  moments_ = std::move(moments);
}

void Optimizer::reset() {
  t_ = 0;
  moments_.clear();
}

template <class T>
double clip_grad_norm(std::span<const NamedTensor<T>> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (T g : p.tensor.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const T factor = static_cast<T>(max_norm / norm);
    for (const auto& p : params) {
      if (!p.tensor.has_grad()) continue;
      for (auto& g : p.tensor.grad_buffer()) g *= factor;
    }
  }
  return norm;
}

LRSchedule LRSchedule::constant(double lr) {
  LRSchedule s;
  s.kind = Kind::constant;
  s.max_lr = lr;
  return s;
}

LRSchedule LRSchedule::one_cycle(double max_lr, std::size_t cycle_epochs) {
  LRSchedule s;
  s.kind = Kind::one_cycle;
  s.max_lr = max_lr;
  s.cycle_epochs = cycle_epochs;
  return s;
}

double LRSchedule::at(std::uint64_t global_step, std::size_t steps_per_epoch) const {
  if (kind == Kind::constant) return max_lr;
  if (steps_per_epoch == 0 || cycle_epochs == 0) {
    throw ContractError("one-cycle schedule needs steps_per_epoch >= 1 and cycle_epochs >= 1");
  }
  const std::uint64_t length = cycle_epochs * steps_per_epoch;
  const std::uint64_t s = global_step % length;
  const double start = max_lr / start_div;
  const double end = max_lr / end_div;
  auto warm = static_cast<std::uint64_t>(std::llround(warm_fraction * static_cast<double>(length)));
  if (warm < 1) warm = 1;
  if (warm >= length) warm = length - 1;
  if (s < warm) {
    return start + (max_lr - start) * static_cast<double>(s) / static_cast<double>(warm);
  }
  const double p = static_cast<double>(s - warm) / static_cast<double>(length - warm);
  return end + (max_lr - end) * 0.5 * (1.0 + std::cos(std::numbers::pi * p));
}

EarlyStopping::EarlyStopping(std::size_t patience, double min_delta)
    : patience_(patience), min_delta_(min_delta), best_(std::numeric_limits<double>::infinity()) {}

EarlyStopping::Decision EarlyStopping::update(double val_loss) {
  ++evaluations_;
  last_improved_ = val_loss < best_ - min_delta_;
  if (last_improved_) {
    best_ = val_loss;
    best_index_ = evaluations_ - 1;
    bad_ = 0;
    return Decision::proceed;
  }
  ++bad_;
  return bad_ >= patience_ ? Decision::stop : Decision::proceed;
}

template void Optimizer::step<float>(std::span<const NamedTensor<float>>, double);
template void Optimizer::step<double>(std::span<const NamedTensor<double>>, double);
template double clip_grad_norm<float>(std::span<const NamedTensor<float>>, double);
template double clip_grad_norm<double>(std::span<const NamedTensor<double>>, double);

}  // namespace s2v::train
