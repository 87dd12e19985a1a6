#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "s2v/layers.hpp"

namespace s2v::train {

using nn::NamedTensor;
using nn::Tensor;

enum class OptimizerKind { sgd, adam };

std::string to_string(OptimizerKind kind);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Plain SGD or Adam (moments kept in double precision, keyed by parameter name).
//   m <- b1 m + (1 - b1) g;  v <- b2 v + (1 - b2) g^2
//   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
class Optimizer {
 public:
  struct Moments {
    std::vector<double> m, v;
  };

  explicit Optimizer(OptimizerKind kind = OptimizerKind::adam, AdamConfig cfg = {});

  // Applies one update to every parameter. Parameters without a gradient
  // buffer are treated as having a zero gradient. Throws NumericError (and
  // leaves every parameter untouched) if any gradient is non-finite.
  template <class T>
  void step(std::span<const NamedTensor<T>> params, double lr);

  OptimizerKind kind() const { return kind_; }
  const AdamConfig& config() const { return cfg_; }
  std::uint64_t steps() const { return t_; }
  const std::map<std::string, Moments>& moments() const { return moments_; }
  void restore(std::uint64_t steps, std::map<std::string, Moments> moments);
  void reset();

 private:
  OptimizerKind kind_;
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::map<std::string, Moments> moments_;
};

// Rescales all gradients so their global L2 norm is at most `max_norm`.
// Returns the norm before clipping.
template <class T>
double clip_grad_norm(std::span<const NamedTensor<T>> params, double max_norm);

struct LRSchedule {
  enum class Kind { constant, one_cycle };

  Kind kind = Kind::constant;
  double max_lr = 1e-4;  // the constant rate, or the one-cycle peak
  std::size_t cycle_epochs = 1;
  double warm_fraction = 0.3;
  double start_div = 25.0;
  double end_div = 2500.0;

  static LRSchedule constant(double lr);
  static LRSchedule one_cycle(double max_lr, std::size_t cycle_epochs);

  // One-cycle: linear rise max/start_div -> max over the first
  // round(warm_fraction * L) steps, cosine fall towards max/end_div over the
  // rest, repeating every L = cycle_epochs * steps_per_epoch steps.
  double at(std::uint64_t global_step, std::size_t steps_per_epoch) const;
};

class EarlyStopping {
 public:
  enum class Decision { proceed, stop };

  explicit EarlyStopping(std::size_t patience = 3, double min_delta = 1e-6);

  // An evaluation improves when it is below best - min_delta.
  Decision update(double val_loss);

  bool last_improved() const { return last_improved_; }
  double best() const { return best_; }
  std::size_t best_index() const { return best_index_; }
  std::size_t evaluations() const { return evaluations_; }
  std::size_t patience() const { return patience_; }

 private:
  std::size_t patience_;
  double min_delta_;
  double best_;
  std::size_t best_index_ = 0;
  std::size_t bad_ = 0;
  std::size_t evaluations_ = 0;
  bool last_improved_ = false;
};

}  // namespace s2v::train
