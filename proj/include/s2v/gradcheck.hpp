#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "s2v/tensor.hpp"

namespace s2v::ad {

// Builds the value to differentiate on the supplied tape. Non-scalar outputs
// are reduced by summation.
using TapeFn = std::function<Tensor<double>(Tape<double>&)>;
using UnaryTapeFn = std::function<Tensor<double>(Tape<double>&, const Tensor<double>&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
};

// Compares analytic gradients of `fn` w.r.t. every leaf against central
// differences. Error per coordinate is |analytic - numeric| / max(1, |numeric|).
// `max_coords_per_leaf` = 0 checks every coordinate; otherwise a seeded random
// subset of that size is probed.
GradCheckResult check_gradients(const TapeFn& fn, const std::vector<Tensor<double>>& leaves,
                                double eps = 1e-5, std::size_t max_coords_per_leaf = 0,
                                std::uint64_t seed = 0);

// Single-input form; `x` must be a leaf.
double finite_difference_check(const UnaryTapeFn& fn, Tensor<double> x, double eps = 1e-5);

}  // namespace s2v::ad
