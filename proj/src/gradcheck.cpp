#include "s2v/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "s2v/errors.hpp"
#include "s2v/ops.hpp"

namespace s2v::ad {
namespace {

Tensor<double> reduce(Tape<double>& tape, const Tensor<double>& y) {
  return y.numel() == 1 && y.rank() == 0 ? y : sum(tape, y);
}

double evaluate(const TapeFn& fn) {
  Tape<double> tape;
  const double v = reduce(tape, fn(tape)).item();
  if (!std::isfinite(v)) throw NumericError("gradient check: function value is not finite");
  return v;
}

}  // namespace

GradCheckResult check_gradients(const TapeFn& fn, const std::vector<Tensor<double>>& leaves,
                                double eps, std::size_t max_coords_per_leaf,
                                std::uint64_t seed) {
  std::vector<Tensor<double>> params = leaves;
  for (auto& p : params) {
    if (!p.is_leaf()) throw GraphError("gradient check: inputs must be leaves");
    p.set_requires_grad(true);
    p.clear_grad();
  }
  {
    Tape<double> tape;
    auto y = reduce(tape, fn(tape));
    if (!std::isfinite(y.item())) throw NumericError("gradient check: function value is not finite");
    if (tape.find(y) >= 0) backward(y, tape);
  }

  std::mt19937_64 rng(seed);
  GradCheckResult result;
  for (auto& p : params) {
    std::vector<std::size_t> coords(p.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (max_coords_per_leaf != 0 && coords.size() > max_coords_per_leaf) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_coords_per_leaf);
    }
    const std::vector<double> analytic =
        p.has_grad() ? std::vector<double>(p.grad().begin(), p.grad().end())
                     : std::vector<double>(p.numel(), 0.0);
    auto data = p.mutable_data();
    for (std::size_t c : coords) {
      const double saved = data[c];
      data[c] = saved + eps;
      const double up = evaluate(fn);
      data[c] = saved - eps;
      const double down = evaluate(fn);
      data[c] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = std::abs(analytic[c] - numeric) / std::max(1.0, std::abs(numeric));
      result.max_rel_error = std::max(result.max_rel_error, err);
      ++result.coordinates;
    }
    p.clear_grad();
  }
  return result;
}

double finite_difference_check(const UnaryTapeFn& fn, Tensor<double> x, double eps) {
  return check_gradients([&](Tape<double>& tape) { return fn(tape, x); }, {x}, eps)
      .max_rel_error;
}

}  // namespace s2v::ad
