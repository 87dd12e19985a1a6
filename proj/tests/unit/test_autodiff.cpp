#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <functional>

#include "s2v/errors.hpp"
#include "s2v/gradcheck.hpp"
#include "s2v/ops.hpp"

using namespace s2v;
using namespace s2v::ad;

namespace {

using T64 = Tensor<double>;

T64 leaf(Shape shape, std::vector<double> data) { return T64(std::move(shape), std::move(data), true); }

T64 random_leaf(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return leaf(std::move(shape), std::move(v));
}

std::vector<double> values(const T64& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

// ---------------------------------------------------------------- matmul

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Tape<double> tape;
  auto c = matmul(tape, T64({2, 2}, {1, 2, 3, 4}), T64({2, 2}, {1, 0, 0, 1}));
  EXPECT_EQ(values(c), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Matmul, ZeroMatrixGivesZeros) {
  Tape<double> tape;
  auto c = matmul(tape, T64({2, 2}, {1, 2, 3, 4}), T64::zeros({2, 2}));
  EXPECT_EQ(values(c), (std::vector<double>{0, 0, 0, 0}));
}

TEST(Matmul, RowTimesColumnIsDotProduct) {
  Tape<double> tape;
  auto c = matmul(tape, T64({1, 2}, {1, 2}), T64({2, 1}, {3, 4}));
  EXPECT_EQ(c.shape(), (Shape{1, 1}));
  EXPECT_EQ(c.item(), 11.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Tape<double> tape;
  try {
    matmul(tape, T64::zeros({2, 3}), T64::zeros({2, 3}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
  }
}

TEST(Matmul, BackwardMatchesTransposeRule) {
  Tape<double> tape;
  auto a = leaf({2, 2}, {1, 2, 3, 4});
  auto b = leaf({2, 2}, {5, 6, 7, 8});
  backward(sum(tape, matmul(tape, a, b)), tape);
  // dA = 1 * B^T row sums, dB = A^T * 1
  EXPECT_EQ(values(T64({2, 2}, {a.grad().begin(), a.grad().end()})), (std::vector<double>{11, 15, 11, 15}));
  EXPECT_EQ(values(T64({2, 2}, {b.grad().begin(), b.grad().end()})), (std::vector<double>{4, 4, 6, 6}));
}

// ---------------------------------------------------------------- pointwise

TEST(Pointwise, ReluSplitsOnSign) {
  Tape<double> tape;
  EXPECT_EQ(values(relu(tape, T64({3}, {-1, 0, 2}))), (std::vector<double>{0, 0, 2}));
}

TEST(Pointwise, SigmoidAndTanhAtZero) {
  Tape<double> tape;
  EXPECT_EQ(sigmoid(tape, T64({1}, {0})).item(), 0.5);
  EXPECT_EQ(tanh(tape, T64({1}, {0})).item(), 0.0);
}

TEST(Pointwise, ReluDerivativeAtZeroIsZero) {
  Tape<double> tape;
  auto x = leaf({3}, {-1, 0, 2});
  backward(sum(tape, relu(tape, x)), tape);
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{0, 0, 1}));
}

TEST(Pointwise, BinaryShapeMismatchIsDimensionError) {
  Tape<double> tape;
  EXPECT_THROW(add(tape, T64::zeros({2}), T64::zeros({3})), DimensionError);
  EXPECT_THROW(mul(tape, T64::zeros({2, 1}), T64::zeros({1, 2})), DimensionError);
}

TEST(Pointwise, WrongArityIsContractError) {
  Tape<double> tape;
  std::vector<T64> one{T64::zeros({2})};
  EXPECT_THROW(pointwise<double>(tape, PointwiseOp::add, one), ContractError);
}

TEST(Pointwise, ScaleMultipliesByFactor) {
  Tape<double> tape;
  EXPECT_EQ(values(scale(tape, T64({2}, {1, -2}), 3.0)), (std::vector<double>{3, -6}));
}

TEST(Pointwise, FiniteInputsGiveFiniteOutputs) {
  Tape<double> tape;
  auto x = T64({4}, {-1e300, -50, 50, 1e300});
  for (auto y : {relu(tape, x), sigmoid(tape, x), tanh(tape, x)}) {
    for (double v : y.data()) EXPECT_TRUE(std::isfinite(v));
  }
}

// ---------------------------------------------------------------- mse

TEST(MseLoss, IdenticalInputsGiveZero) {
  Tape<double> tape;
  EXPECT_EQ(mse_loss(tape, T64({2}, {1, 2}), T64({2}, {1, 2})).item(), 0.0);
}

TEST(MseLoss, HandValues) {
  Tape<double> tape;
  EXPECT_EQ(mse_loss(tape, T64({1}, {3}), T64({1}, {1})).item(), 4.0);
  EXPECT_EQ(mse_loss(tape, T64({2}, {0, 0}), T64({2}, {1, -1})).item(), 1.0);
}

TEST(MseLoss, EmptyInputIsContractError) {
  Tape<double> tape;
  EXPECT_THROW(mse_loss(tape, T64::zeros({0}), T64::zeros({0})), ContractError);
}

TEST(MseLoss, GradientIsTwoOverNTimesResidual) {
  Tape<double> tape;
  auto p = leaf({2}, {3, -1});
  backward(mse_loss(tape, p, T64({2}, {1, 1})), tape);
  EXPECT_EQ(p.grad()[0], 2.0);
  EXPECT_EQ(p.grad()[1], -2.0);
}

// ---------------------------------------------------------------- concat

TEST(Concat, ColumnsInterleaveAlongAxisOne) {
  Tape<double> tape;
  auto c = concat(tape, {T64({2, 1}, {1, 2}), T64({2, 1}, {3, 4})}, 1);
  EXPECT_EQ(c.shape(), (Shape{2, 2}));
  EXPECT_EQ(values(c), (std::vector<double>{1, 3, 2, 4}));
}

TEST(Concat, EmptyOperandIsIdentity) {
  Tape<double> tape;
  auto x = T64({2, 2}, {1, 2, 3, 4});
  auto c = concat(tape, {x, T64::zeros({0, 2})}, 0);
  EXPECT_EQ(c.shape(), x.shape());
  EXPECT_EQ(values(c), values(x));
}

TEST(Concat, ThreeVectors) {
  Tape<double> tape;
  EXPECT_EQ(values(concat(tape, {T64({1}, {1}), T64({1}, {2}), T64({1}, {3})}, 0)),
            (std::vector<double>{1, 2, 3}));
}

TEST(Concat, IncompatibleShapesAreDimensionError) {
  Tape<double> tape;
  EXPECT_THROW(concat(tape, {T64::zeros({2, 1}), T64::zeros({3, 1})}, 1), DimensionError);
}

TEST(Concat, BackwardSlicesGradientBack) {
  Tape<double> tape;
  auto a = leaf({2, 1}, {1, 2});
  auto b = leaf({2, 2}, {3, 4, 5, 6});
  auto c = concat(tape, {a, b}, 1);
  auto w = T64({2, 3}, {1, 2, 3, 4, 5, 6});
  backward(sum(tape, mul(tape, c, w)), tape);
  EXPECT_EQ(std::vector<double>(a.grad().begin(), a.grad().end()), (std::vector<double>{1, 4}));
  EXPECT_EQ(std::vector<double>(b.grad().begin(), b.grad().end()), (std::vector<double>{2, 3, 5, 6}));
}

// ---------------------------------------------------------------- backward

TEST(Backward, SquaredWeightGradient) {
  Tape<double> tape;
  auto w = leaf({1}, {3});
  backward(mse_loss(tape, w, T64({1}, {0})), tape);
  EXPECT_EQ(w.grad()[0], 6.0);
}

TEST(Backward, SumOfReluGradient) {
  Tape<double> tape;
  auto x = leaf({2}, {-1, 2});
  backward(sum(tape, relu(tape, x)), tape);
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_EQ(x.grad()[1], 1.0);
}

TEST(Backward, LeafUsedTwiceAccumulates) {
  Tape<double> tape;
  auto x = leaf({1}, {5});
  backward(sum(tape, add(tape, x, x)), tape);
  EXPECT_EQ(x.grad()[0], 2.0);
}

TEST(Backward, ReplayWithoutZeroingDoubles) {
  Tape<double> tape;
  auto x = leaf({2}, {0.3, -0.7});
  auto loss = sum(tape, mul(tape, tanh(tape, x), x));
  backward(loss, tape);
  const std::vector<double> once(x.grad().begin(), x.grad().end());
  backward(loss, tape);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(x.grad()[i], 2.0 * once[i]);
}

TEST(Backward, NonScalarLossIsContractError) {
  Tape<double> tape;
  auto x = leaf({2}, {1, 2});
  auto y = relu(tape, x);
  EXPECT_THROW(backward(y, tape), ContractError);
}

TEST(Backward, LossFromAnotherTapeIsGraphError) {
  Tape<double> tape, other;
  auto x = leaf({1}, {1});
  auto loss = sum(other, x);
  EXPECT_THROW(backward(loss, tape), GraphError);
}

TEST(Backward, NothingRecordedWithoutGradInputs) {
  Tape<double> tape;
  relu(tape, T64({2}, {1, 2}));
  EXPECT_TRUE(tape.empty());
}

TEST(Backward, TapeIsTopologicallyOrdered) {
  Tape<double> tape;
  auto x = leaf({2}, {1, 2});
  auto y = sum(tape, mul(tape, tanh(tape, x), sigmoid(tape, x)));
  std::set<const void*> produced;
  for (const auto& e : tape.entries()) {
    for (const auto& in : e.inputs) EXPECT_TRUE(in.is_leaf() || produced.count(in.id()));
    produced.insert(e.output.id());
  }
  EXPECT_TRUE(produced.count(y.id()));
}

TEST(Tensor, NonLeafIsNotWritable) {
  Tape<double> tape;
  auto y = relu(tape, leaf({1}, {1}));
  EXPECT_THROW(y.mutable_data(), GraphError);
}

TEST(Tensor, DataLengthMustMatchShape) { EXPECT_THROW(T64({2, 2}, {1, 2, 3}), DimensionError); }

// ---------------------------------------------------------------- finite differences

TEST(FiniteDifference, IdentityIsExact) {
  const double err = finite_difference_check([](Tape<double>&, const T64& x) { return x; }, leaf({3}, {1, -2, 0.5}));
  EXPECT_LT(err, 1e-9);
}

TEST(FiniteDifference, MseAgainstFixedTarget) {
  const auto target = T64({3}, {0.1, 0.2, -0.3});
  const double err = finite_difference_check(
      [&](Tape<double>& tape, const T64& x) { return mse_loss(tape, x, target); }, leaf({3}, {1, -2, 0.5}));
  EXPECT_LT(err, 1e-6);
}

TEST(FiniteDifference, NonFiniteValueIsNumericError) {
  const auto f = [](Tape<double>& tape, const T64& x) { return scale(tape, x, std::numeric_limits<double>::infinity()); };
  EXPECT_THROW(finite_difference_check(f, leaf({1}, {1})), NumericError);
}

// Every primitive against central differences on random shapes.
TEST(GradCheck, EveryPrimitiveOnRandomShapes) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> dim(1, 4);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = dim(rng), k = dim(rng), n = dim(rng);
    auto a = random_leaf({m, k}, rng);
    auto b = random_leaf({k, n}, rng);
    auto c = random_leaf({m, n}, rng);
    auto bias = random_leaf({n}, rng);
    // keep relu inputs away from the kink
    auto r = random_leaf({m, n}, rng);
    for (auto& v : r.mutable_data()) v += v >= 0 ? 0.1 : -0.1;
    auto table = random_leaf({5, n}, rng);
    std::vector<std::int32_t> idx{static_cast<std::int32_t>(rng() % 5), static_cast<std::int32_t>(rng() % 5), 0};
    const std::size_t L = 1 + dim(rng) * 2, d = dim(rng);
    auto x = random_leaf({2, k, L}, rng);
    auto kern = random_leaf({n, k, 2}, rng);
    auto kb = random_leaf({n}, rng);
    auto gamma = random_leaf({k}, rng, 0.5, 1.5);
    auto beta = random_leaf({k}, rng);

    const std::vector<std::pair<const char*, std::function<T64(Tape<double>&)>>> cases = {
        {"matmul", [&](Tape<double>& t) { return matmul(t, a, b); }},
        {"relu", [&](Tape<double>& t) { return mul(t, relu(t, r), c); }},
        {"sigmoid", [&](Tape<double>& t) { return mul(t, sigmoid(t, c), c); }},
        {"tanh", [&](Tape<double>& t) { return mul(t, tanh(t, c), r); }},
        {"add", [&](Tape<double>& t) { return mul(t, add(t, c, r), c); }},
        {"sub", [&](Tape<double>& t) { return mul(t, sub(t, c, r), r); }},
        {"mul", [&](Tape<double>& t) { return mul(t, c, r); }},
        {"scale", [&](Tape<double>& t) { return mul(t, scale(t, c, -1.7), c); }},
        {"add_bias", [&](Tape<double>& t) { return mul(t, add_bias(t, c, bias), c); }},
        {"mse", [&](Tape<double>& t) { return mse_loss(t, c, r); }},
        {"concat", [&](Tape<double>& t) { return mul(t, concat(t, {c, r}, 1), concat(t, {r, c}, 1)); }},
        {"slice", [&](Tape<double>& t) { auto s = slice(t, a, 1, 0, 1); return mul(t, s, s); }},
        {"reshape", [&](Tape<double>& t) { auto s = reshape(t, c, {n, m}); return mul(t, s, s); }},
        {"gather", [&](Tape<double>& t) { auto g = gather_rows(t, table, idx); return mul(t, g, g); }},
        {"conv", [&](Tape<double>& t) { auto y = causal_conv1d(t, x, kern, kb, d); return mul(t, y, y); }},
        {"bn_train", [&](Tape<double>& t) { auto y = batch_norm_train<double>(t, x, gamma, beta, 1e-5, nullptr, nullptr); return mul(t, y, x); }},
    };
    for (const auto& [name, fn] : cases) {
      const auto res = check_gradients(fn, {a, b, c, bias, r, table, x, kern, kb, gamma, beta});
      EXPECT_LT(res.max_rel_error, 1e-4) << name << " trial " << trial;
      worst = std::max(worst, res.max_rel_error);
    }
  }
  RecordProperty("worst_rel_error", std::to_string(worst));
}

TEST(Determinism, SameInputsSameOutputs) {
  std::mt19937_64 r1(3), r2(3);
  auto a1 = random_leaf({3, 4}, r1), b1 = random_leaf({4, 2}, r1);
  auto a2 = random_leaf({3, 4}, r2), b2 = random_leaf({4, 2}, r2);
  Tape<double> t1, t2;
  EXPECT_EQ(values(tanh(t1, matmul(t1, a1, b1))), values(tanh(t2, matmul(t2, a2, b2))));
}
