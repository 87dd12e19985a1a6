#include "s2v/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "s2v/errors.hpp"

namespace s2v::ad {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <class T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad)
    : node_(std::make_shared<TensorNode<T>>()) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

template <class T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <class T>
std::span<T> Tensor<T>::mutable_data() {
  if (!node_->leaf) {
    throw GraphError("in-place write to a non-leaf tensor");
  }
  return node_->data;
}

template <class T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw ContractError("item() on tensor of shape " + shape_str(shape()));
  }
  return node_->data[0];
}

template <class T>
void Tensor<T>::set_requires_grad(bool flag) {
  if (!node_->leaf) {
    throw GraphError("requires_grad can only be changed on leaves");
  }
  node_->requires_grad = flag;
}

template <class T>
std::span<T> Tensor<T>::grad_buffer() const {
  if (node_->grad.empty()) node_->grad.assign(node_->data.size(), T(0));
  return node_->grad;
}

template <class T>
void Tensor<T>::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <class T>
Tensor<T> Tensor<T>::clone() const {
  Tensor out(node_->shape, node_->data, node_->requires_grad);
  out.node_->grad = node_->grad;
  return out;
}

template <class T>
void Tape<T>::record(std::vector<Tensor<T>> inputs, Tensor<T>& output,
                     BackwardFn fn) {
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor<T>& t) { return t.requires_grad(); });
  if (!needs) return;
  output.set_requires_grad(true);
  output.mark_non_leaf();
  entries_.push_back(Entry{std::move(inputs), output, std::move(fn)});
}

template <class T>
long Tape<T>::find(const Tensor<T>& t) const {
  for (long i = static_cast<long>(entries_.size()) - 1; i >= 0; --i) {
    if (entries_[static_cast<std::size_t>(i)].output.id() == t.id()) return i;
  }
  return -1;
}

template <class T>
std::vector<Tensor<T>> backward(const Tensor<T>& loss, Tape<T>& tape) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward needs a scalar loss, got " +
                        (loss.defined() ? shape_str(loss.shape()) : "undefined"));
  }
  const long last = tape.find(loss);
  if (last < 0) {
    throw GraphError("loss was not produced on this tape");
  }
  auto& entries = tape.entries();
  for (auto& e : entries) e.output.clear_grad();

  Tensor<T> root = loss;
  root.grad_buffer()[0] = T(1);

  std::vector<Tensor<T>> leaves;
  std::unordered_set<const void*> seen;
  for (long i = last; i >= 0; --i) {
    auto& e = entries[static_cast<std::size_t>(i)];
    if (!e.output.has_grad()) continue;
    e.backward(e.output);
    for (const auto& in : e.inputs) {
      if (in.is_leaf() && in.requires_grad() && seen.insert(in.id()).second) {
        leaves.push_back(in);
      }
    }
  }
  for (auto& e : entries) e.output.clear_grad();
  return leaves;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template std::vector<Tensor<float>> backward(const Tensor<float>&, Tape<float>&);
template std::vector<Tensor<double>> backward(const Tensor<double>&, Tape<double>&);

}  // namespace s2v::ad
