#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace s2v::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <class T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until something is accumulated
  bool requires_grad = false;
  bool leaf = true;
};

// Dense row-major array with an optional gradient slot. Copies are handles to
// the same storage; use clone() for a deep copy.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  // Only leaves may be written in place (optimizer updates, initialisation).
  std::span<T> mutable_data();
  T item() const;
  T at(std::size_t flat) const { return node_->data.at(flat); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag);
  bool is_leaf() const { return node_->leaf; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  // Allocates a zero gradient on first use.
  std::span<T> grad_buffer() const;
  void zero_grad();
  void clear_grad() const { node_->grad.clear(); }

  Tensor clone() const;
  const void* id() const { return node_.get(); }

  // Internal: marks an op output as produced on a tape.
  void mark_non_leaf() { node_->leaf = false; }

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

// Ordered record of primitive applications for one forward pass.
template <class T>
class Tape {
 public:
  // Called with the op output (its grad already populated); accumulates into
  // the inputs' gradient buffers.
  using BackwardFn = std::function<void(const Tensor<T>& output)>;

  struct Entry {
    std::vector<Tensor<T>> inputs;
    Tensor<T> output;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  // Records only when some input requires a gradient; marks output accordingly.
  void record(std::vector<Tensor<T>> inputs, Tensor<T>& output, BackwardFn fn);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  void clear() { entries_.clear(); }
  // Index of the entry producing `t`, or -1.
  long find(const Tensor<T>& t) const;
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }

 private:
  std::vector<Entry> entries_;
};

// Reverse sweep from a scalar loss. Leaf gradients accumulate (they are not
// zeroed here); intermediate gradients are reset before the sweep and freed
// afterwards. Returns the leaves that received a gradient.
template <class T>
std::vector<Tensor<T>> backward(const Tensor<T>& loss, Tape<T>& tape);

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace s2v::ad
