#pragma once

// Reverse-mode automatic differentiation over dense row-major tensors of
// 64-bit reals.
//
// A Tensor is a cheap handle onto a graph node; copies share storage and
// gradient, the same way a torch tensor does. Operations record their inputs
// and a backward closure whenever any input requires a gradient and grad mode
// is enabled (see NoGradGuard). backward() walks the recorded graph once in
// reverse topological order.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace taegcn::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  /// Direct write access. Only meaningful on leaves; mutating an interior
  /// node after it has been consumed invalidates the recorded graph.
  std::span<double> mutable_values();
  /// Gradient accumulator; empty when no gradient has been allocated yet.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();

  bool requires_grad() const;
  bool is_leaf() const;
  void zero_grad();

  double item() const;
  double at(std::initializer_list<std::size_t> index) const;
  bool all_finite() const;

  /// New leaf holding a copy of the values, disconnected from any graph.
  Tensor detach(bool requires_grad = false) const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  static Tensor wrap(std::shared_ptr<detail::Node> node) { return Tensor(std::move(node)); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Backward closure: receives the output gradient and one span per input.
/// A span is empty when that input does not need a gradient.
using BackwardFn = std::function<void(std::span<const double> grad_out,
                                      std::vector<std::span<double>>& grad_inputs)>;

/// Build an operation result. Records the graph edge only when grad mode is
/// on and at least one input requires a gradient.
Tensor make_result(Shape shape, std::vector<double> values, const std::vector<Tensor>& inputs,
                   BackwardFn backward);

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Accumulate d(loss)/d(leaf) into every reachable leaf that requires a
/// gradient. Interior gradients are recomputed from scratch on each call.
void backward(const Tensor& loss);

/// Row-major boolean matrix.
struct BoolMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> cells;

  BoolMatrix() = default;
  BoolMatrix(std::size_t r, std::size_t c, bool value = false)
      : rows(r), cols(c), cells(r * c, value ? 1 : 0) {}
  bool operator()(std::size_t r, std::size_t c) const { return cells[r * cols + c] != 0; }
  void set(std::size_t r, std::size_t c, bool value) { cells[r * cols + c] = value ? 1 : 0; }
  bool operator==(const BoolMatrix&) const = default;
};

// Elementwise binary ops accept equal shapes, or a right operand whose shape
// is a suffix of the left operand's shape (bias-style broadcasting).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);

Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor abs(const Tensor& a);

/// Batched matrix product over the last two axes. Leading axes broadcast
/// numpy-style (missing or unit extents).
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose_last2(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
/// Elements [begin, end) along `axis`.
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
/// Mean over `axis`; the axis is removed.
Tensor mean(const Tensor& a, std::size_t axis);
/// Sum of all elements, shape {}.
Tensor sum(const Tensor& a);
Tensor dot(const Tensor& a, const Tensor& b);

/// Prepend a new leading axis of extent `count`, repeating the input.
Tensor expand_leading(const Tensor& a, std::size_t count);

/// Shift along `axis` by `offset` steps toward higher indices, filling the
/// first `offset` positions with zero.
Tensor shift(const Tensor& a, std::size_t axis, std::size_t offset);

/// Softmax over the last axis restricted to entries where mask(row, col) is
/// true. `scores` has shape [..., R, C] and `mask` is R x C. Disallowed entries
/// are excluded from the reduction and come out as exactly zero. A row with
/// no allowed entry raises ContractError.
Tensor masked_softmax(const Tensor& scores, const BoolMatrix& mask);

}  // namespace taegcn::ad
