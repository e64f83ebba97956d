#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "spt/mask.hpp"

namespace spt {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

struct TensorNode {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
};

/// Immutable dense row-major array of doubles.
///
/// Copies share storage. Operations never modify their operands, so a
/// Tensor may be read from any number of threads. Rank 0 is a scalar.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  /// Leaf tensor whose gradient is collected by backward().
  static Tensor parameter(Shape shape, std::vector<double> data);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->data.size(); }
  std::span<const double> data() const { return node_->data; }
  double operator[](std::size_t i) const { return node_->data[i]; }
  /// Element (row, col) of a rank-2 tensor.
  double at(std::size_t row, std::size_t col) const { return node_->data[row * node_->shape[1] + col]; }
  double item() const;
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool all_finite() const;

  /// Same values, no gradient tracking.
  Tensor detach() const;

  const TensorNode* node() const noexcept { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<const TensorNode> node) : node_(std::move(node)) {}
  std::shared_ptr<const TensorNode> node_;
  friend Tensor make_tensor(std::shared_ptr<TensorNode>);
};

/// Wraps a freshly built node; used by operations that assemble results in place.
Tensor make_tensor(std::shared_ptr<TensorNode> node);

/// Gradients produced by backward(), keyed by tensor identity.
class GradientSet {
 public:
  bool contains(const Tensor& t) const { return grads_.count(t.node()) != 0; }
  /// Empty span when `t` received no gradient.
  std::span<const double> view(const Tensor& t) const;
  /// Gradient as a tensor shaped like `t`; zeros when `t` received none.
  Tensor grad(const Tensor& t) const;
  std::size_t size() const noexcept { return grads_.size(); }

 private:
  std::unordered_map<const TensorNode*, std::vector<double>> grads_;
  friend GradientSet backward(const Tensor& loss, const class Tape& tape);
};

/// Ordered record of differentiable operations on one thread.
///
/// Operations record themselves on the thread's active tape (see TapeScope)
/// whenever at least one operand requires a gradient.
class Tape {
 public:
  /// Accumulates the output adjoint into each input's gradient buffer.
  /// Buffers of inputs that do not require gradients are null.
  using Adjoint =
      std::function<void(std::span<const double> grad_out, std::span<std::vector<double>* const> grad_in)>;

  void record(const Tensor& output, std::vector<Tensor> inputs, Adjoint adjoint);
  std::size_t size() const noexcept { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  struct Entry {
    Tensor output;
    std::vector<Tensor> inputs;
    Adjoint adjoint;
  };
  std::vector<Entry> entries_;
  friend GradientSet backward(const Tensor& loss, const Tape& tape);
};

/// Makes `tape` the active tape of the calling thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape() noexcept;

/// Reverse sweep over `tape` seeded with d(loss)/d(loss) = 1.
/// Throws ContractError if `loss` is not a single element.
GradientSet backward(const Tensor& loss, const Tape& tape);

// Differentiable operations. All throw DimensionError on incompatible shapes.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

enum class ElementwiseOp { add, mul };
/// Identical shapes, or one operand holding a single element.
Tensor elementwise(const Tensor& a, const Tensor& b, ElementwiseOp op);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

/// Softmax of each row over the columns where `mask` is set; masked
/// entries are exactly zero. Rows are shifted by their unmasked maximum.
Tensor rowwise_masked_softmax(const Tensor& logits, const AttentionMask& mask);

/// Normalizes over the last axis (epsilon 1e-5) then applies gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double epsilon = 1e-5);
/// Exact GELU, x * Phi(x).
Tensor gelu(const Tensor& x);
/// x[n x in] . w[in x out] + b[out] with the bias added to every row.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
/// Sub-tensor at `index` along the first axis.
Tensor select(const Tensor& x, std::size_t index);
/// Stacks equally shaped tensors along a new first axis.
Tensor stack(std::span<const Tensor> parts);
Tensor reshape(const Tensor& x, Shape shape);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

}  // namespace spt
