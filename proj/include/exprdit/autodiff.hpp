#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "exprdit/tensor.hpp"

namespace exprdit::ad {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool has_grad = false;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  Tensor<T>& grad_buffer() {
    if (!has_grad) {
      grad = Tensor<T>(value.shape());
      has_grad = true;
    }
    return grad;
  }
};

// Handle to a node of the computation graph. Copies share the node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Var constant(Tensor<T> value) { return make(std::move(value), false); }
  static Var parameter(Tensor<T> value) { return make(std::move(value), true); }

  bool defined() const { return node_ != nullptr; }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }

  // Gradient accumulated by backward(); zeros when nothing flowed here.
  Tensor<T> grad() const {
    return node_->has_grad ? node_->grad : Tensor<T>(node_->value.shape());
  }
  void zero_grad() {
    node_->has_grad = false;
    node_->grad = Tensor<T>();
  }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  static Var make(Tensor<T> value, bool requires_grad) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
  }

  std::shared_ptr<Node<T>> node_;
};

// Seeds d(root)/d(root) = 1 and propagates through the graph. root must hold
// exactly one element.
template <typename T>
void backward(const Var<T>& root);

// Creates the output node of an op. The backward closure is kept only when at
// least one input requires a gradient, so inference passes build no graph.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs, std::function<void(Node<T>&)> backward);

// ---- elementwise -----------------------------------------------------------
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T s);
template <typename T> Var<T> silu(const Var<T>& x);
template <typename T> Var<T> gelu(const Var<T>& x);

// ---- row-broadcast (x is rows x cols, row has cols elements) ---------------
template <typename T> Var<T> add_row(const Var<T>& x, const Var<T>& row);
template <typename T> Var<T> mul_row(const Var<T>& x, const Var<T>& row);
// x * (1 + scale) + shift
template <typename T> Var<T> modulate(const Var<T>& x, const Var<T>& shift, const Var<T>& scale);

// ---- matrix ----------------------------------------------------------------
template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
// x W + b; bias may be undefined.
template <typename T> Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias);
// Per-row normalization to zero mean and unit variance (no affine).
template <typename T> Var<T> layer_norm(const Var<T>& x, T eps = T(1e-6));

// ---- layout ----------------------------------------------------------------
template <typename T> Var<T> reshape(const Var<T>& x, Shape shape);
// out.flat[i] = x.flat[index[i]]; backward scatters and accumulates.
template <typename T> Var<T> gather(const Var<T>& x, std::vector<std::size_t> index, Shape shape);
template <typename T> Var<T> concat_rows(const std::vector<Var<T>>& parts);
template <typename T> Var<T> concat_cols(const std::vector<Var<T>>& parts);
template <typename T> Var<T> slice_rows(const Var<T>& x, std::size_t begin, std::size_t end);
// Stacks `times` copies of x along rows.
template <typename T> Var<T> repeat_rows(const Var<T>& x, std::size_t times);

// ---- reductions ------------------------------------------------------------
template <typename T> Var<T> sum(const Var<T>& x);
template <typename T> Var<T> mean(const Var<T>& x);
// Sum of x * w for a constant weight tensor of the same shape.
template <typename T> Var<T> weighted_sum(const Var<T>& x, const Tensor<T>& w);
template <typename T> Var<T> mse(const Var<T>& pred, const Var<T>& target);

}  // namespace exprdit::ad
