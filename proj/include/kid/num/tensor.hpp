// SPDX-License-Identifier: Apache-2.0
//
// Dense float64 tensors with a reverse-mode tape.
//
// A Tensor is a cheap handle onto a shared node. Nodes produced by an op
// keep references to their parents and a backward rule; the tape is the
// topological ordering of those nodes reachable from a loss, built and
// consumed by backward().

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace kid::num {

using Shape = std::vector<std::size_t>;

enum class OpKind {
  leaf,
  matmul,
  add,
  mul,
  softmax_rows,
  log,
  exp,
  layer_norm,
  relu,
  sigmoid,
  embedding,
  concat_rows,
  slice_rows,
  masked_fill,
  sum,
  mean,
};

std::string_view op_name(OpKind kind);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

std::size_t element_count(const Shape& shape);
std::string shape_string(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool consumed = false;
  OpKind kind = OpKind::leaf;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad, accumulates into parents' grads.
  std::function<void(Node&)> backward;

  double* grad_buffer();  // allocates zeroed grad on demand
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->data.size(); }
  std::size_t rank() const { return node_->shape.size(); }
  // Leading extents collapsed; for rank-1 tensors rows() == 1.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  double item() const;
  double at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad();
  void zero_grad();
  OpKind kind() const { return node_->kind; }

  // A fresh leaf sharing no history with this tensor.
  Tensor detach_copy(bool requires_grad = false) const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Disables tape recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

// Populates grads of every requires_grad leaf reachable from `loss`.
void backward(const Tensor& loss);

// Topologically ordered nodes reachable from `loss` (parents first).
std::vector<std::shared_ptr<Node>> build_tape(const Tensor& loss);

namespace testing {
// Scales the upstream gradient of every node of `kind` by 1.5 during
// backward. Used by the gradient-check negative controls.
void inject_backward_fault(OpKind kind);
void clear_backward_fault();
}  // namespace testing

}  // namespace kid::num
