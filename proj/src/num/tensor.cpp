// SPDX-License-Identifier: Apache-2.0
#include "kid/num/tensor.hpp"

#include <atomic>
#include <sstream>
#include <unordered_set>

namespace kid::num {

namespace {

thread_local bool t_grad_enabled = true;
std::atomic<int> g_fault_kind{-1};

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::mul: return "mul";
    case OpKind::softmax_rows: return "softmax-rows";
    case OpKind::log: return "log";
    case OpKind::exp: return "exp";
    case OpKind::layer_norm: return "layer-norm";
    case OpKind::relu: return "relu";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::embedding: return "embedding-lookup";
    case OpKind::concat_rows: return "concat-rows";
    case OpKind::slice_rows: return "slice-rows";
    case OpKind::masked_fill: return "masked-fill";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
  }
  return "unknown";
}

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

double* Node::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad.data();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = element_count(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape.empty()) throw ShapeError("tensor: empty shape");
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor: zero extent in " + shape_string(shape));
  }
  if (element_count(shape) != data.size()) {
    throw ShapeError("tensor: shape " + shape_string(shape) + " does not match " +
                     std::to_string(data.size()) + " values");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

std::size_t Tensor::rows() const {
  const auto& s = node_->shape;
  if (s.size() == 1) return 1;
  std::size_t r = 1;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) r *= s[i];
  return r;
}

std::size_t Tensor::cols() const { return node_->shape.back(); }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item: tensor of shape " + shape_string(shape()));
  return node_->data[0];
}

std::span<double> Tensor::mutable_grad() { return {node_->grad_buffer(), node_->data.size()}; }

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach_copy(bool requires_grad) const {
  return from(node_->shape, node_->data, requires_grad);
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_mode_enabled() { return t_grad_enabled; }

std::vector<std::shared_ptr<Node>> build_tape(const Tensor& loss) {
  std::vector<std::shared_ptr<Node>> order;
  std::unordered_set<Node*> visited;
  // Iterative post-order DFS; parents land before children.
  std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      std::shared_ptr<Node> parent = node->parents[next++];
      if (parent->requires_grad && visited.insert(parent.get()).second) {
        stack.emplace_back(std::move(parent), 0);
      }
      continue;
    }
    order.push_back(std::move(node));
    stack.pop_back();
  }
  return order;
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw TapeError("backward: undefined loss");
  if (loss.size() != 1) {
    throw TapeError("backward: loss must be scalar, got shape " + shape_string(loss.shape()));
  }
  Node& root = *loss.node();
  if (!root.requires_grad || root.consumed || (root.kind != OpKind::leaf && !root.backward)) {
    throw TapeError("backward: loss is detached from any tape");
  }
  auto tape = build_tape(loss);
  root.grad_buffer()[0] += 1.0;
  const int fault = g_fault_kind.load(std::memory_order_relaxed);
  for (auto it = tape.rbegin(); it != tape.rend(); ++it) {
    Node* node = it->get();
    if (node->kind == OpKind::leaf) continue;
    if (node->grad.empty()) continue;  // no path from loss carried gradient here
    if (fault >= 0 && static_cast<int>(node->kind) == fault) {
      for (auto& g : node->grad) g *= 1.5;
    }
    node->backward(*node);
    // Consume: interior nodes release their history and scratch gradient.
    node->backward = nullptr;
    node->parents.clear();
    node->consumed = true;
    if (node != &root) node->grad.clear();
  }
  root.consumed = true;
}

namespace testing {
void inject_backward_fault(OpKind kind) { g_fault_kind.store(static_cast<int>(kind)); }
void clear_backward_fault() { g_fault_kind.store(-1); }
}  // namespace testing

}  // namespace kid::num
