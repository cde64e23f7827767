// SPDX-License-Identifier: Apache-2.0
#include "kid/num/ops.hpp"

#include <cmath>
#include <limits>

#include "kid/num/kernels.hpp"

namespace kid::num {

namespace {

using kernels::Trans;

[[noreturn]] void shape_fail(OpKind kind, const std::string& detail) {
  throw ShapeError(std::string(op_name(kind)) + ": " + detail);
}

// Builds the output node; wires the tape when recording is needed.
Tensor make_result(OpKind kind, Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs, std::function<void(Node&)> rule) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->kind = kind;
  bool record = false;
  if (grad_mode_enabled()) {
    for (const auto& t : inputs) record = record || (t.defined() && t.requires_grad());
  }
  if (record) {
    node->requires_grad = true;
    for (auto& t : inputs) {
      if (t.defined()) node->parents.push_back(t.node());
    }
    node->backward = std::move(rule);
  }
  return Tensor(std::move(node));
}

// Accumulation target for a parent, or nullptr when it needs no gradient.
double* grad_of(const std::shared_ptr<Node>& n) {
  return n->requires_grad ? n->grad_buffer() : nullptr;
}

void require_matrix(OpKind kind, const Tensor& t, const char* name) {
  if (t.rank() != 2) {
    shape_fail(kind, std::string(name) + " must be 2-D, got " + shape_string(t.shape()));
  }
}

enum class Binary { add, mul };

Tensor binary(Binary which, const Tensor& a, const Tensor& b) {
  const OpKind kind = which == Binary::add ? OpKind::add : OpKind::mul;
  const bool same = a.shape() == b.shape();
  const bool a_scalar = a.size() == 1;
  const bool b_scalar = b.size() == 1;
  if (!same && !a_scalar && !b_scalar) {
    shape_fail(kind, "shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  // Output takes the non-scalar operand's shape.
  const Tensor& big = (!same && a_scalar) ? b : a;
  const std::size_t n = big.size();
  std::vector<double> out(n);
  const auto ad = a.data();
  const auto bd = b.data();
  const std::size_t as = a.size() == 1 ? 0 : 1;
  const std::size_t bs = b.size() == 1 ? 0 : 1;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = ad[i * as];
    const double y = bd[i * bs];
    out[i] = which == Binary::add ? x + y : x * y;
  }
  auto an = a.node();
  auto bn = b.node();
  return make_result(kind, big.shape(), std::move(out), {a, b},
                     [which, an, bn, as, bs, n](Node& self) {
                       double* ga = grad_of(an);
                       double* gb = grad_of(bn);
                       const double* g = self.grad.data();
                       for (std::size_t i = 0; i < n; ++i) {
                         if (which == Binary::add) {
                           if (ga) ga[i * as] += g[i];
                           if (gb) gb[i * bs] += g[i];
                         } else {
                           if (ga) ga[i * as] += g[i] * bn->data[i * bs];
                           if (gb) gb[i * bs] += g[i] * an->data[i * as];
                         }
                       }
                     });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b) {
  require_matrix(OpKind::matmul, a, "lhs");
  require_matrix(OpKind::matmul, b, "rhs");
  const std::size_t m = a.shape()[0];
  const std::size_t k = a.shape()[1];
  const std::size_t bk = transpose_b ? b.shape()[1] : b.shape()[0];
  const std::size_t n = transpose_b ? b.shape()[0] : b.shape()[1];
  if (k != bk) {
    shape_fail(OpKind::matmul, "inner extents differ: " + shape_string(a.shape()) +
                                   (transpose_b ? " x T" : " x ") + shape_string(b.shape()));
  }
  std::vector<double> out(m * n);
  const Trans tb = transpose_b ? Trans::transposed : Trans::none;
  kernels::gemm(Trans::none, tb, m, n, k, a.data(), b.data(), out, false);
  auto an = a.node();
  auto bn = b.node();
  return make_result(OpKind::matmul, {m, n}, std::move(out), {a, b},
                     [an, bn, m, n, k, transpose_b](Node& self) {
                       const std::span<const double> g(self.grad);
                       if (an->requires_grad) {
                         // dA = G * op(B)^T
                         std::span<double> ga(an->grad_buffer(), m * k);
                         kernels::gemm(Trans::none, transpose_b ? Trans::none : Trans::transposed,
                                       m, k, n, g, bn->data, ga, true);
                       }
                       if (bn->requires_grad) {
                         std::span<double> gb(bn->grad_buffer(), k * n);
                         if (transpose_b) {
                           // B is n x k: dB = G^T * A
                           kernels::gemm(Trans::transposed, Trans::none, n, k, m, g, an->data, gb, true);
                         } else {
                           kernels::gemm(Trans::transposed, Trans::none, k, n, m, an->data, g, gb, true);
                         }
                       }
                     });
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(Binary::add, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(Binary::mul, a, b); }

Tensor scale(const Tensor& x, double factor) { return mul(x, Tensor::scalar(factor)); }
Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor softmax_rows(const Tensor& x) {
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  std::vector<double> out(x.size());
  kernels::softmax_rows(rows, cols, x.data(), out);
  auto xn = x.node();
  return make_result(OpKind::softmax_rows, x.shape(), std::move(out), {x},
                     [xn, rows, cols](Node& self) {
                       double* gx = grad_of(xn);
                       const double* y = self.data.data();
                       const double* g = self.grad.data();
                       for (std::size_t r = 0; r < rows; ++r) {
                         double dot = 0.0;
                         for (std::size_t j = 0; j < cols; ++j) dot += g[r * cols + j] * y[r * cols + j];
                         for (std::size_t j = 0; j < cols; ++j) {
                           gx[r * cols + j] += y[r * cols + j] * (g[r * cols + j] - dot);
                         }
                       }
                     });
}

Tensor log(const Tensor& x) {
  std::vector<double> out(x.size());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(xd[i]);
  auto xn = x.node();
  return make_result(OpKind::log, x.shape(), std::move(out), {x}, [xn](Node& self) {
    double* gx = grad_of(xn);
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i] / xn->data[i];
  });
}

Tensor exp(const Tensor& x) {
  std::vector<double> out(x.size());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(xd[i]);
  auto xn = x.node();
  return make_result(OpKind::exp, x.shape(), std::move(out), {x}, [xn](Node& self) {
    double* gx = grad_of(xn);
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i] * self.data[i];
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  for (const Tensor* p : {&gain, &bias}) {
    if (p->defined() && p->size() != cols) {
      shape_fail(OpKind::layer_norm, "affine parameter " + shape_string(p->shape()) +
                                         " does not match row width " + std::to_string(cols));
    }
  }
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(rows);
  kernels::layer_norm_rows(rows, cols, eps, x.data(), xhat, inv_std);
  std::vector<double> out = xhat;
  if (gain.defined() || bias.defined()) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < cols; ++j) {
        double v = xhat[r * cols + j];
        if (gain.defined()) v *= gain.data()[j];
        if (bias.defined()) v += bias.data()[j];
        out[r * cols + j] = v;
      }
    }
  }
  auto xn = x.node();
  auto gn = gain.defined() ? gain.node() : nullptr;
  auto bn = bias.defined() ? bias.node() : nullptr;
  return make_result(
      OpKind::layer_norm, x.shape(), std::move(out), {x, gain, bias},
      [xn, gn, bn, rows, cols, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        const double* g = self.grad.data();
        double* gg = gn ? grad_of(gn) : nullptr;
        double* gb = bn ? grad_of(bn) : nullptr;
        double* gx = grad_of(xn);
        const double n = static_cast<double>(cols);
        std::vector<double> dxhat(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_d = 0.0;
          double mean_dx = 0.0;
          for (std::size_t j = 0; j < cols; ++j) {
            const std::size_t idx = r * cols + j;
            if (gg) gg[j] += g[idx] * xhat[idx];
            if (gb) gb[j] += g[idx];
            dxhat[j] = gn ? g[idx] * gn->data[j] : g[idx];
            mean_d += dxhat[j];
            mean_dx += dxhat[j] * xhat[idx];
          }
          if (!gx) continue;
          mean_d /= n;
          mean_dx /= n;
          for (std::size_t j = 0; j < cols; ++j) {
            const std::size_t idx = r * cols + j;
            gx[idx] += inv_std[r] * (dxhat[j] - mean_d - xhat[idx] * mean_dx);
          }
        }
      });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.size());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] > 0.0 ? xd[i] : 0.0;
  auto xn = x.node();
  return make_result(OpKind::relu, x.shape(), std::move(out), {x}, [xn](Node& self) {
    double* gx = grad_of(xn);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (xn->data[i] > 0.0) gx[i] += self.grad[i];
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.size());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    // Split by sign so exp never overflows.
    if (xd[i] >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-xd[i]));
    } else {
      const double e = std::exp(xd[i]);
      out[i] = e / (1.0 + e);
    }
  }
  auto xn = x.node();
  return make_result(OpKind::sigmoid, x.shape(), std::move(out), {x}, [xn](Node& self) {
    double* gx = grad_of(xn);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      gx[i] += self.grad[i] * self.data[i] * (1.0 - self.data[i]);
    }
  });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  require_matrix(OpKind::embedding, table, "table");
  const std::size_t vocab = table.shape()[0];
  const std::size_t d = table.shape()[1];
  if (ids.empty()) shape_fail(OpKind::embedding, "no ids");
  std::vector<double> out(ids.size() * d);
  std::vector<int> saved(ids.begin(), ids.end());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      shape_fail(OpKind::embedding, "id " + std::to_string(ids[i]) + " outside table " +
                                        shape_string(table.shape()));
    }
    const auto row = table.data().subspan(static_cast<std::size_t>(ids[i]) * d, d);
    std::copy(row.begin(), row.end(), out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  auto tn = table.node();
  return make_result(OpKind::embedding, {ids.size(), d}, std::move(out), {table},
                     [tn, d, saved = std::move(saved)](Node& self) {
                       double* gt = grad_of(tn);
                       for (std::size_t i = 0; i < saved.size(); ++i) {
                         double* row = gt + static_cast<std::size_t>(saved[i]) * d;
                         for (std::size_t j = 0; j < d; ++j) row[j] += self.grad[i * d + j];
                       }
                     });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) shape_fail(OpKind::concat_rows, "no inputs");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.cols() != cols) {
      shape_fail(OpKind::concat_rows, "part " + shape_string(p.shape()) + " does not have " +
                                          std::to_string(cols) + " columns");
    }
    rows += p.rows();
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  std::vector<std::shared_ptr<Node>> nodes;
  for (const auto& p : parts) {
    out.insert(out.end(), p.data().begin(), p.data().end());
    nodes.push_back(p.node());
  }
  return make_result(OpKind::concat_rows, {rows, cols}, std::move(out), parts,
                     [nodes](Node& self) {
                       std::size_t offset = 0;
                       for (const auto& n : nodes) {
                         const std::size_t len = n->data.size();
                         if (double* g = grad_of(n)) {
                           for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[offset + i];
                         }
                         offset += len;
                       }
                     });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require_matrix(OpKind::slice_rows, x, "input");
  const std::size_t rows = x.shape()[0];
  const std::size_t cols = x.shape()[1];
  if (begin >= end || end > rows) {
    shape_fail(OpKind::slice_rows, "range [" + std::to_string(begin) + ", " + std::to_string(end) +
                                       ") invalid for " + shape_string(x.shape()));
  }
  const auto first = x.data().begin() + static_cast<std::ptrdiff_t>(begin * cols);
  std::vector<double> out(first, first + static_cast<std::ptrdiff_t>((end - begin) * cols));
  auto xn = x.node();
  return make_result(OpKind::slice_rows, {end - begin, cols}, std::move(out), {x},
                     [xn, begin, cols](Node& self) {
                       double* gx = grad_of(xn) + begin * cols;
                       for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
                     });
}

Tensor masked_fill(const Tensor& x, std::span<const std::uint8_t> mask, double value) {
  if (mask.size() != x.size()) {
    shape_fail(OpKind::masked_fill, "mask of " + std::to_string(mask.size()) +
                                        " entries for " + shape_string(x.shape()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (mask[i]) out[i] = value;
  }
  std::vector<std::uint8_t> saved(mask.begin(), mask.end());
  auto xn = x.node();
  return make_result(OpKind::masked_fill, x.shape(), std::move(out), {x},
                     [xn, saved = std::move(saved)](Node& self) {
                       double* gx = grad_of(xn);
                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                         if (!saved[i]) gx[i] += self.grad[i];
                       }
                     });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  auto xn = x.node();
  return make_result(OpKind::sum, {1}, {total}, {x}, [xn](Node& self) {
    double* gx = grad_of(xn);
    for (std::size_t i = 0; i < xn->data.size(); ++i) gx[i] += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  const double n = static_cast<double>(x.size());
  auto xn = x.node();
  return make_result(OpKind::mean, {1}, {total / n}, {x}, [xn, n](Node& self) {
    double* gx = grad_of(xn);
    for (std::size_t i = 0; i < xn->data.size(); ++i) gx[i] += self.grad[0] / n;
  });
}

}  // namespace kid::num
