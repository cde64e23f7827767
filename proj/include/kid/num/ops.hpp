// SPDX-License-Identifier: Apache-2.0
//
// The closed set of differentiable ops. Elementwise binary ops accept
// either identical shapes or one operand with a single element; nothing
// else broadcasts.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "kid/num/tensor.hpp"

namespace kid::num {

inline constexpr double kLayerNormEps = 1e-5;

// a: m x k, b: k x n (or n x k when transpose_b).
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b = false);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor softmax_rows(const Tensor& x);
Tensor log(const Tensor& x);
Tensor exp(const Tensor& x);
// Per-row normalization. gain/bias are optional 1 x cols affine params.
Tensor layer_norm(const Tensor& x, const Tensor& gain = {}, const Tensor& bias = {},
                  double eps = kLayerNormEps);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
// table: vocab x d. Returns ids.size() x d.
Tensor embedding(const Tensor& table, std::span<const int> ids);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
// Elements where mask != 0 are replaced by `value` (no gradient flows there).
Tensor masked_fill(const Tensor& x, std::span<const std::uint8_t> mask, double value);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Shorthands built from the ops above.
Tensor scale(const Tensor& x, double factor);
Tensor sub(const Tensor& a, const Tensor& b);

}  // namespace kid::num
