// SPDX-License-Identifier: Apache-2.0
//
// Inner loops behind the tensor ops. The default namespace holds the
// OpenMP-parallel versions; `serial` holds the plain reference loops the
// tests compare them against. Each output element is produced by exactly
// one thread with a fixed summation order, so results do not depend on the
// thread count.

#pragma once

#include <cstddef>
#include <span>

namespace kid::num::kernels {

enum class Trans { none, transposed };

// c = op(a) * op(b) (+ c when accumulate). op(a) is m x k, op(b) is k x n.
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, std::span<const double> b, std::span<double> c,
          bool accumulate);

void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> in,
                  std::span<double> out);

// Writes normalized rows and the per-row inverse standard deviation.
void layer_norm_rows(std::size_t rows, std::size_t cols, double eps,
                     std::span<const double> in, std::span<double> normalized,
                     std::span<double> inv_std);

namespace serial {
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, std::span<const double> b, std::span<double> c,
          bool accumulate);
void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> in,
                  std::span<double> out);
void layer_norm_rows(std::size_t rows, std::size_t cols, double eps,
                     std::span<const double> in, std::span<double> normalized,
                     std::span<double> inv_std);
}  // namespace serial

}  // namespace kid::num::kernels
