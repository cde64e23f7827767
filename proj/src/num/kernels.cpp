// SPDX-License-Identifier: Apache-2.0
#include "kid/num/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <omp.h>

namespace kid::num::kernels {

namespace {

// Below this many multiply-adds the fork/join costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 15;

inline double at(std::span<const double> x, Trans t, std::size_t rows, std::size_t cols,
                 std::size_t r, std::size_t c) {
  // Logical (r, c) of op(x) where op(x) is rows x cols.
  return t == Trans::none ? x[r * cols + c] : x[c * rows + r];
}

}  // namespace

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, std::span<const double> b, std::span<double> c,
          bool accumulate) {
  // Bring op(b) into row-major k x n so the inner loop streams contiguously.
  std::vector<double> b_rows;
  const double* bp = b.data();
  if (tb == Trans::transposed) {
    b_rows.resize(k * n);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) b_rows[p * n + j] = b[j * k + p];
    bp = b_rows.data();
  }
  const double* ap = a.data();
  double* cp = c.data();
  const bool parallel = m * n * k >= kParallelWork && m > 1;

  // Four rows of c per step share each load of a b row. Every element still
  // sums over p in increasing order, as the serial kernel does.
  constexpr std::size_t kRows = 4;
  const std::ptrdiff_t blocks = static_cast<std::ptrdiff_t>((m + kRows - 1) / kRows);

#pragma omp parallel if (parallel)
  {
    std::vector<double> acc(kRows * n);
#pragma omp for schedule(static)
    for (std::ptrdiff_t bi = 0; bi < blocks; ++bi) {
      const std::size_t i0 = static_cast<std::size_t>(bi) * kRows;
      const std::size_t rows = std::min(kRows, m - i0);
      std::fill(acc.begin(), acc.end(), 0.0);
      double* a0 = acc.data();
      double* a1 = a0 + n;
      double* a2 = a1 + n;
      double* a3 = a2 + n;
      auto av = [&](std::size_t i, std::size_t p) { return ta == Trans::none ? ap[i * k + p] : ap[p * m + i]; };
      if (rows == kRows) {
        for (std::size_t p = 0; p < k; ++p) {
          const double v0 = av(i0, p), v1 = av(i0 + 1, p), v2 = av(i0 + 2, p), v3 = av(i0 + 3, p);
          const double* brow = bp + p * n;
          for (std::size_t j = 0; j < n; ++j) {
            const double bv = brow[j];
            a0[j] += v0 * bv;
            a1[j] += v1 * bv;
            a2[j] += v2 * bv;
            a3[j] += v3 * bv;
          }
        }
      } else {
        for (std::size_t r = 0; r < rows; ++r) {
          double* ar = acc.data() + r * n;
          for (std::size_t p = 0; p < k; ++p) {
            const double v = av(i0 + r, p);
            const double* brow = bp + p * n;
            for (std::size_t j = 0; j < n; ++j) ar[j] += v * brow[j];
          }
        }
      }
      for (std::size_t r = 0; r < rows; ++r) {
        double* crow = cp + (i0 + r) * n;
        const double* ar = acc.data() + r * n;
        if (accumulate) {
          for (std::size_t j = 0; j < n; ++j) crow[j] += ar[j];
        } else {
          for (std::size_t j = 0; j < n; ++j) crow[j] = ar[j];
        }
      }
    }
  }
}

void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> in,
                  std::span<double> out) {
  const auto ri = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelWork)
  for (std::ptrdiff_t rr = 0; rr < ri; ++rr) {
    const auto r = static_cast<std::size_t>(rr);
    const double* x = in.data() + r * cols;
    double* y = out.data() + r * cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cols; ++j) mx = std::max(mx, x[j]);
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      y[j] = std::exp(x[j] - mx);
      total += y[j];
    }
    for (std::size_t j = 0; j < cols; ++j) y[j] /= total;
  }
}

void layer_norm_rows(std::size_t rows, std::size_t cols, double eps,
                     std::span<const double> in, std::span<double> normalized,
                     std::span<double> inv_std) {
  const auto ri = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelWork)
  for (std::ptrdiff_t rr = 0; rr < ri; ++rr) {
    const auto r = static_cast<std::size_t>(rr);
    const double* x = in.data() + r * cols;
    double* y = normalized.data() + r * cols;
    double mu = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mu += x[j];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<double>(cols);
    const double rs = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < cols; ++j) y[j] = (x[j] - mu) * rs;
    inv_std[r] = rs;
  }
}

namespace serial {

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, std::span<const double> b, std::span<double> c,
          bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += at(a, ta, m, k, i, p) * at(b, tb, k, n, p, j);
      c[i * n + j] = accumulate ? c[i * n + j] + acc : acc;
    }
  }
}

void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> in,
                  std::span<double> out) {
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cols; ++j) mx = std::max(mx, in[r * cols + j]);
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      out[r * cols + j] = std::exp(in[r * cols + j] - mx);
      total += out[r * cols + j];
    }
    for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] /= total;
  }
}

void layer_norm_rows(std::size_t rows, std::size_t cols, double eps,
                     std::span<const double> in, std::span<double> normalized,
                     std::span<double> inv_std) {
  const double n = static_cast<double>(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mu += in[r * cols + j];
    mu /= n;
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double d = in[r * cols + j] - mu;
      var += d * d;
    }
    var /= n;
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < cols; ++j) normalized[r * cols + j] = (in[r * cols + j] - mu) * inv_std[r];
  }
}

}  // namespace serial

}  // namespace kid::num::kernels
