// SPDX-License-Identifier: Apache-2.0
#include "thermotwin/kernels.hpp"

#include <omp.h>

#include <algorithm>

namespace thermotwin::kernels {

namespace {

constexpr std::size_t kMR = 6;
constexpr std::size_t kKC = 256;
constexpr std::size_t kMC = 96;

template <class T>
constexpr std::size_t kNR = 128 / sizeof(T);  // two 512-bit registers per row

// 512-bit lane group; GCC/Clang lower arithmetic on it to packed FMAs.
template <class T>
using Lane [[gnu::vector_size(64)]] = T;

template <class T>
inline Lane<T> load_lane(const T *p) {
  Lane<T> v;
  __builtin_memcpy(&v, p, sizeof(v));
  return v;
}

template <class T>
inline void store_lane(T *p, Lane<T> v) {
  __builtin_memcpy(p, &v, sizeof(v));
}

// Register tile: Rows x kNR block of c accumulated over kc steps, held in
// 2 * Rows vector registers.
template <class T, std::size_t Rows>
inline void tile_full(std::size_t kc, const T *__restrict a, std::size_t lda,
                      const T *__restrict b, std::size_t ldb, T *__restrict c, std::size_t ldc,
                      bool load_c) {
  constexpr std::size_t W = 64 / sizeof(T);
  Lane<T> lo[Rows];
  Lane<T> hi[Rows];
  for (std::size_t r = 0; r < Rows; ++r) {
    if (load_c) {
      lo[r] = load_lane<T>(c + r * ldc);
      hi[r] = load_lane<T>(c + r * ldc + W);
    } else {
      lo[r] = Lane<T>{};
      hi[r] = Lane<T>{};
    }
  }
  for (std::size_t k = 0; k < kc; ++k) {
    const Lane<T> b0 = load_lane<T>(b + k * ldb);
    const Lane<T> b1 = load_lane<T>(b + k * ldb + W);
    for (std::size_t r = 0; r < Rows; ++r) {
      const T av = a[r * lda + k];
      lo[r] += av * b0;
      hi[r] += av * b1;
    }
  }
  for (std::size_t r = 0; r < Rows; ++r) {
    store_lane<T>(c + r * ldc, lo[r]);
    store_lane<T>(c + r * ldc + W, hi[r]);
  }
}

template <class T>
void tile_edge(std::size_t rows, std::size_t cols, std::size_t kc, const T *a, std::size_t lda,
               const T *b, std::size_t ldb, T *c, std::size_t ldc, bool load_c) {
  constexpr std::size_t NR = kNR<T>;
  T acc[kMR][NR];
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < cols; ++j) acc[r][j] = load_c ? c[r * ldc + j] : T{};
  for (std::size_t k = 0; k < kc; ++k) {
    const T *brow = b + k * ldb;
    for (std::size_t r = 0; r < rows; ++r) {
      const T av = a[r * lda + k];
      for (std::size_t j = 0; j < cols; ++j) acc[r][j] += av * brow[j];
    }
  }
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < cols; ++j) c[r * ldc + j] = acc[r][j];
}

template <class T>
inline void tile(std::size_t rows, std::size_t cols, std::size_t kc, const T *a, std::size_t lda,
                 const T *b, std::size_t ldb, T *c, std::size_t ldc, bool load_c) {
  if (cols == kNR<T>) {
    switch (rows) {
      case 6: return tile_full<T, 6>(kc, a, lda, b, ldb, c, ldc, load_c);
      case 5: return tile_full<T, 5>(kc, a, lda, b, ldb, c, ldc, load_c);
      case 4: return tile_full<T, 4>(kc, a, lda, b, ldb, c, ldc, load_c);
      case 3: return tile_full<T, 3>(kc, a, lda, b, ldb, c, ldc, load_c);
      case 2: return tile_full<T, 2>(kc, a, lda, b, ldb, c, ldc, load_c);
      case 1: return tile_full<T, 1>(kc, a, lda, b, ldb, c, ldc, load_c);
      default: break;
    }
  }
  tile_edge(rows, cols, kc, a, lda, b, ldb, c, ldc, load_c);
}

}  // namespace

template <class T>
void gemm(MatrixView<const T> a, MatrixView<const T> b, MatrixView<T> c, bool accumulate) {
  const std::size_t m = c.rows;
  const std::size_t n = c.cols;
  const std::size_t k = a.cols;
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate)
      for (std::size_t i = 0; i < m; ++i) std::fill_n(c.data + i * c.stride, n, T{});
    return;
  }
  constexpr std::size_t NR = kNR<T>;
  const std::size_t row_blocks = (m + kMC - 1) / kMC;

  for (std::size_t k0 = 0; k0 < k; k0 += kKC) {
    const std::size_t kc = std::min(kKC, k - k0);
    const bool load_c = accumulate || k0 > 0;
#pragma omp parallel for schedule(static) if (row_blocks > 1)
    for (std::size_t mb = 0; mb < row_blocks; ++mb) {
      const std::size_t i_begin = mb * kMC;
      const std::size_t i_end = std::min(m, i_begin + kMC);
      for (std::size_t j0 = 0; j0 < n; j0 += NR) {
        const std::size_t nr = std::min(NR, n - j0);
        for (std::size_t i0 = i_begin; i0 < i_end; i0 += kMR) {
          const std::size_t mr = std::min(kMR, i_end - i0);
          tile(mr, nr, kc, a.data + i0 * a.stride + k0, a.stride, b.data + k0 * b.stride + j0,
               b.stride, c.data + i0 * c.stride + j0, c.stride, load_c);
        }
      }
    }
  }
}

template <class T>
void transpose(MatrixView<const T> in, MatrixView<T> out) {
  constexpr std::size_t kBlock = 32;
  for (std::size_t i0 = 0; i0 < in.rows; i0 += kBlock)
    for (std::size_t j0 = 0; j0 < in.cols; j0 += kBlock) {
      const std::size_t i1 = std::min(in.rows, i0 + kBlock);
      const std::size_t j1 = std::min(in.cols, j0 + kBlock);
      for (std::size_t i = i0; i < i1; ++i)
        for (std::size_t j = j0; j < j1; ++j) out(j, i) = in(i, j);
    }
}

template <class T>
void column_sums(MatrixView<const T> in, T *out, bool accumulate) {
  if (!accumulate) std::fill_n(out, in.cols, T{});
  for (std::size_t i = 0; i < in.rows; ++i) {
    const T *row = in.data + i * in.stride;
    for (std::size_t j = 0; j < in.cols; ++j) out[j] += row[j];
  }
}

namespace reference {

template <class T>
void gemm(MatrixView<const T> a, MatrixView<const T> b, MatrixView<T> c, bool accumulate) {
  for (std::size_t i = 0; i < c.rows; ++i)
    for (std::size_t j = 0; j < c.cols; ++j) {
      T sum = accumulate ? c(i, j) : T{};
      for (std::size_t p = 0; p < a.cols; ++p) sum += a(i, p) * b(p, j);
      c(i, j) = sum;
    }
}

template void gemm<float>(MatrixView<const float>, MatrixView<const float>, MatrixView<float>,
                          bool);
template void gemm<double>(MatrixView<const double>, MatrixView<const double>,
                           MatrixView<double>, bool);

}  // namespace reference

int max_threads() { return omp_get_max_threads(); }

template void gemm<float>(MatrixView<const float>, MatrixView<const float>, MatrixView<float>,
                          bool);
template void gemm<double>(MatrixView<const double>, MatrixView<const double>,
                           MatrixView<double>, bool);
template void transpose<float>(MatrixView<const float>, MatrixView<float>);
template void transpose<double>(MatrixView<const double>, MatrixView<double>);
template void column_sums<float>(MatrixView<const float>, float *, bool);
template void column_sums<double>(MatrixView<const double>, double *, bool);

}  // namespace thermotwin::kernels
