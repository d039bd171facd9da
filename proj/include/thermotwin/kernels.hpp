// SPDX-License-Identifier: Apache-2.0
//
// Dense kernels behind the recurrent network. `gemm` is cache-blocked,
// register-tiled and parallel over row panels with OpenMP; each output
// element is produced by exactly one thread in a fixed summation order, so
// results do not depend on the thread count. `reference::gemm` is the plain
// triple loop kept for tests and benchmarks.
#pragma once

#include <cstddef>

#include "thermotwin/matrix.hpp"

namespace thermotwin::kernels {

/// c = a * b            (accumulate == false)
/// c = c + a * b        (accumulate == true)
template <class T>
void gemm(MatrixView<const T> a, MatrixView<const T> b, MatrixView<T> c, bool accumulate);

/// out = transpose(in)
template <class T>
void transpose(MatrixView<const T> in, MatrixView<T> out);

/// out[j] (+)= sum_i in(i, j)
template <class T>
void column_sums(MatrixView<const T> in, T *out, bool accumulate);

namespace reference {

template <class T>
void gemm(MatrixView<const T> a, MatrixView<const T> b, MatrixView<T> c, bool accumulate);

}  // namespace reference

/// Maximum number of OpenMP threads the kernels will use.
int max_threads();

}  // namespace thermotwin::kernels
