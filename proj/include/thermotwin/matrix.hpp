// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace thermotwin {

/// Non-owning row-major view with an explicit row stride.
template <class T>
struct MatrixView {
  T *data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t stride = 0;

  T &operator()(std::size_t r, std::size_t c) const { return data[r * stride + c]; }
  std::span<T> row(std::size_t r) const { return {data + r * stride, cols}; }

  MatrixView block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const {
    assert(r0 + nr <= rows && c0 + nc <= cols);
    return {data + r0 * stride + c0, nr, nc, stride};
  }

  operator MatrixView<const T>() const { return {data, rows, cols, stride}; }
};

/// Owning dense row-major matrix.
template <class T>
class BasicMatrix {
 public:
  BasicMatrix() = default;
  BasicMatrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T &operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T &operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<T> flat() { return data_; }
  std::span<const T> flat() const { return data_; }
  T *data() { return data_.data(); }
  const T *data() const { return data_.data(); }

  MatrixView<T> view() { return {data_.data(), rows_, cols_, cols_}; }
  MatrixView<const T> view() const { return {data_.data(), rows_, cols_, cols_}; }

  void resize(std::size_t rows, std::size_t cols) {
    rows_ = rows;
    cols_ = cols;
    data_.assign(rows * cols, T{});
  }
  void fill(T v) { data_.assign(data_.size(), v); }

  bool operator==(const BasicMatrix &) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Matrix = BasicMatrix<double>;

}  // namespace thermotwin
