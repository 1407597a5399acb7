// Copyright 2026 The diffmm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense and CSR matrices, the row-parallel helper, and small dense kernels.
// Every kernel computes each output row independently in a fixed order, so
// results are bit-identical regardless of the worker count.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "diffmm/error.hpp"

namespace diffmm {

namespace detail {
inline std::atomic<int>& thread_count() {
  static std::atomic<int> n{1};
  return n;
}
}  // namespace detail

inline void set_num_threads(int n) { detail::thread_count() = std::max(1, n); }
inline int num_threads() { return detail::thread_count(); }

// Runs fn(begin, end) over contiguous row ranges. Ranges are disjoint, so
// callers writing only to their own rows get serial-identical output.
template <typename Fn>
void parallel_rows(std::size_t n, Fn&& fn, std::size_t min_chunk = 64) {
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(num_threads()),
                            std::max<std::size_t>(1, n / min_chunk));
  if (workers <= 1) {
    fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t b = w * chunk;
    const std::size_t e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
}

template <typename T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows_ * cols_, ErrorKind::kShape,
            "matrix data length does not match rows*cols");
  }
  Matrix(std::initializer_list<std::initializer_list<T>> init) {
    rows_ = init.size();
    cols_ = rows_ ? init.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : init) {
      require(r.size() == cols_, ErrorKind::kShape, "ragged matrix literal");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  Matrix<U> cast() const {
    Matrix<U> out(rows_, cols_);
    for (std::size_t k = 0; k < data_.size(); ++k) {
      out.data()[k] = static_cast<U>(data_[k]);
    }
    return out;
  }

  bool same_shape(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

inline std::string shape_str(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

template <typename T>
void require_same_shape(const Matrix<T>& a, const Matrix<T>& b,
                        const char* what) {
  require(a.same_shape(b), ErrorKind::kShape,
          std::string(what) + ": " + shape_str(a.rows(), a.cols()) + " vs " +
              shape_str(b.rows(), b.cols()));
}

template <typename T>
bool all_finite(const Matrix<T>& m) {
  return std::all_of(m.storage().begin(), m.storage().end(),
                     [](T v) { return std::isfinite(v); });
}

// a += s * b
template <typename T>
void axpy(T s, const Matrix<T>& b, Matrix<T>& a) {
  require_same_shape(a, b, "axpy");
  T* pa = a.data();
  const T* pb = b.data();
  for (std::size_t k = 0; k < a.size(); ++k) pa[k] += s * pb[k];
}

template <typename T>
void add_inplace(Matrix<T>& a, const Matrix<T>& b) {
  axpy(T(1), b, a);
}

template <typename T>
Matrix<T> add(Matrix<T> a, const Matrix<T>& b) {
  add_inplace(a, b);
  return a;
}

template <typename T>
Matrix<T> scaled(Matrix<T> a, T s) {
  for (auto& v : a.storage()) v *= s;
  return a;
}

template <typename T>
T dot(const Matrix<T>& a, const Matrix<T>& b) {
  require_same_shape(a, b, "dot");
  T acc = 0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a.data()[k] * b.data()[k];
  return acc;
}

template <typename T>
T squared_norm(const Matrix<T>& a) {
  return dot(a, a);
}

template <typename T>
T row_dot(std::span<const T> a, std::span<const T> b) {
  T acc = 0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  return acc;
}

// C = A * B
template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  require(a.cols() == b.rows(), ErrorKind::kShape,
          "matmul: " + shape_str(a.rows(), a.cols()) + " * " +
              shape_str(b.rows(), b.cols()));
  Matrix<T> c(a.rows(), b.cols());
  const std::size_t n = b.cols();
  parallel_rows(a.rows(), [&](std::size_t rb, std::size_t re) {
    for (std::size_t i = rb; i < re; ++i) {
      T* ci = c.data() + i * n;
      const T* ai = a.data() + i * a.cols();
      for (std::size_t k = 0; k < a.cols(); ++k) {
        const T aik = ai[k];
        if (aik == T(0)) continue;
        const T* bk = b.data() + k * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
      }
    }
  });
  return c;
}

// C = A^T * B
template <typename T>
Matrix<T> matmul_tn(const Matrix<T>& a, const Matrix<T>& b) {
  require(a.rows() == b.rows(), ErrorKind::kShape,
          "matmul_tn: " + shape_str(a.rows(), a.cols()) + "^T * " +
              shape_str(b.rows(), b.cols()));
  Matrix<T> c(a.cols(), b.cols());
  const std::size_t n = b.cols();
  parallel_rows(a.cols(), [&](std::size_t rb, std::size_t re) {
    for (std::size_t k = 0; k < a.rows(); ++k) {
      const T* ak = a.data() + k * a.cols();
      const T* bk = b.data() + k * n;
      for (std::size_t i = rb; i < re; ++i) {
        const T aki = ak[i];
        if (aki == T(0)) continue;
        T* ci = c.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += aki * bk[j];
      }
    }
  });
  return c;
}

// C = A * B^T
template <typename T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b) {
  require(a.cols() == b.cols(), ErrorKind::kShape,
          "matmul_nt: " + shape_str(a.rows(), a.cols()) + " * " +
              shape_str(b.rows(), b.cols()) + "^T");
  Matrix<T> c(a.rows(), b.rows());
  parallel_rows(a.rows(), [&](std::size_t rb, std::size_t re) {
    for (std::size_t i = rb; i < re; ++i) {
      for (std::size_t j = 0; j < b.rows(); ++j) {
        c(i, j) = row_dot(a.row(i), b.row(j));
      }
    }
  });
  return c;
}

template <typename T>
Matrix<T> transpose(const Matrix<T>& a) {
  Matrix<T> t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

template <typename T>
Matrix<T> gather_rows(const Matrix<T>& a, std::span<const std::size_t> idx) {
  Matrix<T> out(idx.size(), a.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    require(idx[r] < a.rows(), ErrorKind::kShape,
            "gather_rows: row " + std::to_string(idx[r]) + " of " + std::to_string(a.rows()));
    std::copy(a.row(idx[r]).begin(), a.row(idx[r]).end(), out.row(r).begin());
  }
  return out;
}

// dst[idx[r]] += src[r]
template <typename T>
void scatter_add_rows(const Matrix<T>& src, std::span<const std::size_t> idx,
                      Matrix<T>& dst) {
  require(src.rows() == idx.size() && src.cols() == dst.cols(), ErrorKind::kShape,
          "scatter_add_rows: source shape mismatch");
  for (std::size_t r = 0; r < idx.size(); ++r) {
    require(idx[r] < dst.rows(), ErrorKind::kShape,
            "scatter_add_rows: row " + std::to_string(idx[r]) + " of " +
                std::to_string(dst.rows()));
    auto d = dst.row(idx[r]);
    auto s = src.row(r);
    for (std::size_t c = 0; c < s.size(); ++c) d[c] += s[c];
  }
}

// Compressed sparse row storage. Column indices strictly increase per row.
template <typename T>
struct Csr {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::size_t> col_idx;
  std::vector<T> vals;

  std::size_t nnz() const noexcept { return col_idx.size(); }
  std::size_t row_nnz(std::size_t r) const {
    return row_ptr[r + 1] - row_ptr[r];
  }

  static Csr empty(std::size_t rows, std::size_t cols) {
    Csr a;
    a.rows = rows;
    a.cols = cols;
    a.row_ptr.assign(rows + 1, 0);
    return a;
  }

  // Triplets may arrive in any order; duplicates are rejected.
  static Csr from_triplets(
      std::size_t rows, std::size_t cols,
      std::vector<std::tuple<std::size_t, std::size_t, T>> trip) {
    std::sort(trip.begin(), trip.end(), [](const auto& a, const auto& b) {
      return std::get<0>(a) != std::get<0>(b) ? std::get<0>(a) < std::get<0>(b)
                                              : std::get<1>(a) < std::get<1>(b);
    });
    Csr m = empty(rows, cols);
    m.col_idx.reserve(trip.size());
    m.vals.reserve(trip.size());
    for (std::size_t k = 0; k < trip.size(); ++k) {
      const auto [r, c, v] = trip[k];
      require(r < rows && c < cols, ErrorKind::kShape,
              "triplet out of range");
      if (k > 0) {
        require(!(std::get<0>(trip[k - 1]) == r && std::get<1>(trip[k - 1]) == c),
                ErrorKind::kShape, "duplicate triplet");
      }
      ++m.row_ptr[r + 1];
      m.col_idx.push_back(c);
      m.vals.push_back(v);
    }
    for (std::size_t r = 0; r < rows; ++r) m.row_ptr[r + 1] += m.row_ptr[r];
    return m;
  }

  Csr transposed() const {
    Csr t = empty(cols, rows);
    t.col_idx.resize(nnz());
    t.vals.resize(nnz());
    for (std::size_t c : col_idx) ++t.row_ptr[c + 1];
    for (std::size_t r = 0; r < cols; ++r) t.row_ptr[r + 1] += t.row_ptr[r];
    std::vector<std::size_t> next(t.row_ptr.begin(), t.row_ptr.end() - 1);
    // Walking source rows in order keeps each transposed row sorted.
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
        const std::size_t dst = next[col_idx[k]]++;
        t.col_idx[dst] = r;
        t.vals[dst] = vals[k];
      }
    }
    return t;
  }

  Matrix<T> to_dense() const {
    Matrix<T> d(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
        d(r, col_idx[k]) = vals[k];
    return d;
  }

  template <typename U>
  Csr<U> cast() const {
    Csr<U> o;
    o.rows = rows;
    o.cols = cols;
    o.row_ptr = row_ptr;
    o.col_idx = col_idx;
    o.vals.assign(vals.begin(), vals.end());
    return o;
  }
};

// result[r] = sum_j A[r, j] * X[j]
template <typename T>
Matrix<T> spmm(const Csr<T>& a, const Matrix<T>& x) {
  require(a.cols == x.rows(), ErrorKind::kShape,
          "spmm: sparse " + shape_str(a.rows, a.cols) + " * dense " +
              shape_str(x.rows(), x.cols()));
  Matrix<T> out(a.rows, x.cols());
  const std::size_t d = x.cols();
  parallel_rows(a.rows, [&](std::size_t rb, std::size_t re) {
    for (std::size_t r = rb; r < re; ++r) {
      T* o = out.data() + r * d;
      for (std::size_t k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k) {
        const T w = a.vals[k];
        const T* xr = x.data() + a.col_idx[k] * d;
        for (std::size_t c = 0; c < d; ++c) o[c] += w * xr[c];
      }
    }
  });
  return out;
}

// Each row divided by max(||row||, eps).
template <typename T>
Matrix<T> row_l2_normalize(const Matrix<T>& x, T eps) {
  Matrix<T> out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const T n = std::max(std::sqrt(row_dot(x.row(r), x.row(r))), eps);
    auto o = out.row(r);
    auto xr = x.row(r);
    for (std::size_t c = 0; c < xr.size(); ++c) o[c] = xr[c] / n;
  }
  return out;
}

// Vector-Jacobian product of row_l2_normalize at x.
template <typename T>
Matrix<T> row_l2_normalize_backward(const Matrix<T>& x, const Matrix<T>& grad_out,
                                    T eps) {
  require_same_shape(x, grad_out, "row_l2_normalize_backward");
  Matrix<T> gx(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    auto gr = grad_out.row(r);
    auto out = gx.row(r);
    const T n = std::sqrt(row_dot(xr, xr));
    if (n > eps) {
      const T proj = row_dot(xr, gr) / (n * n);
      for (std::size_t c = 0; c < xr.size(); ++c)
        out[c] = (gr[c] - xr[c] * proj) / n;
    } else {
      for (std::size_t c = 0; c < xr.size(); ++c) out[c] = gr[c] / eps;
    }
  }
  return gx;
}

}  // namespace diffmm
