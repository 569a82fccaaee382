#include "flagcns/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "flagcns/common.hpp"

namespace flagcns {

namespace {
int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw DimensionError("negative tensor dimension");
    n *= d;
  }
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<int64_t> shape)
    : shape_(std::move(shape)), values_(static_cast<size_t>(shape_numel(shape_)), 0.0) {}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<double> values) : shape_(std::move(shape)) {
  if (shape_numel(shape_) != static_cast<int64_t>(values.size()))
    throw DimensionError("tensor value count does not match shape");
  values_ = std::move(values);
}

Tensor Tensor::full(std::vector<int64_t> shape, double v) {
  Tensor t(std::move(shape));
  std::fill(t.values_.begin(), t.values_.end(), v);
  return t;
}

Tensor Tensor::row_major(int64_t rows, int64_t cols, std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

int64_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("rows() on non rank-2 tensor");
  return shape_[0];
}

int64_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("cols() on non rank-2 tensor");
  return shape_[1];
}

bool Tensor::all_finite() const {
  for (double v : values_)
    if (!std::isfinite(v)) return false;
  return true;
}

void SparseMatrix::validate() const {
  if (rows < 0 || cols < 0) throw DimensionError("negative sparse dimension");
  if (static_cast<int64_t>(row_ptr.size()) != rows + 1)
    throw DimensionError("sparse row_ptr size mismatch");
  if (col_idx.size() != values.size()) throw DimensionError("sparse col/value size mismatch");
  if (row_ptr.front() != 0 || row_ptr.back() != nnz())
    throw DimensionError("sparse row_ptr endpoints invalid");
  for (int64_t r = 0; r < rows; ++r) {
    if (row_ptr[r] > row_ptr[r + 1]) throw DimensionError("sparse row_ptr not monotone");
    for (int64_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
      if (col_idx[k] < 0 || col_idx[k] >= cols) throw DimensionError("sparse column out of range");
      if (k > row_ptr[r] && col_idx[k] <= col_idx[k - 1])
        throw DimensionError("sparse columns not strictly increasing within row");
    }
  }
}

Tensor SparseMatrix::to_dense() const {
  Tensor d({rows, cols});
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) d.at(r, col_idx[k]) += values[k];
  return d;
}

SparseMatrix SparseMatrix::identity(int64_t n) {
  SparseMatrix s;
  s.rows = s.cols = n;
  s.row_ptr.resize(n + 1);
  s.col_idx.resize(n);
  s.values.assign(n, 1.0);
  for (int64_t i = 0; i < n; ++i) {
    s.row_ptr[i] = i;
    s.col_idx[i] = i;
  }
  s.row_ptr[n] = n;
  return s;
}

SparseMatrix SparseMatrix::from_triplets(
    int64_t rows, int64_t cols, std::vector<std::tuple<int64_t, int64_t, double>> triplets) {
  for (auto& [r, c, v] : triplets) {
    if (r < 0 || r >= rows || c < 0 || c >= cols)
      throw DimensionError("triplet index out of range");
  }
  std::sort(triplets.begin(), triplets.end(), [](const auto& a, const auto& b) {
    return std::tie(std::get<0>(a), std::get<1>(a)) < std::tie(std::get<0>(b), std::get<1>(b));
  });
  SparseMatrix s;
  s.rows = rows;
  s.cols = cols;
  s.row_ptr.assign(rows + 1, 0);
  int64_t last_r = -1, last_c = -1;
  for (auto& [r, c, v] : triplets) {
    if (r == last_r && c == last_c) {
      s.values.back() += v;  // duplicate entry
      continue;
    }
    s.col_idx.push_back(c);
    s.values.push_back(v);
    s.row_ptr[r + 1]++;
    last_r = r;
    last_c = c;
  }
  for (int64_t r = 0; r < rows; ++r) s.row_ptr[r + 1] += s.row_ptr[r];
  s.validate();
  return s;
}

}  // namespace flagcns
