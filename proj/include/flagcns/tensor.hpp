#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace flagcns {

// Dense row-major tensor of 64-bit floats. Rank 1 and 2 cover everything the
// engine needs; shape is kept general for error messages.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape);
  Tensor(std::vector<int64_t> shape, std::vector<double> values);

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int64_t> shape, double v);
  static Tensor row_major(int64_t rows, int64_t cols, std::initializer_list<double> values);

  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t rows() const;
  int64_t cols() const;
  int64_t numel() const { return static_cast<int64_t>(values_.size()); }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  double& at(int64_t i) { return values_[static_cast<size_t>(i)]; }
  double at(int64_t i) const { return values_[static_cast<size_t>(i)]; }
  double& at(int64_t r, int64_t c) { return values_[static_cast<size_t>(r * cols() + c)]; }
  double at(int64_t r, int64_t c) const { return values_[static_cast<size_t>(r * cols() + c)]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  bool operator==(const Tensor& o) const = default;

 private:
  std::vector<int64_t> shape_;
  std::vector<double> values_;
};

// Compressed sparse row matrix. Used for adjacency operators; values are
// constants of the computation (never differentiated through).
struct SparseMatrix {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<int64_t> row_ptr;  // size rows + 1
  std::vector<int64_t> col_idx;
  std::vector<double> values;

  int64_t nnz() const { return static_cast<int64_t>(col_idx.size()); }
  void validate() const;  // throws DimensionError on a broken invariant
  Tensor to_dense() const;

  static SparseMatrix identity(int64_t n);
  // Builds CSR from (row, col, value) triplets; duplicates are summed.
  static SparseMatrix from_triplets(int64_t rows, int64_t cols,
                                    std::vector<std::tuple<int64_t, int64_t, double>> triplets);

  bool operator==(const SparseMatrix& o) const = default;
};

}  // namespace flagcns
