#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dm/common.hpp"

namespace dm {

// Dense row-major matrix of doubles. Rank-1 data is carried as a 1 x n row.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int64_t rows, int64_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(check_size(rows, cols), fill) {}
  Tensor(int64_t rows, int64_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), data_(std::move(values)) {
    DM_REQUIRE(static_cast<int64_t>(data_.size()) == rows_ * cols_, InvalidArgument,
               "tensor data size " << data_.size() << " does not match shape "
                                   << rows_ << "x" << cols_);
  }

  static Tensor row(std::vector<double> values) {
    int64_t n = static_cast<int64_t>(values.size());
    return Tensor(1, n, std::move(values));
  }

  int64_t rows() const { return rows_; }
  int64_t cols() const { return cols_; }
  int64_t size() const { return rows_ * cols_; }
  std::vector<int64_t> shape() const { return {rows_, cols_}; }
  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  double& at(int64_t r, int64_t c) { return data_[r * cols_ + c]; }
  double at(int64_t r, int64_t c) const { return data_[r * cols_ + c]; }
  double& operator[](int64_t i) { return data_[i]; }
  double operator[](int64_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  const std::vector<double>& values() const { return data_; }

  bool all_finite() const;
  // Throws Status::Numeric naming `what` if any entry is NaN or infinite.
  void require_finite(const std::string& what) const;

  double l2_norm_row(int64_t r) const;
  double max_abs() const;

 private:
  static int64_t check_size(int64_t rows, int64_t cols) {
    DM_REQUIRE(rows >= 0 && cols >= 0, InvalidArgument,
               "tensor shape must be non-negative, got " << rows << "x" << cols);
    return rows * cols;
  }

  int64_t rows_ = 0;
  int64_t cols_ = 0;
  std::vector<double> data_;
};

// Named parameter collection; iteration order is insertion order, which fixes
// both optimizer update order and checkpoint layout.
class ParamStore {
 public:
  int64_t add(const std::string& name, Tensor value);
  bool has(const std::string& name) const;
  int64_t index_of(const std::string& name) const;  // throws if absent
  Tensor& value(int64_t index) { return entries_[index].value; }
  const Tensor& value(int64_t index) const { return entries_[index].value; }
  Tensor& value(const std::string& name) { return entries_[index_of(name)].value; }
  const Tensor& value(const std::string& name) const { return entries_[index_of(name)].value; }
  const std::string& name(int64_t index) const { return entries_[index].name; }
  int64_t count() const { return static_cast<int64_t>(entries_.size()); }

 private:
  struct Entry {
    std::string name;
    Tensor value;
  };
  std::vector<Entry> entries_;
};

// Binary checkpoint with magic "DMCK", format version 1, little-endian:
// per parameter a length-prefixed UTF-8 name, a rank byte, 32-bit dims, then
// float64 values in row-major order. Parameters are read until end of file.
void save_checkpoint(const std::string& path, const ParamStore& params);
ParamStore load_checkpoint(const std::string& path);

std::vector<uint8_t> serialize_params(const ParamStore& params);
ParamStore deserialize_params(const std::vector<uint8_t>& bytes);

}  // namespace dm
