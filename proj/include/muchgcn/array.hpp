#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace muchgcn {

/// Dense row-major array of 64-bit reals. Rank 1-3; rank 2 is the common case.
struct Array {
  std::vector<int> shape;
  std::vector<double> data;

  Array() = default;
  explicit Array(std::vector<int> s) : shape(std::move(s)), data(checked_numel(shape), 0.0) {}
  Array(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (checked_numel(shape) != static_cast<long>(data.size()))
      throw std::invalid_argument("Array: shape/data size mismatch");
  }

  static long checked_numel(const std::vector<int>& s) {
    long n = 1;
    for (int dim : s) {
      if (dim <= 0) throw std::invalid_argument("Array: nonpositive dimension");
      n *= dim;
    }
    return n;
  }

  long numel() const { return static_cast<long>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int rows() const { return shape.at(0); }
  int cols() const { return rank() == 1 ? 1 : shape.at(1); }

  double& at(int i, int j) { return data[static_cast<size_t>(i) * shape[1] + j]; }
  double at(int i, int j) const { return data[static_cast<size_t>(i) * shape[1] + j]; }
  double& operator[](size_t i) { return data[i]; }
  double operator[](size_t i) const { return data[i]; }

  bool same_shape(const Array& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) s += (i ? "x" : "") + std::to_string(shape[i]);
    return s + "]";
  }
};

inline Array full(std::vector<int> shape, double v) {
  Array a(std::move(shape));
  for (double& x : a.data) x = v;
  return a;
}

inline Array identity(int n) {
  Array a({n, n});
  for (int i = 0; i < n; ++i) a.at(i, i) = 1.0;
  return a;
}

/// Build a rank-2 array from row literals; handy in tests and fixtures.
inline Array from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  int r = static_cast<int>(rows.size());
  int c = r > 0 ? static_cast<int>(rows.begin()->size()) : 0;
  Array a({r, c});
  int i = 0;
  for (const auto& row : rows) {
    if (static_cast<int>(row.size()) != c) throw std::invalid_argument("from_rows: ragged rows");
    int j = 0;
    for (double v : row) a.at(i, j++) = v;
    ++i;
  }
  return a;
}

inline Array from_vec(std::initializer_list<double> vals) {
  Array a({static_cast<int>(vals.size())});
  int i = 0;
  for (double v : vals) a.data[i++] = v;
  return a;
}

}  // namespace muchgcn
