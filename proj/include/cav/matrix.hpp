#pragma once
#include <cassert>
#include <cstddef>
#include <initializer_list>
#include <vector>

namespace cav::num {

// Row-major dense matrix of doubles. Small networks only; no views.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(std::size_t(r) * std::size_t(c), 0.0) {}

  static Matrix zeros(int r, int c) { return Matrix(r, c); }

  static Matrix row_vec(std::initializer_list<double> xs) {
    Matrix m(1, int(xs.size()));
    int j = 0;
    for (double x : xs) m.data[j++] = x;
    return m;
  }

  static Matrix col_vec(std::initializer_list<double> xs) {
    Matrix m(int(xs.size()), 1);
    int i = 0;
    for (double x : xs) m.data[i++] = x;
    return m;
  }

  static Matrix from(std::initializer_list<std::initializer_list<double>> rows_in) {
    int r = int(rows_in.size());
    int c = r ? int(rows_in.begin()->size()) : 0;
    Matrix m(r, c);
    int i = 0;
    for (const auto& row : rows_in) {
      assert(int(row.size()) == c);
      int j = 0;
      for (double x : row) m(i, j++) = x;
      ++i;
    }
    return m;
  }

  double& operator()(int i, int j) { return data[std::size_t(i) * cols + j]; }
  double operator()(int i, int j) const { return data[std::size_t(i) * cols + j]; }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  void fill(double v) {
    for (auto& x : data) x = v;
  }
};

}  // namespace cav::num
