#pragma once

#include <cassert>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace stylecast {

// Row-major 2D float tensor. Vectors are 1xN or Nx1; scalars 1x1.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0f) {}
  Tensor(int r, int c, std::vector<float> values) : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != static_cast<size_t>(r) * c) {
      throw std::invalid_argument("Tensor: value count does not match shape");
    }
  }

  static Tensor zeros(int r, int c) { return Tensor(r, c); }
  static Tensor full(int r, int c, float v) {
    Tensor t(r, c);
    for (auto& x : t.data) x = v;
    return t;
  }
  static Tensor row_vector(std::vector<float> v) {
    const int n = static_cast<int>(v.size());
    return Tensor(1, n, std::move(v));
  }

  float& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  float at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

  const float* row_ptr(int r) const { return data.data() + static_cast<size_t>(r) * cols; }
  float* row_ptr(int r) { return data.data() + static_cast<size_t>(r) * cols; }

  size_t size() const { return data.size(); }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  void fill(float v) {
    for (auto& x : data) x = v;
  }

  std::string shape_str() const {
    return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
  }
};

inline bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.rows == b.rows && a.cols == b.cols && a.data == b.data;
}

inline float max_abs_diff(const Tensor& a, const Tensor& b) {
  assert(a.same_shape(b));
  float m = 0.0f;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const float d = std::abs(a.data[i] - b.data[i]);
    if (d > m) m = d;
  }
  return m;
}

}  // namespace stylecast
