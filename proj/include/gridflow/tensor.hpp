#pragma once

#include <cassert>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace gridflow {

// Dense row-major 64-bit float tensor. Rank 1 and 2 are all the models need.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::initializer_list<int> s) : shape(s) {
    data.assign(static_cast<std::size_t>(count(shape)), 0.0);
  }
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<std::size_t>(count(shape)), 0.0);
  }

  static long count(const std::vector<int>& s) {
    long n = 1;
    for (int d : s) n *= d;
    return n;
  }
  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor scalar(double v) {
    Tensor t{1};
    t.data[0] = v;
    return t;
  }

  long size() const { return static_cast<long>(data.size()); }
  int rows() const { return shape.empty() ? 1 : shape[0]; }
  int cols() const {
    return shape.size() < 2 ? (shape.empty() ? 1 : 1) : shape[1];
  }
  double& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols() + j]; }
  double at(int i, int j) const {
    return data[static_cast<std::size_t>(i) * cols() + j];
  }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i)
      s += (i ? "," : "") + std::to_string(shape[i]);
    return s + "]";
  }
};

inline void require_shape(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("shape mismatch in ") + what);
}

}  // namespace gridflow
