#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gpde {

// Dense row-major tensor of doubles. Training and tests run in float64;
// float32 enters only at checkpoint/dataset serialization boundaries.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
    data.assign(size_t(numel_of(shape)), 0.0);
  }
  Tensor(std::vector<int64_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {}

  static Tensor scalar(double v) { return Tensor({}, {v}); }
  static Tensor full(std::vector<int64_t> s, double v) {
    Tensor t(std::move(s));
    for (auto& x : t.data) x = v;
    return t;
  }

  int64_t numel() const { return int64_t(data.size()); }
  int rank() const { return int(shape.size()); }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  double& operator[](int64_t i) { return data[size_t(i)]; }
  double operator[](int64_t i) const { return data[size_t(i)]; }
  double& at2(int64_t i, int64_t j) { return data[size_t(i * shape[1] + j)]; }
  double at2(int64_t i, int64_t j) const { return data[size_t(i * shape[1] + j)]; }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
  }
};

std::string shape_str(const std::vector<int64_t>& s);

}  // namespace gpde
