#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace splitcert {

using Shape = std::vector<std::int64_t>;

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_to_string(const Shape& s);

/// Dense multi-dimensional float64 array, row-major.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    validate();
  }

  static Tensor zeros(Shape s) {
    Tensor t;
    t.shape = std::move(s);
    t.data.assign(static_cast<std::size_t>(shape_numel(t.shape)), 0.0);
    return t;
  }

  static Tensor from_vector(const Eigen::VectorXd& v) {
    Tensor t;
    t.shape = {v.size()};
    t.data.assign(v.data(), v.data() + v.size());
    return t;
  }

  std::int64_t numel() const { return shape_numel(shape); }

  double& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

  Eigen::Map<const Eigen::VectorXd> vec() const {
    return {data.data(), static_cast<Eigen::Index>(data.size())};
  }
  Eigen::Map<Eigen::VectorXd> vec() {
    return {data.data(), static_cast<Eigen::Index>(data.size())};
  }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void validate() const {
    for (auto d : shape)
      if (d <= 0) throw ShapeError("tensor shape has non-positive dimension");
    if (static_cast<std::int64_t>(data.size()) != numel())
      throw ShapeError("tensor data length does not match shape");
  }
};

}  // namespace splitcert
