#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include "eftcl/common.hpp"

namespace eftcl {

/// Dense row-major tensor of doubles. Feature maps are rank-4 (B, C, H, W),
/// matrices rank-2 (rows, cols), vectors rank-1.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> s, double fill = 0.0);

  static Tensor zeros(std::vector<std::int64_t> s) { return Tensor(std::move(s)); }
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape); }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  std::int64_t dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;

  double* ptr() { return data.data(); }
  const double* ptr() const { return data.data(); }

  void fill(double v);

  // Rank-specific element access; bounds are the caller's responsibility.
  double& at(std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
  double at(std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }
  double& at(std::int64_t i, std::int64_t j) {
    return data[static_cast<std::size_t>(i * shape[1] + j)];
  }
  double at(std::int64_t i, std::int64_t j) const {
    return data[static_cast<std::size_t>(i * shape[1] + j)];
  }
  double& at(std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t w) {
    return data[static_cast<std::size_t>(((b * shape[1] + c) * shape[2] + h) * shape[3] + w)];
  }
  double at(std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return data[static_cast<std::size_t>(((b * shape[1] + c) * shape[2] + h) * shape[3] + w)];
  }
};

/// y += alpha * x, shapes must match.
void axpy(double alpha, const Tensor& x, Tensor& y);

double max_abs_diff(const Tensor& a, const Tensor& b);

bool bit_equal(const Tensor& a, const Tensor& b);

}  // namespace eftcl
