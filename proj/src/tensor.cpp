#include "eftcl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace eftcl {

Tensor::Tensor(std::vector<std::int64_t> s, double fill) : shape(std::move(s)) {
  std::int64_t n = 1;
  for (std::int64_t d : shape) {
    EFTCL_CHECK(d >= 1, "tensor dims must be >= 1");
    n *= d;
  }
  data.assign(static_cast<std::size_t>(n), fill);
}

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

void axpy(double alpha, const Tensor& x, Tensor& y) {
  EFTCL_CHECK(x.same_shape(y), "axpy shape mismatch");
  const double* xp = x.ptr();
  double* yp = y.ptr();
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) yp[i] += alpha * xp[i];
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  EFTCL_CHECK(a.same_shape(b), "max_abs_diff shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  }
  return m;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) return false;
  return std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

}  // namespace eftcl
