#include "eftcl/kernels.hpp"

// Serial reference kernels: the most literal nested-loop statements of each
// operation. Tests compare the parallel kernels against these; the benchmark
// target measures both.

namespace eftcl::ref {

void conv2d_forward(const Tensor& in, const Tensor& w, const Tensor* bias, int stride, int pad,
                    Tensor& out) {
  const std::int64_t B = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  const std::int64_t K = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  EFTCL_CHECK(w.dim(1) == C, "conv2d channel mismatch");
  const std::int64_t Ho = (H + 2 * pad - kh) / stride + 1;
  const std::int64_t Wo = (W + 2 * pad - kw) / stride + 1;
  out = Tensor({B, K, Ho, Wo});
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t k = 0; k < K; ++k)
      for (std::int64_t oy = 0; oy < Ho; ++oy)
        for (std::int64_t ox = 0; ox < Wo; ++ox) {
          double acc = bias != nullptr ? bias->at(k) : 0.0;
          for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t dy = 0; dy < kh; ++dy)
              for (std::int64_t dx = 0; dx < kw; ++dx) {
                const std::int64_t y = oy * stride - pad + dy;
                const std::int64_t x = ox * stride - pad + dx;
                if (y < 0 || y >= H || x < 0 || x >= W) continue;
                acc += w.at(k, c, dy, dx) * in.at(b, c, y, x);
              }
          out.at(b, k, oy, ox) = acc;
        }
}

void eft_spatial_forward(const Tensor& in, const Tensor& filters, Tensor& out) {
  const std::int64_t B = in.dim(0), K = in.dim(1), M = in.dim(2), N = in.dim(3);
  const std::int64_t a = filters.dim(1);
  EFTCL_CHECK(filters.dim(0) == K && K % a == 0, "grouped filter shape mismatch");
  out = Tensor({B, K, M, N});
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t k = 0; k < K; ++k) {
      const std::int64_t g = k / a;
      for (std::int64_t y = 0; y < M; ++y)
        for (std::int64_t x = 0; x < N; ++x) {
          double acc = 0.0;
          for (std::int64_t j = 0; j < a; ++j)
            for (std::int64_t dy = 0; dy < 3; ++dy)
              for (std::int64_t dx = 0; dx < 3; ++dx) {
                const std::int64_t yy = y + dy - 1;
                const std::int64_t xx = x + dx - 1;
                if (yy < 0 || yy >= M || xx < 0 || xx >= N) continue;
                acc += filters.at(k, j, dy, dx) * in.at(b, g * a + j, yy, xx);
              }
          out.at(b, k, y, x) = acc;
        }
    }
}

void eft_pointwise_forward(const Tensor& in, const Tensor& filters, Tensor& out) {
  const std::int64_t B = in.dim(0), K = in.dim(1), M = in.dim(2), N = in.dim(3);
  const std::int64_t bq = filters.dim(1);
  EFTCL_CHECK(filters.dim(0) == K && K % bq == 0, "grouped filter shape mismatch");
  out = Tensor({B, K, M, N});
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t k = 0; k < K; ++k) {
      const std::int64_t g = k / bq;
      for (std::int64_t y = 0; y < M; ++y)
        for (std::int64_t x = 0; x < N; ++x) {
          double acc = 0.0;
          for (std::int64_t j = 0; j < bq; ++j)
            acc += filters.at(k, j, 0, 0) * in.at(b, g * bq + j, y, x);
          out.at(b, k, y, x) = acc;
        }
    }
}

void fc_forward(const Tensor& x, const Tensor& w, const Tensor* bias, Tensor& y) {
  const std::int64_t B = x.dim(0), din = x.dim(1), dout = w.dim(0);
  EFTCL_CHECK(w.dim(1) == din, "fc dimension mismatch");
  y = Tensor({B, dout});
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t o = 0; o < dout; ++o) {
      double acc = bias != nullptr ? bias->at(o) : 0.0;
      for (std::int64_t i = 0; i < din; ++i) acc += w.at(o, i) * x.at(b, i);
      y.at(b, o) = acc;
    }
}

}  // namespace eftcl::ref
