#include "eftcl/kernels.hpp"

#include <algorithm>
#include <limits>

namespace eftcl::kernels {

namespace {

void check_conv_args(const Tensor& in, const Tensor& w, const Tensor* bias, int stride, int pad) {
  EFTCL_CHECK(in.rank() == 4, "conv2d input must be rank-4");
  EFTCL_CHECK(w.rank() == 4, "conv2d weights must be rank-4");
  EFTCL_CHECK(in.dim(1) == w.dim(1), "conv2d channel mismatch: input has "
                                         << in.dim(1) << ", weights expect " << w.dim(1));
  EFTCL_CHECK(stride >= 1 && pad >= 0, "conv2d bad stride/pad");
  if (bias != nullptr) {
    EFTCL_CHECK(bias->rank() == 1 && bias->dim(0) == w.dim(0), "conv2d bias shape mismatch");
  }
}

void check_grouped(const Tensor& in, const Tensor& filters, int kh, int kw) {
  EFTCL_CHECK(in.rank() == 4, "grouped transform input must be rank-4");
  EFTCL_CHECK(filters.rank() == 4 && filters.dim(2) == kh && filters.dim(3) == kw,
              "grouped filter shape must be (K," << "g" << "," << kh << "," << kw << ")");
  const std::int64_t K = in.dim(1);
  const std::int64_t g = filters.dim(1);
  EFTCL_CHECK(filters.dim(0) == K, "grouped filters must have one row per output channel");
  EFTCL_CHECK(g >= 1 && K % g == 0,
              "channel count " << K << " not divisible by group cardinality " << g);
}

}  // namespace

namespace {

/// Shared 3x3 stride-1 pad-1 correlation over a channel range: the hot case
/// for both base convs and the grouped transform. Interior pixels run
/// branch-free on row pointers; the one-pixel border takes guarded taps.
inline void corr3x3_accum(const double* img, std::int64_t h, std::int64_t w, const double* f9,
                          double* out) {
  for (std::int64_t y = 0; y < h; ++y) {
    const bool y0_ok = y > 0, y2_ok = y + 1 < h;
    const double* r0 = img + (y - 1) * w;
    const double* r1 = img + y * w;
    const double* r2 = img + (y + 1) * w;
    double* o = out + y * w;
    if (y0_ok && y2_ok && w >= 3) {
      // left border column
      {
        double acc = 0.0;
        acc += f9[1] * r0[0] + f9[2] * r0[1];
        acc += f9[4] * r1[0] + f9[5] * r1[1];
        acc += f9[7] * r2[0] + f9[8] * r2[1];
        o[0] += acc;
      }
      for (std::int64_t x = 1; x + 1 < w; ++x) {
        o[x] += f9[0] * r0[x - 1] + f9[1] * r0[x] + f9[2] * r0[x + 1] +
                f9[3] * r1[x - 1] + f9[4] * r1[x] + f9[5] * r1[x + 1] +
                f9[6] * r2[x - 1] + f9[7] * r2[x] + f9[8] * r2[x + 1];
      }
      {
        const std::int64_t x = w - 1;
        double acc = 0.0;
        acc += f9[0] * r0[x - 1] + f9[1] * r0[x];
        acc += f9[3] * r1[x - 1] + f9[4] * r1[x];
        acc += f9[6] * r2[x - 1] + f9[7] * r2[x];
        o[x] += acc;
      }
    } else {
      for (std::int64_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int dy = 0; dy < 3; ++dy) {
          const std::int64_t yy = y + dy - 1;
          if (yy < 0 || yy >= h) continue;
          for (int dx = 0; dx < 3; ++dx) {
            const std::int64_t xx = x + dx - 1;
            if (xx < 0 || xx >= w) continue;
            acc += f9[dy * 3 + dx] * img[yy * w + xx];
          }
        }
        o[x] += acc;
      }
    }
  }
}

/// 3x3 filter gradient for the stride-1 pad-1 case:
/// gf[dy][dx] += sum_{y,x} g[y][x] * img[y+dy-1][x+dx-1].
inline void corr3x3_filter_grad(const double* g, const double* img, std::int64_t h,
                                std::int64_t w, double* gf9) {
  for (int dy = 0; dy < 3; ++dy) {
    for (int dx = 0; dx < 3; ++dx) {
      const std::int64_t y_lo = std::max<std::int64_t>(0, 1 - dy);
      const std::int64_t y_hi = std::min<std::int64_t>(h, h + 1 - dy);
      const std::int64_t x_lo = std::max<std::int64_t>(0, 1 - dx);
      const std::int64_t x_hi = std::min<std::int64_t>(w, w + 1 - dx);
      double acc = 0.0;
      for (std::int64_t y = y_lo; y < y_hi; ++y) {
        const double* gr = g + y * w;
        const double* ir = img + (y + dy - 1) * w + (dx - 1);
        for (std::int64_t x = x_lo; x < x_hi; ++x) acc += gr[x] * ir[x];
      }
      gf9[dy * 3 + dx] += acc;
    }
  }
}

inline bool is_3x3_s1_p1(std::int64_t kh, std::int64_t kw, int stride, int pad) {
  return kh == 3 && kw == 3 && stride == 1 && pad == 1;
}

}  // namespace

void conv2d_forward(const Tensor& in, const Tensor& w, const Tensor* bias, int stride, int pad,
                    Tensor& out) {
  check_conv_args(in, w, bias, stride, pad);
  const std::int64_t B = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  const std::int64_t K = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const std::int64_t Ho = (H + 2 * pad - kh) / stride + 1;
  const std::int64_t Wo = (W + 2 * pad - kw) / stride + 1;
  EFTCL_CHECK(Ho >= 1 && Wo >= 1, "conv2d output collapses to zero size");
  out = Tensor({B, K, Ho, Wo});

  const double* ip = in.ptr();
  const double* wp = w.ptr();
  double* op = out.ptr();

  if (is_3x3_s1_p1(kh, kw, stride, pad)) {
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t b = 0; b < B; ++b) {
      for (std::int64_t k = 0; k < K; ++k) {
        double* ob = op + (b * K + k) * H * W;
        if (bias != nullptr) {
          const double bk = bias->at(k);
          for (std::int64_t p = 0; p < H * W; ++p) ob[p] = bk;
        }
        const double* wk = wp + k * C * 9;
        for (std::int64_t c = 0; c < C; ++c) {
          corr3x3_accum(ip + (b * C + c) * H * W, H, W, wk + c * 9, ob);
        }
      }
    }
    return;
  }

#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t k = 0; k < K; ++k) {
      const double* wk = wp + k * C * kh * kw;
      const double bias_k = bias != nullptr ? bias->at(k) : 0.0;
      double* ob = op + (b * K + k) * Ho * Wo;
      for (std::int64_t oy = 0; oy < Ho; ++oy) {
        for (std::int64_t ox = 0; ox < Wo; ++ox) {
          double acc = bias_k;
          const std::int64_t y0 = oy * stride - pad;
          const std::int64_t x0 = ox * stride - pad;
          for (std::int64_t c = 0; c < C; ++c) {
            const double* ic = ip + (b * C + c) * H * W;
            const double* wc = wk + c * kh * kw;
            for (std::int64_t dy = 0; dy < kh; ++dy) {
              const std::int64_t y = y0 + dy;
              if (y < 0 || y >= H) continue;
              for (std::int64_t dx = 0; dx < kw; ++dx) {
                const std::int64_t x = x0 + dx;
                if (x < 0 || x >= W) continue;
                acc += wc[dy * kw + dx] * ic[y * W + x];
              }
            }
          }
          ob[oy * Wo + ox] = acc;
        }
      }
    }
  }
}

void conv2d_backward_input(const Tensor& grad_out, const Tensor& w, int stride, int pad,
                           Tensor& grad_in) {
  const std::int64_t B = grad_in.dim(0), C = grad_in.dim(1), H = grad_in.dim(2),
                     W = grad_in.dim(3);
  const std::int64_t K = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const std::int64_t Ho = grad_out.dim(2), Wo = grad_out.dim(3);
  EFTCL_CHECK(w.dim(1) == C && grad_out.dim(1) == K && grad_out.dim(0) == B,
              "conv2d backward shape mismatch");

  const double* gp = grad_out.ptr();
  const double* wp = w.ptr();
  double* gi = grad_in.ptr();

  if (is_3x3_s1_p1(kh, kw, stride, pad)) {
    // Input gradient is a correlation of the output gradient with the
    // spatially flipped filter.
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t b = 0; b < B; ++b) {
      for (std::int64_t c = 0; c < C; ++c) {
        double* gic = gi + (b * C + c) * H * W;
        for (std::int64_t k = 0; k < K; ++k) {
          const double* wkc = wp + (k * C + c) * 9;
          double flipped[9];
          for (int t = 0; t < 9; ++t) flipped[t] = wkc[8 - t];
          corr3x3_accum(gp + (b * K + k) * H * W, H, W, flipped, gic);
        }
      }
    }
    return;
  }

#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t c = 0; c < C; ++c) {
      double* gic = gi + (b * C + c) * H * W;
      for (std::int64_t y = 0; y < H; ++y) {
        for (std::int64_t x = 0; x < W; ++x) {
          double acc = 0.0;
          for (std::int64_t k = 0; k < K; ++k) {
            const double* wkc = wp + (k * C + c) * kh * kw;
            const double* gk = gp + (b * K + k) * Ho * Wo;
            for (std::int64_t dy = 0; dy < kh; ++dy) {
              const std::int64_t num_y = y + pad - dy;
              if (num_y < 0 || num_y % stride != 0) continue;
              const std::int64_t oy = num_y / stride;
              if (oy >= Ho) continue;
              for (std::int64_t dx = 0; dx < kw; ++dx) {
                const std::int64_t num_x = x + pad - dx;
                if (num_x < 0 || num_x % stride != 0) continue;
                const std::int64_t ox = num_x / stride;
                if (ox >= Wo) continue;
                acc += wkc[dy * kw + dx] * gk[oy * Wo + ox];
              }
            }
          }
          gic[y * W + x] += acc;
        }
      }
    }
  }
}

void conv2d_backward_params(const Tensor& grad_out, const Tensor& in, int stride, int pad,
                            Tensor& grad_w, Tensor* grad_bias) {
  const std::int64_t B = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  const std::int64_t K = grad_w.dim(0), kh = grad_w.dim(2), kw = grad_w.dim(3);
  const std::int64_t Ho = grad_out.dim(2), Wo = grad_out.dim(3);
  EFTCL_CHECK(grad_w.dim(1) == C && grad_out.dim(1) == K, "conv2d grad_w shape mismatch");

  const double* gp = grad_out.ptr();
  const double* ip = in.ptr();
  double* gw = grad_w.ptr();

  if (is_3x3_s1_p1(kh, kw, stride, pad)) {
#pragma omp parallel for schedule(static)
    for (std::int64_t k = 0; k < K; ++k) {
      double bias_acc = 0.0;
      for (std::int64_t b = 0; b < B; ++b) {
        const double* gk = gp + (b * K + k) * H * W;
        for (std::int64_t p = 0; p < H * W; ++p) bias_acc += gk[p];
        for (std::int64_t c = 0; c < C; ++c) {
          corr3x3_filter_grad(gk, ip + (b * C + c) * H * W, H, W, gw + (k * C + c) * 9);
        }
      }
      if (grad_bias != nullptr) grad_bias->at(k) += bias_acc;
    }
    return;
  }

#pragma omp parallel for schedule(static)
  for (std::int64_t k = 0; k < K; ++k) {
    double bias_acc = 0.0;
    for (std::int64_t b = 0; b < B; ++b) {
      const double* gk = gp + (b * K + k) * Ho * Wo;
      for (std::int64_t oy = 0; oy < Ho; ++oy) {
        for (std::int64_t ox = 0; ox < Wo; ++ox) {
          const double g = gk[oy * Wo + ox];
          if (g == 0.0) continue;
          bias_acc += g;
          const std::int64_t y0 = oy * stride - pad;
          const std::int64_t x0 = ox * stride - pad;
          for (std::int64_t c = 0; c < C; ++c) {
            const double* ic = ip + (b * C + c) * H * W;
            double* gwc = gw + (k * C + c) * kh * kw;
            for (std::int64_t dy = 0; dy < kh; ++dy) {
              const std::int64_t y = y0 + dy;
              if (y < 0 || y >= H) continue;
              for (std::int64_t dx = 0; dx < kw; ++dx) {
                const std::int64_t x = x0 + dx;
                if (x < 0 || x >= W) continue;
                gwc[dy * kw + dx] += g * ic[y * W + x];
              }
            }
          }
        }
      }
    }
    if (grad_bias != nullptr) grad_bias->at(k) += bias_acc;
  }
}

void eft_spatial_forward(const Tensor& in, const Tensor& filters, Tensor& out) {
  check_grouped(in, filters, 3, 3);
  const std::int64_t B = in.dim(0), K = in.dim(1), M = in.dim(2), N = in.dim(3);
  const std::int64_t a = filters.dim(1);
  out = Tensor({B, K, M, N});

  const double* ip = in.ptr();
  const double* fp = filters.ptr();
  double* op = out.ptr();

#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t k = 0; k < K; ++k) {
      const std::int64_t g = k / a;
      const double* fk = fp + k * a * 9;
      double* ob = op + (b * K + k) * M * N;
      for (std::int64_t j = 0; j < a; ++j) {
        corr3x3_accum(ip + (b * K + g * a + j) * M * N, M, N, fk + j * 9, ob);
      }
    }
  }
}

void eft_spatial_backward_input(const Tensor& grad_out, const Tensor& filters, Tensor& grad_in) {
  const std::int64_t B = grad_in.dim(0), K = grad_in.dim(1), M = grad_in.dim(2),
                     N = grad_in.dim(3);
  const std::int64_t a = filters.dim(1);
  EFTCL_CHECK(grad_out.same_shape(grad_in), "eft spatial backward shape mismatch");

  const double* gp = grad_out.ptr();
  const double* fp = filters.ptr();
  double* gi = grad_in.ptr();

#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t c = 0; c < K; ++c) {
      const std::int64_t g = c / a;
      const std::int64_t j = c % a;  // position of channel c inside its group
      double* gic = gi + (b * K + c) * M * N;
      for (std::int64_t k = g * a; k < (g + 1) * a; ++k) {
        const double* fj = fp + (k * a + j) * 9;
        double flipped[9];
        for (int t = 0; t < 9; ++t) flipped[t] = fj[8 - t];
        corr3x3_accum(gp + (b * K + k) * M * N, M, N, flipped, gic);
      }
    }
  }
}

void eft_spatial_backward_filters(const Tensor& grad_out, const Tensor& in,
                                  Tensor& grad_filters) {
  const std::int64_t B = in.dim(0), K = in.dim(1), M = in.dim(2), N = in.dim(3);
  const std::int64_t a = grad_filters.dim(1);
  EFTCL_CHECK(grad_out.same_shape(in), "eft spatial filter-grad shape mismatch");

  const double* gp = grad_out.ptr();
  const double* ip = in.ptr();
  double* gf = grad_filters.ptr();

#pragma omp parallel for schedule(static)
  for (std::int64_t k = 0; k < K; ++k) {
    const std::int64_t g = k / a;
    double* gfk = gf + k * a * 9;
    for (std::int64_t b = 0; b < B; ++b) {
      const double* gk = gp + (b * K + k) * M * N;
      for (std::int64_t j = 0; j < a; ++j) {
        corr3x3_filter_grad(gk, ip + (b * K + g * a + j) * M * N, M, N, gfk + j * 9);
      }
    }
  }
}

void eft_pointwise_forward(const Tensor& in, const Tensor& filters, Tensor& out) {
  check_grouped(in, filters, 1, 1);
  const std::int64_t B = in.dim(0), K = in.dim(1), M = in.dim(2), N = in.dim(3);
  const std::int64_t bq = filters.dim(1);
  out = Tensor({B, K, M, N});

  const double* ip = in.ptr();
  const double* fp = filters.ptr();
  double* op = out.ptr();

#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t k = 0; k < K; ++k) {
      const std::int64_t g = k / bq;
      const double* fk = fp + k * bq;
      double* ob = op + (b * K + k) * M * N;
      for (std::int64_t p = 0; p < M * N; ++p) {
        double acc = 0.0;
        for (std::int64_t j = 0; j < bq; ++j) {
          acc += fk[j] * ip[(b * K + g * bq + j) * M * N + p];
        }
        ob[p] = acc;
      }
    }
  }
}

void eft_pointwise_backward_input(const Tensor& grad_out, const Tensor& filters,
                                  Tensor& grad_in) {
  const std::int64_t B = grad_in.dim(0), K = grad_in.dim(1), M = grad_in.dim(2),
                     N = grad_in.dim(3);
  const std::int64_t bq = filters.dim(1);
  EFTCL_CHECK(grad_out.same_shape(grad_in), "eft pointwise backward shape mismatch");

  const double* gp = grad_out.ptr();
  const double* fp = filters.ptr();
  double* gi = grad_in.ptr();

#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t c = 0; c < K; ++c) {
      const std::int64_t g = c / bq;
      const std::int64_t j = c % bq;
      double* gic = gi + (b * K + c) * M * N;
      for (std::int64_t p = 0; p < M * N; ++p) {
        double acc = 0.0;
        for (std::int64_t k = g * bq; k < (g + 1) * bq; ++k) {
          acc += fp[k * bq + j] * gp[(b * K + k) * M * N + p];
        }
        gic[p] += acc;
      }
    }
  }
}

void eft_pointwise_backward_filters(const Tensor& grad_out, const Tensor& in,
                                    Tensor& grad_filters) {
  const std::int64_t B = in.dim(0), K = in.dim(1), M = in.dim(2), N = in.dim(3);
  const std::int64_t bq = grad_filters.dim(1);
  EFTCL_CHECK(grad_out.same_shape(in), "eft pointwise filter-grad shape mismatch");

  const double* gp = grad_out.ptr();
  const double* ip = in.ptr();
  double* gf = grad_filters.ptr();

#pragma omp parallel for schedule(static)
  for (std::int64_t k = 0; k < K; ++k) {
    const std::int64_t g = k / bq;
    for (std::int64_t j = 0; j < bq; ++j) {
      double acc = 0.0;
      for (std::int64_t b = 0; b < B; ++b) {
        const double* gk = gp + (b * K + k) * M * N;
        const double* ic = ip + (b * K + g * bq + j) * M * N;
        for (std::int64_t p = 0; p < M * N; ++p) acc += gk[p] * ic[p];
      }
      gf[k * bq + j] += acc;
    }
  }
}

void fc_forward(const Tensor& x, const Tensor& w, const Tensor* bias, Tensor& y) {
  EFTCL_CHECK(x.rank() == 2 && w.rank() == 2, "fc expects rank-2 input and weights");
  const std::int64_t B = x.dim(0), din = x.dim(1), dout = w.dim(0);
  EFTCL_CHECK(w.dim(1) == din, "fc dimension mismatch: input " << din << ", weights " << w.dim(1));
  y = Tensor({B, dout});

  const double* xp = x.ptr();
  const double* wp = w.ptr();
  double* yp = y.ptr();

#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t o = 0; o < dout; ++o) {
      const double* xr = xp + b * din;
      const double* wr = wp + o * din;
      double acc = bias != nullptr ? bias->at(o) : 0.0;
      for (std::int64_t i = 0; i < din; ++i) acc += wr[i] * xr[i];
      yp[b * dout + o] = acc;
    }
  }
}

void fc_backward_input(const Tensor& grad_y, const Tensor& w, Tensor& grad_x) {
  const std::int64_t B = grad_x.dim(0), din = grad_x.dim(1), dout = w.dim(0);
  EFTCL_CHECK(grad_y.dim(0) == B && grad_y.dim(1) == dout, "fc backward shape mismatch");
  const double* gp = grad_y.ptr();
  const double* wp = w.ptr();
  double* gx = grad_x.ptr();

#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t i = 0; i < din; ++i) {
      double acc = 0.0;
      for (std::int64_t o = 0; o < dout; ++o) acc += wp[o * din + i] * gp[b * dout + o];
      gx[b * din + i] += acc;
    }
  }
}

void fc_backward_params(const Tensor& grad_y, const Tensor& x, Tensor& grad_w,
                        Tensor* grad_bias) {
  const std::int64_t B = x.dim(0), din = x.dim(1), dout = grad_w.dim(0);
  const double* gp = grad_y.ptr();
  const double* xp = x.ptr();
  double* gw = grad_w.ptr();

#pragma omp parallel for schedule(static)
  for (std::int64_t o = 0; o < dout; ++o) {
    double bias_acc = 0.0;
    double* gwr = gw + o * din;
    for (std::int64_t b = 0; b < B; ++b) {
      const double g = gp[b * dout + o];
      bias_acc += g;
      const double* xr = xp + b * din;
      for (std::int64_t i = 0; i < din; ++i) gwr[i] += g * xr[i];
    }
    if (grad_bias != nullptr) grad_bias->at(o) += bias_acc;
  }
}

void maxpool2_forward(const Tensor& in, Tensor& out, std::vector<std::int64_t>& argmax) {
  const std::int64_t B = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  EFTCL_CHECK(H % 2 == 0 && W % 2 == 0, "maxpool2 requires even spatial dims, got " << H << "x"
                                                                                    << W);
  const std::int64_t Ho = H / 2, Wo = W / 2;
  out = Tensor({B, C, Ho, Wo});
  argmax.assign(static_cast<std::size_t>(out.numel()), 0);

  const double* ip = in.ptr();
  double* op = out.ptr();
  std::int64_t* ax = argmax.data();

#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t c = 0; c < C; ++c) {
      const std::int64_t in_base = (b * C + c) * H * W;
      const std::int64_t out_base = (b * C + c) * Ho * Wo;
      for (std::int64_t oy = 0; oy < Ho; ++oy) {
        for (std::int64_t ox = 0; ox < Wo; ++ox) {
          double best = -std::numeric_limits<double>::infinity();
          std::int64_t best_idx = 0;
          for (std::int64_t dy = 0; dy < 2; ++dy) {
            for (std::int64_t dx = 0; dx < 2; ++dx) {
              const std::int64_t idx = in_base + (2 * oy + dy) * W + 2 * ox + dx;
              if (ip[idx] > best) {
                best = ip[idx];
                best_idx = idx;
              }
            }
          }
          op[out_base + oy * Wo + ox] = best;
          ax[out_base + oy * Wo + ox] = best_idx;
        }
      }
    }
  }
}

void maxpool2_backward(const Tensor& grad_out, const std::vector<std::int64_t>& argmax,
                       Tensor& grad_in) {
  // Pool windows are disjoint, so scattering is race-free only per window;
  // keep this serial, it is cheap.
  const double* gp = grad_out.ptr();
  double* gi = grad_in.ptr();
  for (std::int64_t i = 0; i < grad_out.numel(); ++i) {
    gi[argmax[static_cast<std::size_t>(i)]] += gp[i];
  }
}

void global_avgpool_forward(const Tensor& in, Tensor& out) {
  const std::int64_t B = in.dim(0), C = in.dim(1), HW = in.dim(2) * in.dim(3);
  out = Tensor({B, C});
  const double* ip = in.ptr();
  double* op = out.ptr();
#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t c = 0; c < C; ++c) {
      double acc = 0.0;
      const double* base = ip + (b * C + c) * HW;
      for (std::int64_t p = 0; p < HW; ++p) acc += base[p];
      op[b * C + c] = acc / static_cast<double>(HW);
    }
  }
}

void global_avgpool_backward(const Tensor& grad_out, std::int64_t h, std::int64_t w,
                             Tensor& grad_in) {
  const std::int64_t B = grad_out.dim(0), C = grad_out.dim(1), HW = h * w;
  const double scale = 1.0 / static_cast<double>(HW);
  const double* gp = grad_out.ptr();
  double* gi = grad_in.ptr();
#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t c = 0; c < C; ++c) {
      const double g = gp[b * C + c] * scale;
      double* base = gi + (b * C + c) * HW;
      for (std::int64_t p = 0; p < HW; ++p) base[p] += g;
    }
  }
}

void upsample2_forward(const Tensor& in, Tensor& out) {
  const std::int64_t B = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  out = Tensor({B, C, 2 * H, 2 * W});
  const double* ip = in.ptr();
  double* op = out.ptr();
#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t c = 0; c < C; ++c) {
      const double* ic = ip + (b * C + c) * H * W;
      double* oc = op + (b * C + c) * 4 * H * W;
      for (std::int64_t y = 0; y < 2 * H; ++y) {
        for (std::int64_t x = 0; x < 2 * W; ++x) {
          oc[y * 2 * W + x] = ic[(y / 2) * W + x / 2];
        }
      }
    }
  }
}

void upsample2_backward(const Tensor& grad_out, Tensor& grad_in) {
  const std::int64_t B = grad_in.dim(0), C = grad_in.dim(1), H = grad_in.dim(2),
                     W = grad_in.dim(3);
  const double* gp = grad_out.ptr();
  double* gi = grad_in.ptr();
#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t c = 0; c < C; ++c) {
      const double* gc = gp + (b * C + c) * 4 * H * W;
      double* gic = gi + (b * C + c) * H * W;
      for (std::int64_t y = 0; y < H; ++y) {
        for (std::int64_t x = 0; x < W; ++x) {
          double acc = 0.0;
          for (std::int64_t dy = 0; dy < 2; ++dy) {
            for (std::int64_t dx = 0; dx < 2; ++dx) {
              acc += gc[(2 * y + dy) * 2 * W + 2 * x + dx];
            }
          }
          gic[y * W + x] += acc;
        }
      }
    }
  }
}

}  // namespace eftcl::kernels
