#pragma once

#include <cstdint>
#include <vector>

#include "eftcl/tensor.hpp"

namespace eftcl {

// OpenMP-parallel kernels. Every loop parallelizes over output elements only
// and accumulates serially within an element, so results are bitwise
// identical for any thread count. eftcl::ref holds the serial naive
// counterparts used as test oracles and benchmark baselines.
namespace kernels {

/// in (B,C,H,W), w (K,C,kh,kw), optional bias (K) -> out (B,K,Ho,Wo).
void conv2d_forward(const Tensor& in, const Tensor& w, const Tensor* bias, int stride, int pad,
                    Tensor& out);
void conv2d_backward_input(const Tensor& grad_out, const Tensor& w, int stride, int pad,
                           Tensor& grad_in);
/// Accumulates into grad_w / grad_bias (callers zero them per step).
void conv2d_backward_params(const Tensor& grad_out, const Tensor& in, int stride, int pad,
                            Tensor& grad_w, Tensor* grad_bias);

/// Grouped 3x3 transform, stride 1, zero padding 1. filters (K,a,3,3); output
/// channel k = a*g + j convolves filters row k over input channels
/// [a*g, a*g+a-1]. Shape-preserving.
void eft_spatial_forward(const Tensor& in, const Tensor& filters, Tensor& out);
void eft_spatial_backward_input(const Tensor& grad_out, const Tensor& filters, Tensor& grad_in);
void eft_spatial_backward_filters(const Tensor& grad_out, const Tensor& in, Tensor& grad_filters);

/// Grouped 1x1 transform. filters (K,b,1,1); output channel k mixes its
/// group's b input channels at each pixel.
void eft_pointwise_forward(const Tensor& in, const Tensor& filters, Tensor& out);
void eft_pointwise_backward_input(const Tensor& grad_out, const Tensor& filters, Tensor& grad_in);
void eft_pointwise_backward_filters(const Tensor& grad_out, const Tensor& in,
                                    Tensor& grad_filters);

/// x (B,din), w (dout,din), optional bias (dout) -> y (B,dout).
void fc_forward(const Tensor& x, const Tensor& w, const Tensor* bias, Tensor& y);
void fc_backward_input(const Tensor& grad_y, const Tensor& w, Tensor& grad_x);
void fc_backward_params(const Tensor& grad_y, const Tensor& x, Tensor& grad_w, Tensor* grad_bias);

/// 2x2 max pooling, stride 2. argmax records the flat input index feeding
/// each output element.
void maxpool2_forward(const Tensor& in, Tensor& out, std::vector<std::int64_t>& argmax);
void maxpool2_backward(const Tensor& grad_out, const std::vector<std::int64_t>& argmax,
                       Tensor& grad_in);

/// (B,C,H,W) -> (B,C) spatial mean.
void global_avgpool_forward(const Tensor& in, Tensor& out);
void global_avgpool_backward(const Tensor& grad_out, std::int64_t h, std::int64_t w,
                             Tensor& grad_in);

/// Nearest-neighbour 2x upsampling.
void upsample2_forward(const Tensor& in, Tensor& out);
void upsample2_backward(const Tensor& grad_out, Tensor& grad_in);

}  // namespace kernels

namespace ref {

void conv2d_forward(const Tensor& in, const Tensor& w, const Tensor* bias, int stride, int pad,
                    Tensor& out);
void eft_spatial_forward(const Tensor& in, const Tensor& filters, Tensor& out);
void eft_pointwise_forward(const Tensor& in, const Tensor& filters, Tensor& out);
void fc_forward(const Tensor& x, const Tensor& w, const Tensor* bias, Tensor& y);

}  // namespace ref

}  // namespace eftcl
