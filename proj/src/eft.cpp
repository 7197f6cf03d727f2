#include "eftcl/eft.hpp"

#include <cmath>

#include "eftcl/kernels.hpp"

namespace eftcl {

void EftConvSpec::validate() const {
  EFTCL_CHECK(a >= 0 && b >= 0, "group cardinalities must be non-negative");
  EFTCL_CHECK(a > 0 || b > 0, "at least one transform branch must be enabled (a > 0 or b > 0)");
}

void EftConvSpec::check_channels(std::int64_t k) const {
  validate();
  if (a > 0) {
    EFTCL_CHECK(k % a == 0, "channel count " << k << " not divisible by a=" << a);
  }
  if (b > 0) {
    EFTCL_CHECK(k % b == 0, "channel count " << k << " not divisible by b=" << b);
  }
}

Tensor apply_spatial_branch(const Tensor& f, const EftConvParams& params, int a) {
  EFTCL_CHECK(a > 0, "spatial branch disabled (a=0)");
  EFTCL_CHECK(f.rank() == 4, "feature map must be rank-4");
  const std::int64_t k = f.dim(1);
  EFTCL_CHECK(k % a == 0, "channel count " << k << " not divisible by a=" << a);
  EFTCL_CHECK(params.spatial.rank() == 4 && params.spatial.dim(0) == k &&
                  params.spatial.dim(1) == a && params.spatial.dim(2) == 3 &&
                  params.spatial.dim(3) == 3,
              "spatial filters must be shaped (K," << a << ",3,3)");
  Tensor out;
  kernels::eft_spatial_forward(f, params.spatial, out);
  return out;
}

Tensor apply_pointwise_branch(const Tensor& f, const EftConvParams& params, int b) {
  EFTCL_CHECK(b > 0, "pointwise branch disabled (b=0)");
  EFTCL_CHECK(f.rank() == 4, "feature map must be rank-4");
  const std::int64_t k = f.dim(1);
  EFTCL_CHECK(k % b == 0, "channel count " << k << " not divisible by b=" << b);
  EFTCL_CHECK(params.pointwise.rank() == 4 && params.pointwise.dim(0) == k &&
                  params.pointwise.dim(1) == b,
              "pointwise filters must be shaped (K," << b << ",1,1)");
  Tensor out;
  kernels::eft_pointwise_forward(f, params.pointwise, out);
  return out;
}

Tensor apply_eft_conv(const Tensor& f, const EftConvParams& params, const EftConvSpec& spec) {
  spec.validate();
  if (spec.a > 0 && spec.b > 0) {
    Tensor hs = apply_spatial_branch(f, params, spec.a);
    Tensor hd = apply_pointwise_branch(f, params, spec.b);
    axpy(1.0, hd, hs);
    return hs;
  }
  if (spec.a > 0) return apply_spatial_branch(f, params, spec.a);
  return apply_pointwise_branch(f, params, spec.b);
}

Tensor apply_eft_fc(const Tensor& f, const EftFcParams& params) {
  const std::int64_t d = params.scale.numel();
  if (f.rank() == 1) {
    EFTCL_CHECK(f.dim(0) == d, "calibration length mismatch: " << f.dim(0) << " vs " << d);
    Tensor h({d});
    for (std::int64_t j = 0; j < d; ++j) h.at(j) = params.scale.at(j) * f.at(j);
    return h;
  }
  EFTCL_CHECK(f.rank() == 2 && f.dim(1) == d,
              "calibration length mismatch: " << f.dim(1) << " vs " << d);
  Tensor h(f.shape);
  for (std::int64_t i = 0; i < f.dim(0); ++i)
    for (std::int64_t j = 0; j < d; ++j) h.at(i, j) = params.scale.at(j) * f.at(i, j);
  return h;
}

Tensor compose(const Tensor& input, const Tensor& base_out, const EftConvParams& params,
               const EftConvSpec& spec) {
  if (spec.mode == EftMode::kSerial) {
    return apply_eft_conv(base_out, params, spec);
  }
  Tensor add = (input.rank() == 4 && input.dim(1) == base_out.dim(1))
                   ? apply_eft_conv(input, params, spec)
                   : apply_eft_conv(base_out, params, spec);
  EFTCL_CHECK(add.same_shape(base_out), "parallel transform must preserve base output shape");
  Tensor out = base_out;
  axpy(1.0, add, out);
  return out;
}

EftConvParams init_identity(const EftConvSpec& spec, std::int64_t k) {
  spec.check_channels(k);
  EftConvParams p;
  if (spec.a > 0) p.spatial = Tensor({k, spec.a, 3, 3});
  if (spec.b > 0) p.pointwise = Tensor({k, spec.b, 1, 1});
  if (spec.mode == EftMode::kParallel) return p;  // zero filters: additive no-op
  if (spec.a > 0) {
    // Dirac delta: center tap of the channel's own slot within its group.
    for (std::int64_t ch = 0; ch < k; ++ch) p.spatial.at(ch, ch % spec.a, 1, 1) = 1.0;
  } else {
    for (std::int64_t ch = 0; ch < k; ++ch) p.pointwise.at(ch, ch % spec.b, 0, 0) = 1.0;
  }
  return p;
}

EftConvParams init_random(const EftConvSpec& spec, std::int64_t k, Rng& rng) {
  spec.check_channels(k);
  EftConvParams p;
  if (spec.a > 0) {
    p.spatial = Tensor({k, spec.a, 3, 3});
    rng.fill_normal(p.spatial, std::sqrt(2.0 / (9.0 * spec.a)));
  }
  if (spec.b > 0) {
    p.pointwise = Tensor({k, spec.b, 1, 1});
    rng.fill_normal(p.pointwise, std::sqrt(2.0 / spec.b));
  }
  return p;
}

EftConvParams init_random(const EftConvSpec& spec, std::int64_t k, std::uint64_t seed) {
  Rng rng(seed);
  return init_random(spec, k, rng);
}

EftConvParams init_from_previous(const EftConvParams& prev) { return prev; }

EftFcParams init_from_previous(const EftFcParams& prev) { return prev; }

EftFcParams init_fc_identity(std::int64_t d) {
  EftFcParams p;
  p.scale = Tensor({d}, 1.0);
  return p;
}

}  // namespace eftcl
