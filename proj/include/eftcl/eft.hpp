#pragma once

#include <cstdint>

#include "eftcl/rng.hpp"
#include "eftcl/tensor.hpp"

namespace eftcl {

enum class EftMode { kSerial, kParallel };

/// Group cardinalities of the task-specific feature transform. a controls
/// the 3x3 spatial branch, b the 1x1 cross-channel branch; either may be 0
/// to disable that branch (not both). The pointwise indicator is derived:
/// the branch is employed iff b > 0.
struct EftConvSpec {
  int a = 4;
  int b = 8;
  EftMode mode = EftMode::kSerial;

  void validate() const;
  bool pointwise_enabled() const { return b > 0; }
  bool spatial_enabled() const { return a > 0; }
  /// Both enabled cardinalities must divide the channel count at a site.
  void check_channels(std::int64_t k) const;
};

/// Task-local filters for one convolutional insertion site. spatial is
/// (K, a, 3, 3), pointwise (K, b, 1, 1); a disabled branch holds an empty
/// tensor. No bias terms.
struct EftConvParams {
  Tensor spatial;
  Tensor pointwise;
};

/// Diagonal calibration of a feature vector: h[j] = scale[j] * f[j].
struct EftFcParams {
  Tensor scale;
};

/// Grouped 3x3 branch, shape-preserving (stride 1, zero padding 1).
Tensor apply_spatial_branch(const Tensor& f, const EftConvParams& params, int a);

/// Grouped 1x1 branch.
Tensor apply_pointwise_branch(const Tensor& f, const EftConvParams& params, int b);

/// Sum of the enabled branches.
Tensor apply_eft_conv(const Tensor& f, const EftConvParams& params, const EftConvSpec& spec);

/// Hadamard product with the diagonal. f may be rank-1 (d) or rank-2 (B, d).
Tensor apply_eft_fc(const Tensor& f, const EftFcParams& params);

/// Layer-level composition. Serial mode transforms the base output. Parallel
/// mode adds the transform of the layer input when channel counts match and
/// falls back to transforming the base output otherwise.
Tensor compose(const Tensor& input, const Tensor& base_out, const EftConvParams& params,
               const EftConvSpec& spec);

/// Parameters under which compose() is the identity on the base output:
/// serial mode gets Dirac-delta spatial filters (or Dirac pointwise when the
/// spatial branch is off) with the other branch zeroed; parallel mode gets
/// all-zero filters so the additive term vanishes.
EftConvParams init_identity(const EftConvSpec& spec, std::int64_t k);

/// Zero-mean normal filters with variance 2/fan-in.
EftConvParams init_random(const EftConvSpec& spec, std::int64_t k, Rng& rng);
EftConvParams init_random(const EftConvSpec& spec, std::int64_t k, std::uint64_t seed);

/// Deep copies for forward transfer; the result is value-equal and
/// independently mutable.
EftConvParams init_from_previous(const EftConvParams& prev);
EftFcParams init_from_previous(const EftFcParams& prev);

EftFcParams init_fc_identity(std::int64_t d);

}  // namespace eftcl
