#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "eftcl/common.hpp"

namespace eftcl {

enum class LayerKind {
  kConv,
  kNorm,
  kActivation,
  kPool,
  kFlatten,
  kReshape,
  kUpsample,
  kFc,
  kBlockBegin,
  kBlockEnd,
};

enum class Activation { kRelu, kLeakyRelu, kTanh };
enum class PoolKind { kMax2, kGlobalAvg };

struct LayerDesc {
  LayerKind kind{};
  // conv
  std::int64_t in_ch = 0, out_ch = 0;
  int kernel = 0, stride = 1, pad = 0;
  bool conv_bias = false;
  bool on_shortcut = false;     // operates on the residual skip path
  bool adapter_exempt = false;  // conv without a transform site (output projections)
  // fc
  std::int64_t in_dim = 0, out_dim = 0;
  bool fc_bias = true;
  // activation / pool
  Activation act = Activation::kRelu;
  double lrelu_slope = 0.2;
  PoolKind pool = PoolKind::kMax2;
  // reshape target (vector -> image)
  std::int64_t rs_c = 0, rs_h = 0, rs_w = 0;
};

/// Output shape of a layer: an image (c, h, w) or a flat vector (d).
struct ShapeInfo {
  bool is_vec = false;
  std::int64_t c = 0, h = 0, w = 0;
  std::int64_t d = 0;
};

struct ConvSite {
  int layer_index = 0;
  std::int64_t channels = 0;
};

/// Validated architecture description. Insertion sites are derived: one per
/// conv layer (shortcut convs included, output projections exempt) plus a
/// diagonal calibration on the pre-head feature vector when the architecture
/// carries per-task heads.
struct ArchSpec {
  std::string name;
  bool input_is_image = true;
  std::array<std::int64_t, 3> input_shape{3, 32, 32};  // (C, H, W)
  std::int64_t input_dim = 0;                          // vector inputs (generator noise)
  std::vector<LayerDesc> layers;
  bool has_head = true;
  bool calibrate_features = true;
  std::int64_t feature_dim = 0;  // derived for head networks

  // derived by validate_and_derive()
  std::vector<ConvSite> conv_sites;
  std::vector<int> site_of_layer;  // -1 where no site
  std::vector<ShapeInfo> out_shapes;

  /// Checks that consecutive layer shapes compose and fills the derived
  /// fields. Throws DimError on any inconsistency.
  void validate_and_derive();

  ShapeInfo input_shape_info() const;
};

/// Named base architectures: smallcnn and resnet18-cifar are instantiable,
/// lenet is kept for cost accounting.
ArchSpec build_arch(const std::string& name);
ArchSpec build_arch(const std::string& name, std::array<std::int64_t, 3> input_shape);
std::vector<std::string> known_archs();

/// Toy generative pair: generator maps (B, noise_dim) to images, the
/// discriminator maps images to one logit. Neither carries per-task heads.
ArchSpec build_toy_generator(std::int64_t noise_dim, std::array<std::int64_t, 3> image_shape);
ArchSpec build_toy_discriminator(std::array<std::int64_t, 3> image_shape);

}  // namespace eftcl
