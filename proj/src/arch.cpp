#include "eftcl/arch.hpp"

#include <algorithm>

namespace eftcl {

namespace {

LayerDesc conv(std::int64_t in_ch, std::int64_t out_ch, int kernel, int stride, int pad,
               bool bias) {
  LayerDesc d;
  d.kind = LayerKind::kConv;
  d.in_ch = in_ch;
  d.out_ch = out_ch;
  d.kernel = kernel;
  d.stride = stride;
  d.pad = pad;
  d.conv_bias = bias;
  return d;
}

LayerDesc norm(std::int64_t channels) {
  LayerDesc d;
  d.kind = LayerKind::kNorm;
  d.out_ch = channels;
  return d;
}

LayerDesc act(Activation a) {
  LayerDesc d;
  d.kind = LayerKind::kActivation;
  d.act = a;
  return d;
}

LayerDesc pool(PoolKind p) {
  LayerDesc d;
  d.kind = LayerKind::kPool;
  d.pool = p;
  return d;
}

LayerDesc fc(std::int64_t in_dim, std::int64_t out_dim) {
  LayerDesc d;
  d.kind = LayerKind::kFc;
  d.in_dim = in_dim;
  d.out_dim = out_dim;
  return d;
}

LayerDesc flatten() {
  LayerDesc d;
  d.kind = LayerKind::kFlatten;
  return d;
}

LayerDesc reshape(std::int64_t c, std::int64_t h, std::int64_t w) {
  LayerDesc d;
  d.kind = LayerKind::kReshape;
  d.rs_c = c;
  d.rs_h = h;
  d.rs_w = w;
  return d;
}

LayerDesc marker(LayerKind k) {
  LayerDesc d;
  d.kind = k;
  return d;
}

void append_basic_block(std::vector<LayerDesc>& layers, std::int64_t in_ch, std::int64_t out_ch,
                        int stride) {
  layers.push_back(marker(LayerKind::kBlockBegin));
  layers.push_back(conv(in_ch, out_ch, 3, stride, 1, false));
  layers.push_back(norm(out_ch));
  layers.push_back(act(Activation::kRelu));
  layers.push_back(conv(out_ch, out_ch, 3, 1, 1, false));
  layers.push_back(norm(out_ch));
  if (stride != 1 || in_ch != out_ch) {
    LayerDesc sc = conv(in_ch, out_ch, 1, stride, 0, false);
    sc.on_shortcut = true;
    layers.push_back(sc);
    LayerDesc scn = norm(out_ch);
    scn.on_shortcut = true;
    layers.push_back(scn);
  }
  layers.push_back(marker(LayerKind::kBlockEnd));
  layers.push_back(act(Activation::kRelu));
}

ArchSpec make_smallcnn(std::array<std::int64_t, 3> input_shape) {
  ArchSpec a;
  a.name = "smallcnn";
  a.input_shape = input_shape;
  const std::int64_t chans[4] = {32, 64, 128, 128};
  std::int64_t in_ch = input_shape[0];
  for (int blk = 0; blk < 4; ++blk) {
    a.layers.push_back(conv(in_ch, chans[blk], 3, 1, 1, false));
    a.layers.push_back(norm(chans[blk]));
    a.layers.push_back(act(Activation::kRelu));
    if (blk < 3) a.layers.push_back(pool(PoolKind::kMax2));
    in_ch = chans[blk];
  }
  a.layers.push_back(pool(PoolKind::kGlobalAvg));
  a.layers.push_back(fc(128, 128));
  return a;
}

ArchSpec make_resnet18_cifar(std::array<std::int64_t, 3> input_shape) {
  ArchSpec a;
  a.name = "resnet18-cifar";
  a.input_shape = input_shape;
  a.layers.push_back(conv(input_shape[0], 64, 3, 1, 1, false));
  a.layers.push_back(norm(64));
  a.layers.push_back(act(Activation::kRelu));
  const std::int64_t stage_ch[4] = {64, 128, 256, 512};
  std::int64_t in_ch = 64;
  for (int s = 0; s < 4; ++s) {
    const int stride = s == 0 ? 1 : 2;
    append_basic_block(a.layers, in_ch, stage_ch[s], stride);
    append_basic_block(a.layers, stage_ch[s], stage_ch[s], 1);
    in_ch = stage_ch[s];
  }
  a.layers.push_back(pool(PoolKind::kGlobalAvg));
  return a;
}

ArchSpec make_lenet(std::array<std::int64_t, 3> input_shape) {
  ArchSpec a;
  a.name = "lenet";
  a.input_shape = input_shape;
  a.layers.push_back(conv(input_shape[0], 6, 5, 1, 0, true));
  a.layers.push_back(act(Activation::kRelu));
  a.layers.push_back(pool(PoolKind::kMax2));
  a.layers.push_back(conv(6, 16, 5, 1, 0, true));
  a.layers.push_back(act(Activation::kRelu));
  a.layers.push_back(pool(PoolKind::kMax2));
  a.layers.push_back(flatten());
  const std::int64_t side_h = ((input_shape[1] - 4) / 2 - 4) / 2;
  const std::int64_t side_w = ((input_shape[2] - 4) / 2 - 4) / 2;
  a.layers.push_back(fc(16 * side_h * side_w, 120));
  a.layers.push_back(act(Activation::kRelu));
  a.layers.push_back(fc(120, 84));
  return a;
}

}  // namespace

ShapeInfo ArchSpec::input_shape_info() const {
  ShapeInfo s;
  if (input_is_image) {
    s.is_vec = false;
    s.c = input_shape[0];
    s.h = input_shape[1];
    s.w = input_shape[2];
  } else {
    s.is_vec = true;
    s.d = input_dim;
  }
  return s;
}

void ArchSpec::validate_and_derive() {
  conv_sites.clear();
  site_of_layer.assign(layers.size(), -1);
  out_shapes.assign(layers.size(), ShapeInfo{});

  ShapeInfo cur = input_shape_info();
  struct Block {
    ShapeInfo skip;
  };
  std::vector<Block> stack;

  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerDesc& l = layers[i];
    ShapeInfo* target = &cur;
    if (l.on_shortcut) {
      EFTCL_CHECK(!stack.empty(), "shortcut layer outside a block at layer " << i);
      target = &stack.back().skip;
    }
    switch (l.kind) {
      case LayerKind::kConv: {
        EFTCL_CHECK(!target->is_vec, "conv after flat vector at layer " << i);
        EFTCL_CHECK(target->c == l.in_ch, "conv in_channels " << l.in_ch
                                                              << " does not match incoming "
                                                              << target->c << " at layer " << i);
        target->c = l.out_ch;
        target->h = (target->h + 2 * l.pad - l.kernel) / l.stride + 1;
        target->w = (target->w + 2 * l.pad - l.kernel) / l.stride + 1;
        EFTCL_CHECK(target->h >= 1 && target->w >= 1, "conv collapses spatial dims at layer " << i);
        if (!l.adapter_exempt) {
          site_of_layer[i] = static_cast<int>(conv_sites.size());
          conv_sites.push_back({static_cast<int>(i), l.out_ch});
        }
        break;
      }
      case LayerKind::kNorm:
        EFTCL_CHECK(!target->is_vec && target->c == l.out_ch,
                    "norm channel mismatch at layer " << i);
        break;
      case LayerKind::kActivation:
        break;
      case LayerKind::kPool:
        EFTCL_CHECK(!target->is_vec, "pool after flat vector at layer " << i);
        if (l.pool == PoolKind::kMax2) {
          EFTCL_CHECK(target->h % 2 == 0 && target->w % 2 == 0,
                      "maxpool2 needs even dims at layer " << i);
          target->h /= 2;
          target->w /= 2;
        } else {
          target->is_vec = true;
          target->d = target->c;
        }
        break;
      case LayerKind::kFlatten:
        EFTCL_CHECK(!target->is_vec, "flatten after flat vector at layer " << i);
        target->is_vec = true;
        target->d = target->c * target->h * target->w;
        break;
      case LayerKind::kReshape:
        EFTCL_CHECK(target->is_vec && target->d == l.rs_c * l.rs_h * l.rs_w,
                    "reshape size mismatch at layer " << i);
        target->is_vec = false;
        target->c = l.rs_c;
        target->h = l.rs_h;
        target->w = l.rs_w;
        break;
      case LayerKind::kUpsample:
        EFTCL_CHECK(!target->is_vec, "upsample after flat vector at layer " << i);
        target->h *= 2;
        target->w *= 2;
        break;
      case LayerKind::kFc:
        EFTCL_CHECK(target->is_vec, "fc requires a flat vector at layer " << i);
        EFTCL_CHECK(target->d == l.in_dim, "fc in_dim " << l.in_dim << " does not match incoming "
                                                        << target->d << " at layer " << i);
        target->d = l.out_dim;
        break;
      case LayerKind::kBlockBegin:
        stack.push_back({cur});
        break;
      case LayerKind::kBlockEnd: {
        EFTCL_CHECK(!stack.empty(), "block end without begin at layer " << i);
        const ShapeInfo& skip = stack.back().skip;
        EFTCL_CHECK(!cur.is_vec && !skip.is_vec && cur.c == skip.c && cur.h == skip.h &&
                        cur.w == skip.w,
                    "residual shapes do not match at layer " << i);
        stack.pop_back();
        break;
      }
    }
    out_shapes[i] = l.on_shortcut ? stack.back().skip : cur;
  }
  EFTCL_CHECK(stack.empty(), "unclosed residual block");

  if (has_head) {
    EFTCL_CHECK(cur.is_vec, "head architectures must end in a flat feature vector");
    feature_dim = cur.d;
  } else {
    feature_dim = 0;
    calibrate_features = false;
  }
}

ArchSpec build_arch(const std::string& name) {
  if (name == "smallcnn") return build_arch(name, {3, 16, 16});
  if (name == "resnet18-cifar") return build_arch(name, {3, 32, 32});
  if (name == "lenet") return build_arch(name, {1, 32, 32});
  throw DimError("unknown architecture: " + name);
}

ArchSpec build_arch(const std::string& name, std::array<std::int64_t, 3> input_shape) {
  ArchSpec a;
  if (name == "smallcnn") {
    a = make_smallcnn(input_shape);
  } else if (name == "resnet18-cifar") {
    a = make_resnet18_cifar(input_shape);
  } else if (name == "lenet") {
    a = make_lenet(input_shape);
  } else {
    throw DimError("unknown architecture: " + name);
  }
  a.validate_and_derive();
  return a;
}

std::vector<std::string> known_archs() { return {"smallcnn", "resnet18-cifar", "lenet"}; }

ArchSpec build_toy_generator(std::int64_t noise_dim, std::array<std::int64_t, 3> image_shape) {
  EFTCL_CHECK(image_shape[1] == 8 && image_shape[2] == 8, "toy generator emits 8x8 images");
  ArchSpec a;
  a.name = "toygan-g";
  a.input_is_image = false;
  a.input_dim = noise_dim;
  a.input_shape = image_shape;
  a.has_head = false;
  a.calibrate_features = false;
  a.layers.push_back(fc(noise_dim, 32 * 2 * 2));
  a.layers.push_back(reshape(32, 2, 2));
  a.layers.push_back(act(Activation::kRelu));
  a.layers.push_back(marker(LayerKind::kUpsample));
  a.layers.push_back(conv(32, 16, 3, 1, 1, true));
  a.layers.push_back(act(Activation::kRelu));
  a.layers.push_back(marker(LayerKind::kUpsample));
  a.layers.push_back(conv(16, 8, 3, 1, 1, true));
  a.layers.push_back(act(Activation::kRelu));
  LayerDesc proj = conv(8, image_shape[0], 3, 1, 1, true);
  proj.adapter_exempt = true;  // output projection, mirrors head exemption
  a.layers.push_back(proj);
  a.layers.push_back(act(Activation::kTanh));
  a.validate_and_derive();
  return a;
}

ArchSpec build_toy_discriminator(std::array<std::int64_t, 3> image_shape) {
  ArchSpec a;
  a.name = "toygan-d";
  a.input_shape = image_shape;
  a.has_head = false;
  a.calibrate_features = false;
  a.layers.push_back(conv(image_shape[0], 16, 3, 1, 1, true));
  a.layers.push_back(act(Activation::kLeakyRelu));
  a.layers.push_back(pool(PoolKind::kMax2));
  a.layers.push_back(conv(16, 32, 3, 1, 1, true));
  a.layers.push_back(act(Activation::kLeakyRelu));
  a.layers.push_back(pool(PoolKind::kMax2));
  a.layers.push_back(flatten());
  const std::int64_t d = 32 * (image_shape[1] / 4) * (image_shape[2] / 4);
  a.layers.push_back(fc(d, 1));
  a.validate_and_derive();
  return a;
}

}  // namespace eftcl
