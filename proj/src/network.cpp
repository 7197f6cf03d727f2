#include "eftcl/network.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>

#include "eftcl/kernels.hpp"

namespace eftcl {

namespace {

constexpr double kBnEps = 1e-5;

std::atomic<std::int64_t> g_forward_calls{0};

std::string layer_prefix(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "layer%03zu", i);
  return buf;
}

std::string site_prefix(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "site%03zu", i);
  return buf;
}

Tensor eft_backward_input(const Tensor& grad_out, const EftConvParams& adapter,
                          const EftConvSpec& spec) {
  Tensor gi = Tensor::zeros_like(grad_out);
  if (spec.a > 0) kernels::eft_spatial_backward_input(grad_out, adapter.spatial, gi);
  if (spec.b > 0) kernels::eft_pointwise_backward_input(grad_out, adapter.pointwise, gi);
  return gi;
}

void eft_accum_filter_grads(const Tensor& grad_out, const Tensor& eft_in,
                            const EftConvSpec& spec, EftGrads& g) {
  if (spec.a > 0) kernels::eft_spatial_backward_filters(grad_out, eft_in, g.spatial);
  if (spec.b > 0) kernels::eft_pointwise_backward_filters(grad_out, eft_in, g.pointwise);
}

Tensor reshape_to(const Tensor& t, std::vector<std::int64_t> shape) {
  Tensor out;
  out.shape = std::move(shape);
  out.data = t.data;
  return out;
}

}  // namespace

GlobalParams init_global(const ArchSpec& arch, Rng& rng) {
  GlobalParams p;
  p.layers.resize(arch.layers.size());
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerDesc& l = arch.layers[i];
    LayerParams& lp = p.layers[i];
    switch (l.kind) {
      case LayerKind::kConv: {
        lp.w = Tensor({l.out_ch, l.in_ch, l.kernel, l.kernel});
        const double fan_in = static_cast<double>(l.in_ch) * l.kernel * l.kernel;
        rng.fill_normal(lp.w, std::sqrt(2.0 / fan_in));
        if (l.conv_bias) lp.bias = Tensor({l.out_ch});
        break;
      }
      case LayerKind::kFc: {
        lp.w = Tensor({l.out_dim, l.in_dim});
        rng.fill_normal(lp.w, std::sqrt(2.0 / static_cast<double>(l.in_dim)));
        if (l.fc_bias) lp.bias = Tensor({l.out_dim});
        break;
      }
      case LayerKind::kNorm:
        lp.gamma = Tensor({l.out_ch}, 1.0);
        lp.beta = Tensor({l.out_ch});
        lp.run_mean = Tensor({l.out_ch});
        lp.run_var = Tensor({l.out_ch}, 1.0);
        break;
      default:
        break;
    }
  }
  return p;
}

TaskParams init_task(const ArchSpec& arch, const EftConvSpec& spec, std::int64_t task_id,
                     std::int64_t num_classes, InitPolicy policy, const TaskParams* prev,
                     Rng& rng) {
  EFTCL_CHECK(policy != InitPolicy::kForwardTransfer || prev != nullptr,
              "forward transfer needs a previous task");
  TaskParams t;
  t.task_id = task_id;
  for (const ConvSite& site : arch.conv_sites) {
    spec.check_channels(site.channels);
    switch (policy) {
      case InitPolicy::kIdentity:
        t.adapters.push_back(init_identity(spec, site.channels));
        break;
      case InitPolicy::kRandom:
        t.adapters.push_back(init_random(spec, site.channels, rng));
        break;
      case InitPolicy::kForwardTransfer:
        t.adapters.push_back(
            init_from_previous(prev->adapters[static_cast<std::size_t>(t.adapters.size())]));
        break;
    }
  }
  if (arch.calibrate_features) {
    t.calib = policy == InitPolicy::kForwardTransfer ? init_from_previous(prev->calib)
                                                     : init_fc_identity(arch.feature_dim);
  }
  if (arch.has_head) {
    EFTCL_CHECK(num_classes >= 1, "head needs at least one class");
    t.head.w = Tensor({num_classes, arch.feature_dim});
    rng.fill_normal(t.head.w, std::sqrt(2.0 / static_cast<double>(arch.feature_dim)));
    t.head.bias = Tensor({num_classes});
  }
  return t;
}

std::vector<NamedTensor> named_tensors(const GlobalParams& p) {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    const LayerParams& lp = p.layers[i];
    const std::string pre = layer_prefix(i);
    if (lp.w.numel() > 0) out.push_back({pre + ".w", lp.w});
    if (lp.bias.numel() > 0) out.push_back({pre + ".bias", lp.bias});
    if (lp.gamma.numel() > 0) out.push_back({pre + ".gamma", lp.gamma});
    if (lp.beta.numel() > 0) out.push_back({pre + ".beta", lp.beta});
    if (lp.run_mean.numel() > 0) out.push_back({pre + ".run_mean", lp.run_mean});
    if (lp.run_var.numel() > 0) out.push_back({pre + ".run_var", lp.run_var});
  }
  return out;
}

std::vector<NamedTensor> named_tensors(const TaskParams& p) {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < p.adapters.size(); ++i) {
    const std::string pre = site_prefix(i);
    if (p.adapters[i].spatial.numel() > 0) out.push_back({pre + ".spatial", p.adapters[i].spatial});
    if (p.adapters[i].pointwise.numel() > 0)
      out.push_back({pre + ".pointwise", p.adapters[i].pointwise});
  }
  if (p.calib.scale.numel() > 0) out.push_back({"calib.scale", p.calib.scale});
  if (p.head.w.numel() > 0) {
    out.push_back({"head.w", p.head.w});
    out.push_back({"head.bias", p.head.bias});
  }
  return out;
}

namespace {
void assign_named(std::vector<NamedTensor> have, std::vector<std::pair<std::string, Tensor*>> want,
                  const char* what) {
  std::map<std::string, Tensor*> slots;
  for (auto& [name, slot] : want) {
    if (slot->numel() > 0) slots[name] = slot;
  }
  EFTCL_IO_CHECK(have.size() == slots.size(),
                 what << ": archive holds " << have.size() << " tensors, expected "
                      << slots.size());
  for (auto& nt : have) {
    auto it = slots.find(nt.name);
    EFTCL_IO_CHECK(it != slots.end(), what << ": unexpected tensor " << nt.name);
    EFTCL_IO_CHECK(it->second->shape == nt.tensor.shape,
                   what << ": shape mismatch for " << nt.name);
    *it->second = std::move(nt.tensor);
  }
}
}  // namespace

void load_from_named(GlobalParams& p, const std::vector<NamedTensor>& tensors) {
  std::vector<std::pair<std::string, Tensor*>> want;
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    LayerParams& lp = p.layers[i];
    const std::string pre = layer_prefix(i);
    want.push_back({pre + ".w", &lp.w});
    want.push_back({pre + ".bias", &lp.bias});
    want.push_back({pre + ".gamma", &lp.gamma});
    want.push_back({pre + ".beta", &lp.beta});
    want.push_back({pre + ".run_mean", &lp.run_mean});
    want.push_back({pre + ".run_var", &lp.run_var});
  }
  assign_named(tensors, std::move(want), "global params");
}

void load_from_named(TaskParams& p, const std::vector<NamedTensor>& tensors) {
  std::vector<std::pair<std::string, Tensor*>> want;
  for (std::size_t i = 0; i < p.adapters.size(); ++i) {
    const std::string pre = site_prefix(i);
    want.push_back({pre + ".spatial", &p.adapters[i].spatial});
    want.push_back({pre + ".pointwise", &p.adapters[i].pointwise});
  }
  want.push_back({"calib.scale", &p.calib.scale});
  want.push_back({"head.w", &p.head.w});
  want.push_back({"head.bias", &p.head.bias});
  assign_named(tensors, std::move(want), "task params");
}

std::uint64_t digest_global(const GlobalParams& p) { return digest_tensors(named_tensors(p)); }
std::uint64_t digest_task(const TaskParams& p) { return digest_tensors(named_tensors(p)); }

void GradBuffers::zero() {
  for (auto& lg : global) {
    lg.w.fill(0.0);
    lg.bias.fill(0.0);
    lg.gamma.fill(0.0);
    lg.beta.fill(0.0);
  }
  for (auto& ag : task.adapters) {
    ag.spatial.fill(0.0);
    ag.pointwise.fill(0.0);
  }
  task.calib.fill(0.0);
  task.head_w.fill(0.0);
  task.head_bias.fill(0.0);
}

GradBuffers make_grad_buffers(const ArchSpec& arch, const GlobalParams& theta,
                              const TaskParams* task) {
  EFTCL_CHECK(theta.layers.size() == arch.layers.size(), "theta does not match architecture");
  GradBuffers g;
  g.global.resize(theta.layers.size());
  for (std::size_t i = 0; i < theta.layers.size(); ++i) {
    const LayerParams& lp = theta.layers[i];
    if (lp.w.numel() > 0) g.global[i].w = Tensor::zeros_like(lp.w);
    if (lp.bias.numel() > 0) g.global[i].bias = Tensor::zeros_like(lp.bias);
    if (lp.gamma.numel() > 0) g.global[i].gamma = Tensor::zeros_like(lp.gamma);
    if (lp.beta.numel() > 0) g.global[i].beta = Tensor::zeros_like(lp.beta);
  }
  if (task != nullptr) {
    for (const auto& ad : task->adapters) {
      EftGrads eg;
      if (ad.spatial.numel() > 0) eg.spatial = Tensor::zeros_like(ad.spatial);
      if (ad.pointwise.numel() > 0) eg.pointwise = Tensor::zeros_like(ad.pointwise);
      g.task.adapters.push_back(std::move(eg));
    }
    if (task->calib.scale.numel() > 0) g.task.calib = Tensor::zeros_like(task->calib.scale);
    if (task->head.w.numel() > 0) {
      g.task.head_w = Tensor::zeros_like(task->head.w);
      g.task.head_bias = Tensor::zeros_like(task->head.bias);
    }
  }
  return g;
}

ForwardResult net_forward(const ArchSpec& arch, const EftConvSpec& spec,
                          const GlobalParams& theta, const TaskParams* task, const Tensor& x,
                          const ForwardOptions& opts, ForwardTrace* trace) {
  g_forward_calls.fetch_add(1, std::memory_order_relaxed);
  EFTCL_CHECK(theta.layers.size() == arch.layers.size(), "theta does not match architecture");
  if (opts.apply_eft) {
    EFTCL_CHECK(task != nullptr, "task parameters required when transforms are applied");
    EFTCL_CHECK(task->adapters.size() == arch.conv_sites.size(),
                "task adapters do not match insertion sites");
  }
  if (arch.input_is_image) {
    EFTCL_CHECK(x.rank() == 4 && x.dim(1) == arch.input_shape[0], "input shape mismatch");
  } else {
    EFTCL_CHECK(x.rank() == 2 && x.dim(1) == arch.input_dim, "input dim mismatch");
  }

  if (trace != nullptr) trace->layers.assign(arch.layers.size(), TraceEntry{});

  Tensor cur = x;
  std::vector<Tensor> skip_stack;

  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerDesc& l = arch.layers[i];
    const LayerParams& lp = theta.layers[i];
    Tensor* slot = l.on_shortcut ? &skip_stack.back() : &cur;
    TraceEntry* te = trace != nullptr ? &trace->layers[i] : nullptr;

    switch (l.kind) {
      case LayerKind::kConv: {
        const Tensor in = *slot;
        Tensor base;
        kernels::conv2d_forward(in, lp.w, lp.bias.numel() > 0 ? &lp.bias : nullptr, l.stride,
                                l.pad, base);
        const int site = arch.site_of_layer[i];
        if (opts.apply_eft && site >= 0) {
          const EftConvParams& ad = task->adapters[static_cast<std::size_t>(site)];
          if (spec.mode == EftMode::kSerial) {
            if (te != nullptr) {
              te->route = EftRoute::kSerial;
              te->eft_in = base;
            }
            *slot = apply_eft_conv(base, ad, spec);
          } else if (in.dim(1) == base.dim(1)) {
            if (te != nullptr) te->route = EftRoute::kParallelInput;
            Tensor add = apply_eft_conv(in, ad, spec);
            *slot = base;
            axpy(1.0, add, *slot);
          } else {
            if (te != nullptr) {
              te->route = EftRoute::kParallelOutput;
              te->eft_in = base;
            }
            Tensor add = apply_eft_conv(base, ad, spec);
            *slot = base;
            axpy(1.0, add, *slot);
          }
        } else {
          *slot = std::move(base);
        }
        if (te != nullptr) te->in = in;
        break;
      }
      case LayerKind::kNorm: {
        const Tensor in = *slot;
        const std::int64_t B = in.dim(0), C = in.dim(1), HW = in.dim(2) * in.dim(3);
        Tensor out(in.shape);
        if (opts.bn_batch_stats) {
          Tensor mean({C}), var({C});
          for (std::int64_t c = 0; c < C; ++c) {
            double m = 0.0;
            for (std::int64_t b = 0; b < B; ++b) {
              const double* p = in.ptr() + (b * C + c) * HW;
              for (std::int64_t q = 0; q < HW; ++q) m += p[q];
            }
            m /= static_cast<double>(B * HW);
            double v = 0.0;
            for (std::int64_t b = 0; b < B; ++b) {
              const double* p = in.ptr() + (b * C + c) * HW;
              for (std::int64_t q = 0; q < HW; ++q) v += (p[q] - m) * (p[q] - m);
            }
            v /= static_cast<double>(B * HW);
            mean.at(c) = m;
            var.at(c) = v;
          }
          for (std::int64_t c = 0; c < C; ++c) {
            const double ivs = 1.0 / std::sqrt(var.at(c) + kBnEps);
            const double gma = lp.gamma.at(c), bta = lp.beta.at(c), m = mean.at(c);
            for (std::int64_t b = 0; b < B; ++b) {
              const double* p = in.ptr() + (b * C + c) * HW;
              double* o = out.ptr() + (b * C + c) * HW;
              for (std::int64_t q = 0; q < HW; ++q) o[q] = gma * (p[q] - m) * ivs + bta;
            }
          }
          if (te != nullptr) {
            te->bn_mean = mean;
            te->bn_var = var;
          }
        } else {
          for (std::int64_t c = 0; c < C; ++c) {
            const double ivs = 1.0 / std::sqrt(lp.run_var.at(c) + kBnEps);
            const double gma = lp.gamma.at(c), bta = lp.beta.at(c), m = lp.run_mean.at(c);
            for (std::int64_t b = 0; b < B; ++b) {
              const double* p = in.ptr() + (b * C + c) * HW;
              double* o = out.ptr() + (b * C + c) * HW;
              for (std::int64_t q = 0; q < HW; ++q) o[q] = gma * (p[q] - m) * ivs + bta;
            }
          }
        }
        if (te != nullptr) te->in = in;
        *slot = std::move(out);
        break;
      }
      case LayerKind::kActivation: {
        const Tensor in = *slot;
        Tensor out(in.shape);
        const double* p = in.ptr();
        double* o = out.ptr();
        const std::int64_t n = in.numel();
        switch (l.act) {
          case Activation::kRelu:
            for (std::int64_t q = 0; q < n; ++q) o[q] = p[q] > 0.0 ? p[q] : 0.0;
            break;
          case Activation::kLeakyRelu:
            for (std::int64_t q = 0; q < n; ++q) o[q] = p[q] > 0.0 ? p[q] : l.lrelu_slope * p[q];
            break;
          case Activation::kTanh:
            for (std::int64_t q = 0; q < n; ++q) o[q] = std::tanh(p[q]);
            break;
        }
        if (te != nullptr) te->in = in;
        *slot = std::move(out);
        break;
      }
      case LayerKind::kPool: {
        const Tensor in = *slot;
        if (l.pool == PoolKind::kMax2) {
          Tensor out;
          std::vector<std::int64_t> argmax;
          kernels::maxpool2_forward(in, out, argmax);
          if (te != nullptr) te->argmax = std::move(argmax);
          *slot = std::move(out);
        } else {
          Tensor out;
          kernels::global_avgpool_forward(in, out);
          if (te != nullptr) {
            te->pool_h = in.dim(2);
            te->pool_w = in.dim(3);
          }
          *slot = std::move(out);
        }
        break;
      }
      case LayerKind::kFlatten: {
        const Tensor& in = *slot;
        if (te != nullptr) {
          te->pool_h = in.dim(2);
          te->pool_w = in.dim(3);
        }
        *slot = reshape_to(in, {in.dim(0), in.dim(1) * in.dim(2) * in.dim(3)});
        break;
      }
      case LayerKind::kReshape:
        *slot = reshape_to(*slot, {slot->dim(0), l.rs_c, l.rs_h, l.rs_w});
        break;
      case LayerKind::kUpsample: {
        Tensor out;
        kernels::upsample2_forward(*slot, out);
        *slot = std::move(out);
        break;
      }
      case LayerKind::kFc: {
        const Tensor in = *slot;
        Tensor out;
        kernels::fc_forward(in, lp.w, lp.bias.numel() > 0 ? &lp.bias : nullptr, out);
        if (te != nullptr) te->in = in;
        *slot = std::move(out);
        break;
      }
      case LayerKind::kBlockBegin:
        skip_stack.push_back(cur);
        break;
      case LayerKind::kBlockEnd: {
        EFTCL_CHECK(!skip_stack.empty(), "block end without begin");
        axpy(1.0, skip_stack.back(), cur);
        skip_stack.pop_back();
        break;
      }
    }
  }

  ForwardResult res;
  if (arch.has_head) {
    EFTCL_CHECK(task != nullptr && task->head.w.numel() > 0, "missing task head");
    Tensor features_raw = cur;
    Tensor features = (opts.apply_eft && arch.calibrate_features)
                          ? apply_eft_fc(features_raw, task->calib)
                          : features_raw;
    kernels::fc_forward(features, task->head.w, &task->head.bias, res.output);
    res.features = features;
    if (trace != nullptr) {
      trace->features_raw = std::move(features_raw);
      trace->features = res.features;
    }
  } else {
    res.output = std::move(cur);
  }
  return res;
}

void net_backward(const ArchSpec& arch, const EftConvSpec& spec, const GlobalParams& theta,
                  const TaskParams* task, const ForwardOptions& opts, const ForwardTrace& trace,
                  const Tensor& grad_output, const Tensor* grad_features_extra,
                  bool accumulate_global, GradBuffers& grads, Tensor* grad_input) {
  EFTCL_CHECK(trace.layers.size() == arch.layers.size(), "trace does not match architecture");

  Tensor g;  // gradient wrt the current main-path value
  if (arch.has_head) {
    // logits -> head -> calibration -> features
    Tensor gfeat = Tensor::zeros_like(trace.features);
    kernels::fc_backward_params(grad_output, trace.features, grads.task.head_w,
                                &grads.task.head_bias);
    kernels::fc_backward_input(grad_output, task->head.w, gfeat);
    if (grad_features_extra != nullptr) axpy(1.0, *grad_features_extra, gfeat);
    if (opts.apply_eft && arch.calibrate_features) {
      const std::int64_t B = gfeat.dim(0), d = gfeat.dim(1);
      g = Tensor({B, d});
      for (std::int64_t i = 0; i < B; ++i) {
        for (std::int64_t j = 0; j < d; ++j) {
          g.at(i, j) = gfeat.at(i, j) * task->calib.scale.at(j);
        }
      }
      for (std::int64_t j = 0; j < d; ++j) {
        double acc = 0.0;
        for (std::int64_t i = 0; i < B; ++i) acc += gfeat.at(i, j) * trace.features_raw.at(i, j);
        grads.task.calib.at(j) += acc;
      }
    } else {
      g = std::move(gfeat);
    }
  } else {
    g = grad_output;
  }

  std::vector<Tensor> skip_grads;

  for (std::size_t ri = arch.layers.size(); ri-- > 0;) {
    const LayerDesc& l = arch.layers[ri];
    const LayerParams& lp = theta.layers[ri];
    const TraceEntry& te = trace.layers[ri];
    Tensor* slot = l.on_shortcut ? &skip_grads.back() : &g;

    switch (l.kind) {
      case LayerKind::kBlockEnd:
        skip_grads.push_back(g);  // residual add duplicates the gradient
        break;
      case LayerKind::kBlockBegin: {
        EFTCL_CHECK(!skip_grads.empty(), "backward block mismatch");
        axpy(1.0, skip_grads.back(), g);
        skip_grads.pop_back();
        break;
      }
      case LayerKind::kConv: {
        const int site = arch.site_of_layer[ri];
        Tensor g_out = std::move(*slot);
        Tensor g_base;
        Tensor g_in = Tensor::zeros_like(te.in);
        if (te.route == EftRoute::kNone) {
          g_base = std::move(g_out);
        } else {
          EftGrads& eg = grads.task.adapters[static_cast<std::size_t>(site)];
          switch (te.route) {
            case EftRoute::kSerial:
              eft_accum_filter_grads(g_out, te.eft_in, spec, eg);
              g_base = eft_backward_input(g_out, task->adapters[static_cast<std::size_t>(site)],
                                          spec);
              break;
            case EftRoute::kParallelInput:
              eft_accum_filter_grads(g_out, te.in, spec, eg);
              axpy(1.0, eft_backward_input(
                            g_out, task->adapters[static_cast<std::size_t>(site)], spec),
                   g_in);
              g_base = std::move(g_out);
              break;
            case EftRoute::kParallelOutput: {
              eft_accum_filter_grads(g_out, te.eft_in, spec, eg);
              g_base = g_out;
              axpy(1.0, eft_backward_input(
                            g_out, task->adapters[static_cast<std::size_t>(site)], spec),
                   g_base);
              break;
            }
            default:
              break;
          }
        }
        if (accumulate_global) {
          kernels::conv2d_backward_params(
              g_base, te.in, l.stride, l.pad, grads.global[ri].w,
              lp.bias.numel() > 0 ? &grads.global[ri].bias : nullptr);
        }
        kernels::conv2d_backward_input(g_base, lp.w, l.stride, l.pad, g_in);
        *slot = std::move(g_in);
        break;
      }
      case LayerKind::kNorm: {
        const Tensor g_out = std::move(*slot);
        const Tensor& in = te.in;
        const std::int64_t B = in.dim(0), C = in.dim(1), HW = in.dim(2) * in.dim(3);
        Tensor g_in(in.shape);
        const bool batch_mode = te.bn_mean.numel() > 0;
        for (std::int64_t c = 0; c < C; ++c) {
          const double mean = batch_mode ? te.bn_mean.at(c) : lp.run_mean.at(c);
          const double var = batch_mode ? te.bn_var.at(c) : lp.run_var.at(c);
          const double ivs = 1.0 / std::sqrt(var + kBnEps);
          const double gma = lp.gamma.at(c);
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::int64_t b = 0; b < B; ++b) {
            const double* gp = g_out.ptr() + (b * C + c) * HW;
            const double* ip = in.ptr() + (b * C + c) * HW;
            for (std::int64_t q = 0; q < HW; ++q) {
              sum_g += gp[q];
              sum_gx += gp[q] * (ip[q] - mean) * ivs;
            }
          }
          if (accumulate_global) {
            grads.global[ri].gamma.at(c) += sum_gx;
            grads.global[ri].beta.at(c) += sum_g;
          }
          const double m = static_cast<double>(B * HW);
          for (std::int64_t b = 0; b < B; ++b) {
            const double* gp = g_out.ptr() + (b * C + c) * HW;
            const double* ip = in.ptr() + (b * C + c) * HW;
            double* go = g_in.ptr() + (b * C + c) * HW;
            for (std::int64_t q = 0; q < HW; ++q) {
              if (batch_mode) {
                const double xhat = (ip[q] - mean) * ivs;
                go[q] = gma * ivs / m * (m * gp[q] - sum_g - xhat * sum_gx);
              } else {
                go[q] = gma * ivs * gp[q];
              }
            }
          }
        }
        *slot = std::move(g_in);
        break;
      }
      case LayerKind::kActivation: {
        const Tensor g_out = std::move(*slot);
        const Tensor& in = te.in;
        Tensor g_in(in.shape);
        const double* gp = g_out.ptr();
        const double* ip = in.ptr();
        double* go = g_in.ptr();
        const std::int64_t n = in.numel();
        switch (l.act) {
          case Activation::kRelu:
            for (std::int64_t q = 0; q < n; ++q) go[q] = ip[q] > 0.0 ? gp[q] : 0.0;
            break;
          case Activation::kLeakyRelu:
            for (std::int64_t q = 0; q < n; ++q)
              go[q] = ip[q] > 0.0 ? gp[q] : l.lrelu_slope * gp[q];
            break;
          case Activation::kTanh:
            for (std::int64_t q = 0; q < n; ++q) {
              const double t = std::tanh(ip[q]);
              go[q] = gp[q] * (1.0 - t * t);
            }
            break;
        }
        *slot = std::move(g_in);
        break;
      }
      case LayerKind::kPool: {
        const Tensor g_out = std::move(*slot);
        if (l.pool == PoolKind::kMax2) {
          Tensor g_in({g_out.dim(0), g_out.dim(1), g_out.dim(2) * 2, g_out.dim(3) * 2});
          kernels::maxpool2_backward(g_out, te.argmax, g_in);
          *slot = std::move(g_in);
        } else {
          Tensor g_in({g_out.dim(0), g_out.dim(1), te.pool_h, te.pool_w});
          kernels::global_avgpool_backward(g_out, te.pool_h, te.pool_w, g_in);
          *slot = std::move(g_in);
        }
        break;
      }
      case LayerKind::kFlatten:
        *slot = reshape_to(*slot, {slot->dim(0), slot->dim(1) / (te.pool_h * te.pool_w),
                                   te.pool_h, te.pool_w});
        break;
      case LayerKind::kReshape:
        *slot = reshape_to(*slot, {slot->dim(0), l.rs_c * l.rs_h * l.rs_w});
        break;
      case LayerKind::kUpsample: {
        const Tensor g_out = std::move(*slot);
        Tensor g_in({g_out.dim(0), g_out.dim(1), g_out.dim(2) / 2, g_out.dim(3) / 2});
        kernels::upsample2_backward(g_out, g_in);
        *slot = std::move(g_in);
        break;
      }
      case LayerKind::kFc: {
        const Tensor g_out = std::move(*slot);
        if (accumulate_global) {
          kernels::fc_backward_params(g_out, te.in, grads.global[ri].w,
                                      lp.bias.numel() > 0 ? &grads.global[ri].bias : nullptr);
        }
        Tensor g_in = Tensor::zeros_like(te.in);
        kernels::fc_backward_input(g_out, lp.w, g_in);
        *slot = std::move(g_in);
        break;
      }
    }
  }
  EFTCL_CHECK(skip_grads.empty(), "backward block stack not drained");
  if (grad_input != nullptr) *grad_input = std::move(g);
}

void update_running_stats(const ArchSpec& arch, const ForwardTrace& trace, GlobalParams& theta,
                          double momentum) {
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    if (arch.layers[i].kind != LayerKind::kNorm) continue;
    const TraceEntry& te = trace.layers[i];
    if (te.bn_mean.numel() == 0) continue;
    LayerParams& lp = theta.layers[i];
    for (std::int64_t c = 0; c < lp.run_mean.numel(); ++c) {
      lp.run_mean.at(c) = (1.0 - momentum) * lp.run_mean.at(c) + momentum * te.bn_mean.at(c);
      lp.run_var.at(c) = (1.0 - momentum) * lp.run_var.at(c) + momentum * te.bn_var.at(c);
    }
  }
}

std::int64_t forward_call_count() { return g_forward_calls.load(std::memory_order_relaxed); }
void reset_forward_call_count() { g_forward_calls.store(0, std::memory_order_relaxed); }

}  // namespace eftcl
