#include "eftcl/cost.hpp"

#include <sstream>

#include <json.hpp>

namespace eftcl {

namespace {

constexpr const char* kPolicyNote =
    "one transform per conv (shortcut convs included, output projections exempt), "
    "diagonal calibration on pre-head features, per-task head; FLOPs = 2 x MACs over "
    "conv/fc layers";

}  // namespace

std::int64_t count_base_params(const ArchSpec& arch, std::int64_t classes_per_task) {
  std::int64_t params = 0;
  for (const LayerDesc& l : arch.layers) {
    switch (l.kind) {
      case LayerKind::kConv:
        params += l.out_ch * l.in_ch * l.kernel * l.kernel;
        if (l.conv_bias) params += l.out_ch;
        break;
      case LayerKind::kFc:
        params += l.out_dim * l.in_dim;
        if (l.fc_bias) params += l.out_dim;
        break;
      case LayerKind::kNorm:
        params += 2 * l.out_ch;  // scale and shift; running stats are not parameters
        break;
      default:
        break;
    }
  }
  if (arch.has_head) params += classes_per_task * arch.feature_dim + classes_per_task;
  return params;
}

std::int64_t count_eft_params(const ArchSpec& arch, const EftConvSpec& spec,
                              std::int64_t classes_per_task) {
  spec.validate();
  std::int64_t params = 0;
  for (const ConvSite& site : arch.conv_sites) {
    spec.check_channels(site.channels);
    if (spec.a > 0) params += 9 * spec.a * site.channels;
    if (spec.b > 0) params += spec.b * site.channels;
  }
  if (arch.calibrate_features) params += arch.feature_dim;
  if (arch.has_head) params += classes_per_task * arch.feature_dim + classes_per_task;
  return params;
}

FlopCounts count_flops(const ArchSpec& arch, const EftConvSpec& spec,
                       std::int64_t classes_per_task) {
  FlopCounts fc;
  std::int64_t base_macs = 0;
  std::int64_t eft_macs = 0;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerDesc& l = arch.layers[i];
    const ShapeInfo& out = arch.out_shapes[i];
    if (l.kind == LayerKind::kConv) {
      base_macs += out.h * out.w * l.out_ch * l.kernel * l.kernel * l.in_ch;
      if (arch.site_of_layer[i] >= 0) {
        if (spec.a > 0) eft_macs += out.h * out.w * l.out_ch * 9 * spec.a;
        if (spec.b > 0) eft_macs += out.h * out.w * l.out_ch * spec.b;
      }
    } else if (l.kind == LayerKind::kFc) {
      base_macs += l.out_dim * l.in_dim;
    }
  }
  if (arch.calibrate_features) eft_macs += arch.feature_dim;
  if (arch.has_head) base_macs += classes_per_task * arch.feature_dim;
  fc.base = 2 * base_macs;
  fc.eft = 2 * eft_macs;
  return fc;
}

CostReport growth_report(const ArchSpec& arch, const EftConvSpec& spec, std::int64_t tasks,
                         std::int64_t classes_per_task) {
  CostReport r;
  r.arch = arch.name;
  r.policy_note = kPolicyNote;
  r.a = spec.a;
  r.b = spec.b;
  r.classes_per_task = classes_per_task;
  r.base_params = count_base_params(arch, classes_per_task);
  r.eft_params_per_task = count_eft_params(arch, spec, classes_per_task);
  r.growth_percent = 100.0 * static_cast<double>(r.eft_params_per_task) /
                     static_cast<double>(r.base_params);
  const FlopCounts fl = count_flops(arch, spec, classes_per_task);
  r.base_flops = fl.base;
  r.eft_flops = fl.eft;
  r.flops_growth_percent = 100.0 * static_cast<double>(fl.eft) / static_cast<double>(fl.base);
  r.tasks = tasks;
  r.total_params = r.base_params + tasks * r.eft_params_per_task;

  for (const ConvSite& site : arch.conv_sites) {
    SiteCost sc;
    sc.label = "conv@layer" + std::to_string(site.layer_index);
    sc.channels = site.channels;
    const ShapeInfo& out = arch.out_shapes[static_cast<std::size_t>(site.layer_index)];
    sc.spatial_h = out.h;
    sc.spatial_w = out.w;
    sc.eft_params = (spec.a > 0 ? 9 * spec.a * site.channels : 0) +
                    (spec.b > 0 ? spec.b * site.channels : 0);
    sc.eft_macs = out.h * out.w * site.channels * ((spec.a > 0 ? 9 * spec.a : 0) +
                                                   (spec.b > 0 ? spec.b : 0));
    r.sites.push_back(std::move(sc));
  }
  return r;
}

std::string CostReport::to_text() const {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(3);
  os << "arch: " << arch << "  (a=" << a << ", b=" << b
     << ", classes/task=" << classes_per_task << ")\n";
  os << "policy: " << policy_note << "\n";
  os << "base params:      " << base_params << "\n";
  os << "added per task:   " << eft_params_per_task << "  (" << growth_percent << "%)\n";
  os << "base flops:       " << base_flops << "\n";
  os << "added flops:      " << eft_flops << "  (" << flops_growth_percent << "%)\n";
  if (tasks > 0) {
    os << "total params after " << tasks << " tasks: " << total_params << "  ("
       << static_cast<double>(total_params) / static_cast<double>(base_params) << "x)\n";
  }
  os << "sites:\n";
  for (const SiteCost& s : sites) {
    os << "  " << s.label << "  K=" << s.channels << "  " << s.spatial_h << "x" << s.spatial_w
       << "  +" << s.eft_params << " params, +" << s.eft_macs << " macs\n";
  }
  return os.str();
}

std::string CostReport::to_json() const {
  nlohmann::json j;
  j["arch"] = arch;
  j["policy"] = policy_note;
  j["a"] = a;
  j["b"] = b;
  j["classes_per_task"] = classes_per_task;
  j["base_params"] = base_params;
  j["eft_params_per_task"] = eft_params_per_task;
  j["growth_percent"] = growth_percent;
  j["base_flops"] = base_flops;
  j["eft_flops"] = eft_flops;
  j["flops_growth_percent"] = flops_growth_percent;
  j["tasks"] = tasks;
  j["total_params"] = total_params;
  nlohmann::json sites_json = nlohmann::json::array();
  for (const SiteCost& s : sites) {
    sites_json.push_back({{"site", s.label},
                          {"channels", s.channels},
                          {"h", s.spatial_h},
                          {"w", s.spatial_w},
                          {"eft_params", s.eft_params},
                          {"eft_macs", s.eft_macs}});
  }
  j["sites"] = std::move(sites_json);
  return j.dump(2);
}

}  // namespace eftcl
