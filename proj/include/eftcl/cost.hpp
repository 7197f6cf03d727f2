#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eftcl/arch.hpp"
#include "eftcl/eft.hpp"

namespace eftcl {

struct SiteCost {
  std::string label;
  std::int64_t channels = 0;
  std::int64_t spatial_h = 0, spatial_w = 0;  // feature map size at the site
  std::int64_t eft_params = 0;
  std::int64_t eft_macs = 0;
};

/// Closed-form parameter and FLOP accounting. FLOPs are counted as 2x
/// multiply-accumulates over convolutions and fully connected layers;
/// normalization, activations and pooling are excluded. Base counts include
/// one classes_per_task head; transform counts cover the per-site filters,
/// the feature calibration, and a fresh head.
struct CostReport {
  std::string arch;
  std::string policy_note;
  int a = 0, b = 0;
  std::int64_t classes_per_task = 0;
  std::int64_t base_params = 0;
  std::int64_t eft_params_per_task = 0;
  double growth_percent = 0.0;
  std::int64_t base_flops = 0;
  std::int64_t eft_flops = 0;
  double flops_growth_percent = 0.0;
  std::int64_t tasks = 0;
  std::int64_t total_params = 0;  // base + tasks * per-task
  std::vector<SiteCost> sites;

  std::string to_text() const;
  std::string to_json() const;
};

std::int64_t count_base_params(const ArchSpec& arch, std::int64_t classes_per_task);
std::int64_t count_eft_params(const ArchSpec& arch, const EftConvSpec& spec,
                              std::int64_t classes_per_task);

struct FlopCounts {
  std::int64_t base = 0;
  std::int64_t eft = 0;
};
FlopCounts count_flops(const ArchSpec& arch, const EftConvSpec& spec,
                       std::int64_t classes_per_task);

CostReport growth_report(const ArchSpec& arch, const EftConvSpec& spec, std::int64_t tasks,
                         std::int64_t classes_per_task);

}  // namespace eftcl
