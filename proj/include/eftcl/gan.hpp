#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eftcl/data.hpp"
#include "eftcl/registry.hpp"

namespace eftcl {

struct GanConfig {
  std::int64_t noise_dim = 16;
  std::array<std::int64_t, 3> image_shape{1, 8, 8};
  EftConvSpec spec{2, 2, EftMode::kSerial};
  int epochs_first = 40;
  int epochs_rest = 30;
  int batch_size = 16;
  double lr = 0.002;
  double momentum = 0.5;
  double weight_decay = 0.0;
  std::uint64_t seed = 11;
  InitPolicy init_policy = InitPolicy::kForwardTransfer;
  std::int64_t probe_count = 8;
};

/// Generator/discriminator registries with the same freeze rules as the
/// classifier, plus a probe-noise bank sampled once at construction and the
/// per-task samples recorded when each task finalizes.
struct GanPair {
  Registry gen;
  Registry disc;
  Tensor probe_noise;                 // (probe_count, noise_dim)
  std::vector<Tensor> probe_samples;  // G(probe; tau_t) per finalized task
};

GanPair make_gan_pair(const GanConfig& cfg);

struct GanTaskSummary {
  std::int64_t steps = 0;
  double final_d_loss = 0.0;
  double final_g_loss = 0.0;
  double sample_mean = 0.0;  // pixel mean of the end-of-task probe samples
};

/// Alternating non-saturating updates on the current task's adapter pair;
/// the base networks train only during the first task. Finalizes both nets
/// and records probe samples.
GanTaskSummary train_gan_task(GanPair& pair, const Dataset& data, const GanConfig& cfg);

/// Deterministic sampling under a finalized (or current) task.
Tensor gan_sample(const GanPair& pair, std::int64_t t, const Tensor& noise);

void save_gan(const GanPair& pair, const std::string& dir);
GanPair load_gan(const std::string& dir);

}  // namespace eftcl
