#pragma once

#include <cstdint>
#include <vector>

#include "eftcl/arch.hpp"
#include "eftcl/eft.hpp"
#include "eftcl/rng.hpp"
#include "eftcl/serialize.hpp"

namespace eftcl {

/// Per-layer base tensors; only the fields a layer kind needs are non-empty.
struct LayerParams {
  Tensor w, bias;                         // conv / fc
  Tensor gamma, beta, run_mean, run_var;  // norm
};

/// The shared base network (theta). Frozen once the first task finalizes.
struct GlobalParams {
  std::vector<LayerParams> layers;
};

struct TaskHead {
  Tensor w;     // (classes, feature_dim)
  Tensor bias;  // (classes)
};

/// One task's local parameters (tau_t): per-site transform filters, the
/// pre-head diagonal calibration, and the task head.
struct TaskParams {
  std::int64_t task_id = 0;
  std::vector<EftConvParams> adapters;
  EftFcParams calib;
  TaskHead head;
  bool finalized = false;
};

enum class InitPolicy { kForwardTransfer, kRandom, kIdentity };

GlobalParams init_global(const ArchSpec& arch, Rng& rng);

/// prev is required for forward transfer (the head is always fresh).
TaskParams init_task(const ArchSpec& arch, const EftConvSpec& spec, std::int64_t task_id,
                     std::int64_t num_classes, InitPolicy policy, const TaskParams* prev,
                     Rng& rng);

std::vector<NamedTensor> named_tensors(const GlobalParams& p);
std::vector<NamedTensor> named_tensors(const TaskParams& p);
void load_from_named(GlobalParams& p, const std::vector<NamedTensor>& tensors);
void load_from_named(TaskParams& p, const std::vector<NamedTensor>& tensors);
std::uint64_t digest_global(const GlobalParams& p);
std::uint64_t digest_task(const TaskParams& p);

struct LayerGrads {
  Tensor w, bias, gamma, beta;
};
struct EftGrads {
  Tensor spatial, pointwise;
};
struct TaskGrads {
  std::vector<EftGrads> adapters;
  Tensor calib;
  Tensor head_w, head_bias;
};
struct GradBuffers {
  std::vector<LayerGrads> global;
  TaskGrads task;
  void zero();
};
GradBuffers make_grad_buffers(const ArchSpec& arch, const GlobalParams& theta,
                              const TaskParams* task);

enum class EftRoute { kNone, kSerial, kParallelInput, kParallelOutput };

struct TraceEntry {
  Tensor in;       // layer input
  Tensor eft_in;   // transform input when it is not the layer input
  EftRoute route = EftRoute::kNone;
  Tensor bn_mean, bn_var;  // batch statistics actually used (batch mode only)
  std::vector<std::int64_t> argmax;
  std::int64_t pool_h = 0, pool_w = 0;
};

struct ForwardTrace {
  std::vector<TraceEntry> layers;
  Tensor features_raw;  // pre-calibration (B, d)
  Tensor features;      // post-calibration
};

struct ForwardOptions {
  /// Normalize with batch statistics (first-task training); otherwise the
  /// frozen running statistics are used.
  bool bn_batch_stats = false;
  bool apply_eft = true;
};

struct ForwardResult {
  Tensor output;    // logits (B, classes) for head networks, image for generators
  Tensor features;  // post-calibration pre-head activations (head networks)
};

/// Task-conditioned forward pass. Pure: neither theta nor task is mutated;
/// when bn_batch_stats is set the batch statistics are reported through the
/// trace so the trainer can fold them into the running estimates.
ForwardResult net_forward(const ArchSpec& arch, const EftConvSpec& spec,
                          const GlobalParams& theta, const TaskParams* task, const Tensor& x,
                          const ForwardOptions& opts, ForwardTrace* trace = nullptr);

/// Backprop from d(loss)/d(output), plus an optional extra gradient applied
/// to the post-calibration features (the margin term enters there).
/// Accumulates into grads; base-parameter gradients are only collected when
/// accumulate_global is set. grad_input, when non-null, receives
/// d(loss)/d(x).
void net_backward(const ArchSpec& arch, const EftConvSpec& spec, const GlobalParams& theta,
                  const TaskParams* task, const ForwardOptions& opts, const ForwardTrace& trace,
                  const Tensor& grad_output, const Tensor* grad_features_extra,
                  bool accumulate_global, GradBuffers& grads, Tensor* grad_input = nullptr);

/// Momentum update of the frozen running statistics from a traced batch.
void update_running_stats(const ArchSpec& arch, const ForwardTrace& trace, GlobalParams& theta,
                          double momentum = 0.1);

std::int64_t forward_call_count();
void reset_forward_call_count();

}  // namespace eftcl
