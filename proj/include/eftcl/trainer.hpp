#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eftcl/data.hpp"
#include "eftcl/margin.hpp"
#include "eftcl/registry.hpp"

namespace eftcl {

struct TrainConfig {
  int epochs_first = 250;
  int epochs_rest = 200;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.005;
  std::vector<int> milestones{100, 150, 200};       // first task
  std::vector<int> milestones_rest{70, 120, 150};   // subsequent tasks
  double lr_decay = 0.1;
  int batch_size = 128;
  std::uint64_t seed = 0;
  InitPolicy init_policy = InitPolicy::kForwardTransfer;
  MarginConfig margin;
  std::string profile;  // "" or "desk"
  int probe_size = 16;

  /// The desk profile shrinks the schedule to workstation scale.
  void apply_profile();
};

struct MetricRow {
  std::int64_t task = 0;
  std::int64_t epoch = 0;
  std::int64_t step = 0;  // step index within the task
  double ce = 0.0, lm = 0.0, total = 0.0, train_acc = 0.0;
};

/// R[i][t] = top-1 accuracy on task i's test set after finishing task t
/// (lower triangular, i <= t).
struct AccuracyMatrix {
  std::int64_t tasks = 0;
  std::vector<double> r;

  AccuracyMatrix() = default;
  explicit AccuracyMatrix(std::int64_t t) : tasks(t), r(static_cast<std::size_t>(t * t), -1.0) {}
  double& at(std::int64_t i, std::int64_t t) { return r[static_cast<std::size_t>(i * tasks + t)]; }
  double at(std::int64_t i, std::int64_t t) const {
    return r[static_cast<std::size_t>(i * tasks + t)];
  }
  /// Mean accuracy over tasks 0..t after task t.
  double avg_after(std::int64_t t) const;
  std::string to_csv() const;
  static AccuracyMatrix from_csv(const std::string& text);
};

struct TaskSummary {
  std::int64_t steps = 0;
  double final_total = 0.0;
  double final_train_acc = 0.0;
};

/// One task's optimization: SGD with momentum over the trainable set (theta
/// joins only while unfrozen), joint cross-entropy + margin objective,
/// finalize on completion, end-of-task feature summary recorded.
TaskSummary train_task(Registry& reg, const TaskData& data, const TrainConfig& cfg,
                       std::vector<MetricRow>* metrics);

double til_accuracy(const Registry& reg, std::int64_t t, const TaskData& data);
double cil_accuracy(const Registry& reg, const TaskData& data);

struct SequenceResult {
  AccuracyMatrix til, cil;
  std::vector<MetricRow> metrics;
  Tensor probe_batch;
  std::vector<Tensor> probe_logits;       // recorded as each task finalizes
  std::vector<double> task_pred_correct;  // final task-prediction accuracy per task
  double task_pred_accuracy = 0.0;        // overall, after the last task
  Registry registry;
};

/// Full continual run over a materialized sequence: add, train, finalize and
/// evaluate every prefix in both TIL and CIL modes.
SequenceResult run_sequence(const ArchSpec& arch, const EftConvSpec& spec,
                            const TaskSequence& seq, const TrainConfig& cfg);

struct AblationResult {
  SequenceResult transfer;
  SequenceResult random;
  double loss_threshold = 0.0;
  // Steps to first reach the loss threshold, per task index >= 1 (capped at
  // the task budget when never reached).
  std::vector<std::int64_t> steps_transfer;
  std::vector<std::int64_t> steps_random;
};

/// Paired runs differing only in the init policy for tasks >= 2.
AblationResult forward_transfer_ablation(const ArchSpec& arch, const EftConvSpec& spec,
                                         const TaskSequence& seq, const TrainConfig& cfg,
                                         double loss_threshold);

/// Finetune baseline: shared parameters, one head over the class union, no
/// transforms, nothing frozen. Returns the CIL accuracy matrix.
AccuracyMatrix run_finetune_baseline(const ArchSpec& arch, const TaskSequence& seq,
                                     const TrainConfig& cfg);

}  // namespace eftcl
