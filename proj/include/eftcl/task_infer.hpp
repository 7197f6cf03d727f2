#pragma once

#include <cstdint>
#include <vector>

#include "eftcl/registry.hpp"

namespace eftcl {

struct TaskScore {
  std::int64_t task_id = 0;
  double entropy = 0.0;   // nats
  double max_prob = 0.0;  // logged for diagnostics
};

/// Shannon entropy of the softmax distribution, computed with a max shift.
double softmax_entropy(const double* logits, std::int64_t n);
double softmax_entropy(const std::vector<double>& logits);

/// Scores every finalized task on a batch: one forward pass per task.
/// scores[sample][task].
std::vector<std::vector<TaskScore>> score_tasks(const Registry& reg, const Tensor& x);

/// Minimum-entropy task per sample, ties broken by the lowest task index.
/// Requires at least one finalized task.
std::vector<std::int64_t> predict_task(const Registry& reg, const Tensor& x);

/// Class-incremental prediction: infer the task, then classify under it.
/// Returns global class labels via the manifest.
std::vector<std::int64_t> cil_predict(const Registry& reg, const Tensor& x);

/// Task-incremental prediction: classify under the given task.
std::vector<std::int64_t> til_predict(const Registry& reg, std::int64_t t, const Tensor& x);

}  // namespace eftcl
