#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "eftcl/rng.hpp"
#include "eftcl/tensor.hpp"

namespace eftcl {

struct Dataset {
  Tensor x;                     // (N, C, H, W)
  std::vector<std::int64_t> y;  // local labels 0..k-1
  std::int64_t size() const { return x.numel() == 0 ? 0 : x.dim(0); }
};

struct TaskData {
  std::int64_t task_id = 0;
  std::vector<std::int64_t> classes;  // global class ids, indexed by local label
  Dataset train, test;
};

struct SourceDesc {
  std::string kind;  // "synthetic" | "split" | "dataset"
  std::string name;
};

struct TaskDesc {
  std::int64_t task_id = 0;
  std::vector<std::int64_t> classes;
  SourceDesc source;
};

struct TaskSequence {
  std::vector<TaskDesc> tasks;
  std::int64_t total_classes = 0;
  std::uint64_t seed = 0;
  std::vector<TaskData> data;  // filled for materialized sequences
  std::int64_t task_count() const { return static_cast<std::int64_t>(tasks.size()); }
  bool materialized() const { return !data.empty(); }
};

struct SyntheticSpec {
  std::array<std::int64_t, 3> shape{3, 16, 16};
  std::int64_t classes_per_task = 2;
  double sep = 4.0;    // cluster-center scale
  double noise = 0.25; // per-pixel sample noise
  std::uint64_t seed = 7;
  std::int64_t samples_per_class = 100;  // 80/20 train/test split
  /// Similarity-controlled sequences: tasks share per-class base centers and
  /// differ only by jitter-scaled perturbations.
  bool shared_centers = false;
  double jitter = 0.0;
};

/// Seeded permutation of C class ids chunked into T contiguous blocks.
/// Requires T to divide C.
TaskSequence build_split(std::int64_t total_classes, std::int64_t num_tasks, std::uint64_t seed);

/// One task per named dataset; class counts may differ. Global class ids are
/// offset so tasks stay disjoint.
TaskSequence build_heterogeneous(const std::vector<std::string>& names);

/// Class count and input shape for a known dataset name.
struct DatasetInfo {
  std::int64_t classes = 0;
  std::array<std::int64_t, 3> shape{};
};
DatasetInfo dataset_info(const std::string& name);

/// Materialized Gaussian-cluster image tasks; fully determined by the spec
/// seed.
TaskSequence generate_synthetic(const SyntheticSpec& spec, std::int64_t num_tasks);

/// Slices a full labeled dataset (global labels) along a split sequence.
TaskSequence materialize_split(TaskSequence split, const Dataset& train, const Dataset& test);

/// Reads a cached dataset archive holding tensors "x" (N,C,H,W) and "y" (N).
Dataset load_dataset_cache(const std::string& path);
void save_dataset_cache(const std::string& path, const Dataset& ds);

}  // namespace eftcl
