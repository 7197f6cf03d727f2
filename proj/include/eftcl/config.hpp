#pragma once

#include <string>

#include "eftcl/data.hpp"
#include "eftcl/trainer.hpp"

namespace eftcl {

/// One run's full configuration. The JSON document is validated against a
/// strict schema: unknown keys are rejected at every level.
struct RunConfig {
  // data
  std::string data_name = "synthetic";  // synthetic | cifar10 | cifar100 | svhn | chain
  std::int64_t num_tasks = 5;
  std::uint64_t data_seed = 7;
  std::string data_dir;                    // cache directory for named datasets
  std::vector<std::string> chain;          // heterogeneous dataset chain
  SyntheticSpec synthetic;

  std::string arch = "smallcnn";
  EftConvSpec spec;
  TrainConfig train;  // margin settings live in train.margin
  std::string out_dir;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string dump_run_config(const RunConfig& cfg);

ArchSpec build_run_arch(const RunConfig& cfg);

/// Materializes the task sequence the config describes. Named datasets load
/// from "<data_dir>/<name>_train.tsr" / "_test.tsr" caches.
TaskSequence build_sequence(const RunConfig& cfg);

}  // namespace eftcl
