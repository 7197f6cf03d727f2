#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eftcl/margin.hpp"
#include "eftcl/network.hpp"

namespace eftcl {

/// Owns the global/local parameter partition: the shared base network, the
/// ordered task parameter sets, the task-to-class manifest, and the digests
/// that pin finalized parameters down.
struct Registry {
  ArchSpec arch;
  EftConvSpec spec;
  GlobalParams theta;
  bool theta_frozen = false;
  std::uint64_t theta_digest = 0;

  std::vector<TaskParams> tasks;
  std::vector<std::vector<std::int64_t>> manifest;  // task -> global class ids
  std::vector<std::uint64_t> task_digests;          // 0 until finalized

  /// End-of-task feature summaries (margin prior in `stored` mode);
  /// count == 0 marks an absent entry.
  std::vector<GaussianStats> stored_stats;

  /// Cleared by the finetune baseline harness: transform sites are skipped
  /// and nothing is ever frozen.
  bool eft_enabled = true;

  std::int64_t task_count() const { return static_cast<std::int64_t>(tasks.size()); }
  std::int64_t classes_of(std::int64_t t) const {
    return static_cast<std::int64_t>(manifest[static_cast<std::size_t>(t)].size());
  }
};

Registry make_registry(ArchSpec arch, EftConvSpec spec, Rng& rng);

/// Registers tau_t. The previous task must be finalized; forward transfer is
/// rejected on the first task. The head is always freshly initialized.
TaskParams& add_task(Registry& reg, const std::vector<std::int64_t>& class_list,
                     InitPolicy policy, Rng& rng);

/// Marks the current task immutable and records its content digest; after
/// the first task this also freezes and digests theta.
std::uint64_t finalize_task(Registry& reg, std::int64_t t);

/// Throws DimError if any finalized digest no longer matches its tensors.
void verify_frozen(const Registry& reg);

/// Checkpoint layout: manifest.json + global.tsr + task_<t>.tsr (+ optional
/// stats_<t>.tsr). Loading a tampered archive fails with a digest error.
void save_registry(const Registry& reg, const std::string& dir);
Registry load_registry(const std::string& dir);

}  // namespace eftcl
