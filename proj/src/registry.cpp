#include "eftcl/registry.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace eftcl {

namespace fs = std::filesystem;
using nlohmann::json;

Registry make_registry(ArchSpec arch, EftConvSpec spec, Rng& rng) {
  spec.validate();
  arch.validate_and_derive();
  for (const ConvSite& site : arch.conv_sites) spec.check_channels(site.channels);
  Registry reg;
  reg.arch = std::move(arch);
  reg.spec = spec;
  reg.theta = init_global(reg.arch, rng);
  return reg;
}

TaskParams& add_task(Registry& reg, const std::vector<std::int64_t>& class_list,
                     InitPolicy policy, Rng& rng) {
  EFTCL_CHECK(reg.tasks.empty() || reg.tasks.back().finalized,
              "previous task must be finalized before adding a new one");
  const TaskParams* prev = reg.tasks.empty() ? nullptr : &reg.tasks.back();
  EFTCL_CHECK(policy != InitPolicy::kForwardTransfer || prev != nullptr,
              "forward transfer is undefined for the first task");
  const std::int64_t t = reg.task_count();
  reg.tasks.push_back(init_task(reg.arch, reg.spec, t,
                                static_cast<std::int64_t>(class_list.size()), policy, prev, rng));
  reg.manifest.push_back(class_list);
  reg.task_digests.push_back(0);
  reg.stored_stats.emplace_back();
  return reg.tasks.back();
}

std::uint64_t finalize_task(Registry& reg, std::int64_t t) {
  EFTCL_CHECK(t >= 0 && t < reg.task_count(), "no such task: " << t);
  EFTCL_CHECK(t == reg.task_count() - 1, "only the current task can be finalized");
  TaskParams& task = reg.tasks[static_cast<std::size_t>(t)];
  EFTCL_CHECK(!task.finalized, "task " << t << " is already finalized");
  task.finalized = true;
  const std::uint64_t digest = digest_task(task);
  reg.task_digests[static_cast<std::size_t>(t)] = digest;
  if (t == 0) {
    reg.theta_frozen = true;
    reg.theta_digest = digest_global(reg.theta);
  }
  return digest;
}

void verify_frozen(const Registry& reg) {
  if (reg.theta_frozen) {
    EFTCL_CHECK(digest_global(reg.theta) == reg.theta_digest,
                "global parameters changed after freeze");
  }
  for (std::int64_t t = 0; t < reg.task_count(); ++t) {
    const TaskParams& task = reg.tasks[static_cast<std::size_t>(t)];
    if (!task.finalized) continue;
    EFTCL_CHECK(digest_task(task) == reg.task_digests[static_cast<std::size_t>(t)],
                "task " << t << " parameters changed after finalize");
  }
}

namespace {

json spec_to_json(const EftConvSpec& s) {
  return json{{"a", s.a},
              {"b", s.b},
              {"mode", s.mode == EftMode::kSerial ? "serial" : "parallel"}};
}

EftConvSpec spec_from_json(const json& j) {
  EftConvSpec s;
  s.a = j.at("a").get<int>();
  s.b = j.at("b").get<int>();
  s.mode = j.at("mode").get<std::string>() == "parallel" ? EftMode::kParallel : EftMode::kSerial;
  return s;
}

ArchSpec rebuild_arch(const json& j) {
  const std::string name = j.at("name").get<std::string>();
  std::array<std::int64_t, 3> shape{};
  const auto& js = j.at("input_shape");
  for (int i = 0; i < 3; ++i) shape[static_cast<std::size_t>(i)] = js.at(i).get<std::int64_t>();
  if (name == "toygan-g") return build_toy_generator(j.at("input_dim").get<std::int64_t>(), shape);
  if (name == "toygan-d") return build_toy_discriminator(shape);
  return build_arch(name, shape);
}

std::string task_file(std::int64_t t) { return "task_" + std::to_string(t) + ".tsr"; }
std::string stats_file(std::int64_t t) { return "stats_" + std::to_string(t) + ".tsr"; }

}  // namespace

void save_registry(const Registry& reg, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  EFTCL_IO_CHECK(!ec, "cannot create checkpoint directory " << dir);

  json manifest;
  manifest["version"] = 1;
  manifest["arch"] = {{"name", reg.arch.name},
                      {"input_shape", reg.arch.input_shape},
                      {"input_dim", reg.arch.input_dim}};
  manifest["spec"] = spec_to_json(reg.spec);
  manifest["eft_enabled"] = reg.eft_enabled;
  manifest["theta_frozen"] = reg.theta_frozen;
  manifest["theta_digest"] = std::to_string(reg.theta_digest);
  json tasks = json::array();
  for (std::int64_t t = 0; t < reg.task_count(); ++t) {
    const auto st = static_cast<std::size_t>(t);
    tasks.push_back({{"task_id", reg.tasks[st].task_id},
                     {"classes", reg.manifest[st]},
                     {"finalized", reg.tasks[st].finalized},
                     {"digest", std::to_string(reg.task_digests[st])},
                     {"has_stats", reg.stored_stats[st].count > 0}});
  }
  manifest["tasks"] = std::move(tasks);

  {
    std::ofstream os(fs::path(dir) / "manifest.json");
    EFTCL_IO_CHECK(os.good(), "cannot write manifest in " << dir);
    os << manifest.dump(2) << "\n";
  }
  write_archive((fs::path(dir) / "global.tsr").string(), named_tensors(reg.theta));
  for (std::int64_t t = 0; t < reg.task_count(); ++t) {
    const auto st = static_cast<std::size_t>(t);
    write_archive((fs::path(dir) / task_file(t)).string(), named_tensors(reg.tasks[st]));
    if (reg.stored_stats[st].count > 0) {
      const auto& s = reg.stored_stats[st];
      Tensor count({1}, static_cast<double>(s.count));
      write_archive((fs::path(dir) / stats_file(t)).string(),
                    {{"mean", s.mean}, {"var", s.var}, {"count", count}});
    }
  }
}

Registry load_registry(const std::string& dir) {
  std::ifstream is(fs::path(dir) / "manifest.json");
  EFTCL_IO_CHECK(is.good(), "missing checkpoint manifest in " << dir);
  json manifest = json::parse(is, nullptr, /*allow_exceptions=*/false);
  EFTCL_IO_CHECK(!manifest.is_discarded(), "malformed manifest.json in " << dir);
  EFTCL_IO_CHECK(manifest.at("version").get<int>() == 1,
                 "unsupported checkpoint version in " << dir);

  Registry reg;
  reg.arch = rebuild_arch(manifest.at("arch"));
  reg.spec = spec_from_json(manifest.at("spec"));
  reg.eft_enabled = manifest.at("eft_enabled").get<bool>();
  reg.theta_frozen = manifest.at("theta_frozen").get<bool>();
  reg.theta_digest = std::stoull(manifest.at("theta_digest").get<std::string>());

  Rng shape_rng(0);  // placeholder values; overwritten by the archives
  reg.theta = init_global(reg.arch, shape_rng);
  load_from_named(reg.theta, read_archive((fs::path(dir) / "global.tsr").string()));
  if (reg.theta_frozen) {
    EFTCL_IO_CHECK(digest_global(reg.theta) == reg.theta_digest,
                   "global parameter digest mismatch in " << dir);
  }

  for (const json& jt : manifest.at("tasks")) {
    const std::int64_t t = jt.at("task_id").get<std::int64_t>();
    std::vector<std::int64_t> classes = jt.at("classes").get<std::vector<std::int64_t>>();
    TaskParams task = init_task(reg.arch, reg.spec, t,
                                std::max<std::int64_t>(1, static_cast<std::int64_t>(classes.size())),
                                InitPolicy::kIdentity, nullptr, shape_rng);
    if (!reg.arch.has_head) task.head = TaskHead{};
    load_from_named(task, read_archive((fs::path(dir) / task_file(t)).string()));
    task.finalized = jt.at("finalized").get<bool>();
    const std::uint64_t digest = std::stoull(jt.at("digest").get<std::string>());
    if (task.finalized) {
      EFTCL_IO_CHECK(digest_task(task) == digest,
                     "task " << t << " digest mismatch in " << dir);
    }
    reg.tasks.push_back(std::move(task));
    reg.manifest.push_back(std::move(classes));
    reg.task_digests.push_back(digest);
    GaussianStats stats;
    if (jt.at("has_stats").get<bool>()) {
      auto recs = read_archive((fs::path(dir) / stats_file(t)).string());
      for (auto& r : recs) {
        if (r.name == "mean") stats.mean = std::move(r.tensor);
        if (r.name == "var") stats.var = std::move(r.tensor);
        if (r.name == "count") stats.count = static_cast<std::int64_t>(r.tensor.at(0));
      }
    }
    reg.stored_stats.push_back(std::move(stats));
  }
  return reg;
}

}  // namespace eftcl
