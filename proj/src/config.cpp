#include "eftcl/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

namespace eftcl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void require_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  EFTCL_CHECK(j.is_object(), "config section '" << where << "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    EFTCL_CHECK(allowed.count(it.key()) > 0,
                "unknown config key '" << where << "." << it.key() << "'");
  }
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

InitPolicy parse_policy(const std::string& s) {
  if (s == "forward_transfer") return InitPolicy::kForwardTransfer;
  if (s == "random") return InitPolicy::kRandom;
  if (s == "identity") return InitPolicy::kIdentity;
  throw DimError("unknown init_policy: " + s);
}

std::string policy_name(InitPolicy p) {
  switch (p) {
    case InitPolicy::kForwardTransfer: return "forward_transfer";
    case InitPolicy::kRandom: return "random";
    case InitPolicy::kIdentity: return "identity";
  }
  return "random";
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j = json::parse(json_text, nullptr, /*allow_exceptions=*/false);
  EFTCL_CHECK(!j.is_discarded(), "config is not valid JSON");
  require_keys(j, "", {"data", "arch", "eft", "train", "margin", "out_dir"});

  RunConfig cfg;
  EFTCL_CHECK(j.contains("arch") && j.contains("out_dir") && j.contains("data"),
              "config requires 'data', 'arch' and 'out_dir'");
  cfg.arch = j.at("arch").get<std::string>();
  cfg.out_dir = j.at("out_dir").get<std::string>();

  {
    const json& jd = j.at("data");
    require_keys(jd, "data", {"name", "num_tasks", "seed", "dir", "chain", "synthetic"});
    EFTCL_CHECK(jd.contains("name"), "config requires data.name");
    cfg.data_name = jd.at("name").get<std::string>();
    maybe(jd, "num_tasks", cfg.num_tasks);
    maybe(jd, "seed", cfg.data_seed);
    maybe(jd, "dir", cfg.data_dir);
    maybe(jd, "chain", cfg.chain);
    if (jd.contains("synthetic")) {
      const json& js = jd.at("synthetic");
      require_keys(js, "data.synthetic",
                   {"shape", "classes_per_task", "sep", "noise", "samples_per_class",
                    "shared_centers", "jitter"});
      if (js.contains("shape")) {
        const auto v = js.at("shape").get<std::vector<std::int64_t>>();
        EFTCL_CHECK(v.size() == 3, "data.synthetic.shape must have 3 entries");
        cfg.synthetic.shape = {v[0], v[1], v[2]};
      }
      maybe(js, "classes_per_task", cfg.synthetic.classes_per_task);
      maybe(js, "sep", cfg.synthetic.sep);
      maybe(js, "noise", cfg.synthetic.noise);
      maybe(js, "samples_per_class", cfg.synthetic.samples_per_class);
      maybe(js, "shared_centers", cfg.synthetic.shared_centers);
      maybe(js, "jitter", cfg.synthetic.jitter);
    }
    cfg.synthetic.seed = cfg.data_seed;
  }

  if (j.contains("eft")) {
    const json& je = j.at("eft");
    require_keys(je, "eft", {"a", "b", "mode"});
    maybe(je, "a", cfg.spec.a);
    maybe(je, "b", cfg.spec.b);
    if (je.contains("mode")) {
      const std::string m = je.at("mode").get<std::string>();
      EFTCL_CHECK(m == "serial" || m == "parallel", "eft.mode must be serial or parallel");
      cfg.spec.mode = m == "serial" ? EftMode::kSerial : EftMode::kParallel;
    }
    cfg.spec.validate();
  }

  if (j.contains("train")) {
    const json& jt = j.at("train");
    require_keys(jt, "train",
                 {"epochs_first", "epochs_rest", "lr", "momentum", "weight_decay", "milestones",
                  "milestones_rest", "lr_decay", "batch_size", "seed", "init_policy", "profile",
                  "probe_size"});
    maybe(jt, "profile", cfg.train.profile);
    cfg.train.apply_profile();
    maybe(jt, "epochs_first", cfg.train.epochs_first);
    maybe(jt, "epochs_rest", cfg.train.epochs_rest);
    maybe(jt, "lr", cfg.train.lr);
    maybe(jt, "momentum", cfg.train.momentum);
    maybe(jt, "weight_decay", cfg.train.weight_decay);
    maybe(jt, "milestones", cfg.train.milestones);
    maybe(jt, "milestones_rest", cfg.train.milestones_rest);
    maybe(jt, "lr_decay", cfg.train.lr_decay);
    maybe(jt, "batch_size", cfg.train.batch_size);
    maybe(jt, "seed", cfg.train.seed);
    maybe(jt, "probe_size", cfg.train.probe_size);
    if (jt.contains("init_policy")) {
      cfg.train.init_policy = parse_policy(jt.at("init_policy").get<std::string>());
    }
    EFTCL_CHECK(cfg.train.epochs_first >= 1 && cfg.train.epochs_rest >= 1 &&
                    cfg.train.batch_size >= 2 && cfg.train.lr > 0.0,
                "train section has out-of-range values");
  }

  if (j.contains("margin")) {
    const json& jm = j.at("margin");
    require_keys(jm, "margin", {"lambda", "delta", "prior_source"});
    maybe(jm, "lambda", cfg.train.margin.lambda);
    maybe(jm, "delta", cfg.train.margin.delta);
    if (jm.contains("prior_source")) {
      const std::string s = jm.at("prior_source").get<std::string>();
      EFTCL_CHECK(s == "reencode" || s == "stored",
                  "margin.prior_source must be reencode or stored");
      cfg.train.margin.prior_source =
          s == "reencode" ? PriorSource::kReencode : PriorSource::kStored;
    }
    EFTCL_CHECK(cfg.train.margin.lambda >= 0.0 && cfg.train.margin.delta > 0.0,
                "margin requires lambda >= 0 and delta > 0");
  }

  EFTCL_CHECK(cfg.num_tasks >= 1, "data.num_tasks must be >= 1");
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  EFTCL_IO_CHECK(is.good(), "cannot open config " << path);
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return parse_run_config(text);
}

std::string dump_run_config(const RunConfig& cfg) {
  json j;
  j["data"] = {{"name", cfg.data_name},
               {"num_tasks", cfg.num_tasks},
               {"seed", cfg.data_seed},
               {"dir", cfg.data_dir},
               {"chain", cfg.chain},
               {"synthetic",
                {{"shape", cfg.synthetic.shape},
                 {"classes_per_task", cfg.synthetic.classes_per_task},
                 {"sep", cfg.synthetic.sep},
                 {"noise", cfg.synthetic.noise},
                 {"samples_per_class", cfg.synthetic.samples_per_class},
                 {"shared_centers", cfg.synthetic.shared_centers},
                 {"jitter", cfg.synthetic.jitter}}}};
  j["arch"] = cfg.arch;
  j["eft"] = {{"a", cfg.spec.a},
              {"b", cfg.spec.b},
              {"mode", cfg.spec.mode == EftMode::kSerial ? "serial" : "parallel"}};
  j["train"] = {{"epochs_first", cfg.train.epochs_first},
                {"epochs_rest", cfg.train.epochs_rest},
                {"lr", cfg.train.lr},
                {"momentum", cfg.train.momentum},
                {"weight_decay", cfg.train.weight_decay},
                {"milestones", cfg.train.milestones},
                {"milestones_rest", cfg.train.milestones_rest},
                {"lr_decay", cfg.train.lr_decay},
                {"batch_size", cfg.train.batch_size},
                {"seed", cfg.train.seed},
                {"init_policy", policy_name(cfg.train.init_policy)},
                {"probe_size", cfg.train.probe_size}};
  j["margin"] = {{"lambda", cfg.train.margin.lambda},
                 {"delta", cfg.train.margin.delta},
                 {"prior_source",
                  cfg.train.margin.prior_source == PriorSource::kReencode ? "reencode" : "stored"}};
  j["out_dir"] = cfg.out_dir;
  return j.dump(2);
}

ArchSpec build_run_arch(const RunConfig& cfg) {
  std::array<std::int64_t, 3> shape{};
  if (cfg.data_name == "synthetic") {
    shape = cfg.synthetic.shape;
  } else if (cfg.data_name == "chain") {
    EFTCL_CHECK(!cfg.chain.empty(), "chain config requires data.chain");
    shape = dataset_info(cfg.chain.front()).shape;
  } else {
    shape = dataset_info(cfg.data_name).shape;
  }
  return build_arch(cfg.arch, shape);
}

TaskSequence build_sequence(const RunConfig& cfg) {
  if (cfg.data_name == "synthetic") {
    return generate_synthetic(cfg.synthetic, cfg.num_tasks);
  }
  if (cfg.data_name == "chain") {
    TaskSequence seq = build_heterogeneous(cfg.chain);
    for (std::size_t i = 0; i < cfg.chain.size(); ++i) {
      const std::string base = (fs::path(cfg.data_dir) / cfg.chain[i]).string();
      Dataset train = load_dataset_cache(base + "_train.tsr");
      Dataset test = load_dataset_cache(base + "_test.tsr");
      TaskData td;
      td.task_id = static_cast<std::int64_t>(i);
      td.classes = seq.tasks[i].classes;  // cache labels are dataset-local already
      td.train = std::move(train);
      td.test = std::move(test);
      seq.data.push_back(std::move(td));
    }
    return seq;
  }
  const DatasetInfo info = dataset_info(cfg.data_name);
  TaskSequence split = build_split(info.classes, cfg.num_tasks, cfg.data_seed);
  const std::string base = (fs::path(cfg.data_dir) / cfg.data_name).string();
  const Dataset train = load_dataset_cache(base + "_train.tsr");
  const Dataset test = load_dataset_cache(base + "_test.tsr");
  return materialize_split(std::move(split), train, test);
}

}  // namespace eftcl
