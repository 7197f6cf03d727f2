#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "eftcl/config.hpp"
#include "eftcl/cost.hpp"
#include "eftcl/gan.hpp"
#include "eftcl/plot.hpp"
#include "eftcl/task_infer.hpp"
#include "eftcl/trainer.hpp"

#include <json.hpp>

namespace fs = std::filesystem;
using namespace eftcl;
using nlohmann::json;

namespace {

// Exit codes: 0 success, 2 config/schema violation, 3 missing or corrupt
// checkpoint/input artifact, 4 unwritable output, 1 anything else.
constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kCheckpointError = 3;
constexpr int kOutputError = 4;
constexpr int kRuntimeError = 1;

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os.good()) throw IoError("cannot write " + path.string());
  os << text;
  if (!os.good()) throw IoError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is.good()) throw IoError("cannot read " + path.string());
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

std::string metrics_csv(const std::vector<MetricRow>& rows) {
  std::ostringstream os;
  os << "task,epoch,step,ce,lm,total,train_acc\n";
  os.precision(17);
  for (const MetricRow& r : rows) {
    os << r.task << "," << r.epoch << "," << r.step << "," << r.ce << "," << r.lm << ","
       << r.total << "," << r.train_acc << "\n";
  }
  return os.str();
}

Registry prefix_view(const Registry& reg, std::int64_t upto) {
  Registry view = reg;
  view.tasks.resize(static_cast<std::size_t>(upto + 1));
  view.manifest.resize(static_cast<std::size_t>(upto + 1));
  view.task_digests.resize(static_cast<std::size_t>(upto + 1));
  view.stored_stats.resize(static_cast<std::size_t>(upto + 1));
  return view;
}

int cmd_train(const std::string& config_path) {
  RunConfig cfg;
  std::string config_text;
  try {
    config_text = read_text(config_path);
    cfg = parse_run_config(config_text);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }

  try {
    const ArchSpec arch = build_run_arch(cfg);
    const TaskSequence seq = build_sequence(cfg);
    const SequenceResult res = run_sequence(arch, cfg.spec, seq, cfg.train);

    const fs::path out(cfg.out_dir);
    write_text(out / "config.json", config_text);
    write_text(out / "metrics.csv", metrics_csv(res.metrics));
    write_text(out / "matrix_til.csv", res.til.to_csv());
    write_text(out / "matrix_cil.csv", res.cil.to_csv());
    save_registry(res.registry, (out / "checkpoint").string());

    std::vector<NamedTensor> probes;
    probes.push_back({"probe.x", res.probe_batch});
    for (std::size_t t = 0; t < res.probe_logits.size(); ++t) {
      probes.push_back({"logits_task_" + std::to_string(t), res.probe_logits[t]});
    }
    write_archive((out / "probe.tsr").string(), probes);

    json manifest;
    manifest["arch"] = arch.name;
    manifest["tasks"] = seq.task_count();
    manifest["til_final_avg"] = res.til.avg_after(seq.task_count() - 1);
    manifest["cil_final_avg"] = res.cil.avg_after(seq.task_count() - 1);
    manifest["task_pred_accuracy"] = res.task_pred_accuracy;
    manifest["steps"] = res.metrics.size();
    write_text(out / "run_manifest.json", manifest.dump(2) + "\n");

    std::cout << "final averages: til=" << res.til.avg_after(seq.task_count() - 1)
              << " cil=" << res.cil.avg_after(seq.task_count() - 1)
              << " task_pred=" << res.task_pred_accuracy << "\n";
    std::cout << "run artifacts in " << out.string() << "\n";
    return kOk;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kOutputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}

int cmd_eval(const std::string& run_dir, const std::string& mode) {
  if (mode != "til" && mode != "cil") {
    std::cerr << "mode must be til or cil\n";
    return kConfigError;
  }
  RunConfig cfg;
  try {
    cfg = parse_run_config(read_text(fs::path(run_dir) / "config.json"));
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }
  Registry reg;
  try {
    reg = load_registry((fs::path(run_dir) / "checkpoint").string());
  } catch (const std::exception& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kCheckpointError;
  }
  try {
    const TaskSequence seq = build_sequence(cfg);
    const std::int64_t T = reg.task_count();
    EFTCL_CHECK(seq.task_count() == T, "sequence does not match checkpoint task count");
    AccuracyMatrix m(T);
    for (std::int64_t t = 0; t < T; ++t) {
      const Registry view = prefix_view(reg, t);
      for (std::int64_t i = 0; i <= t; ++i) {
        const TaskData& td = seq.data[static_cast<std::size_t>(i)];
        m.at(i, t) = mode == "til" ? til_accuracy(view, i, td) : cil_accuracy(view, td);
      }
    }
    write_text(fs::path(run_dir) / ("eval_matrix_" + mode + ".csv"), m.to_csv());
    std::cout << m.to_csv();
    return kOk;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kOutputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}

int cmd_cost(const std::string& arch_name, int a, int b, const std::string& mode,
             std::int64_t tasks, std::int64_t classes, bool as_json, const std::string& out) {
  try {
    const ArchSpec arch = build_arch(arch_name);
    EftConvSpec spec{a, b, mode == "parallel" ? EftMode::kParallel : EftMode::kSerial};
    const CostReport report = growth_report(arch, spec, tasks, classes);
    const std::string text = as_json ? report.to_json() + "\n" : report.to_text();
    std::cout << text;
    if (!out.empty()) write_text(out, report.to_json() + "\n");
    return kOk;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kOutputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  }
}

int cmd_plot(const std::string& run_dir, std::string out_path) {
  AccuracyMatrix til, cil;
  try {
    til = AccuracyMatrix::from_csv(read_text(fs::path(run_dir) / "matrix_til.csv"));
    cil = AccuracyMatrix::from_csv(read_text(fs::path(run_dir) / "matrix_cil.csv"));
  } catch (const std::exception& e) {
    std::cerr << "missing run matrices: " << e.what() << "\n";
    return kCheckpointError;
  }
  try {
    if (out_path.empty()) out_path = (fs::path(run_dir) / "accuracy.svg").string();
    write_text(out_path, accuracy_curves_svg(til, cil));
    std::cout << "wrote " << out_path << "\n";
    return kOk;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kOutputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}

Dataset gan_task_data(std::uint64_t seed, std::int64_t t) {
  SyntheticSpec ds;
  ds.shape = {1, 8, 8};
  ds.classes_per_task = 2;  // two modes per distribution
  ds.sep = 0.4;
  ds.noise = 0.1;
  ds.samples_per_class = 120;
  ds.seed = mix_seed(seed, 0xDA7A + static_cast<std::uint64_t>(t));
  Dataset d = generate_synthetic(ds, 1).data[0].train;
  const double shift = 0.15 * static_cast<double>(t % 3) - 0.15;
  for (double& v : d.x.data) v = std::clamp(v + shift, -0.95, 0.95);
  return d;
}

int cmd_gan_train(const std::string& out_dir, std::int64_t tasks, std::uint64_t seed,
                  int epochs_first, int epochs_rest) {
  try {
    GanConfig cfg;
    cfg.seed = seed;
    if (epochs_first > 0) cfg.epochs_first = epochs_first;
    if (epochs_rest > 0) cfg.epochs_rest = epochs_rest;
    GanPair pair = make_gan_pair(cfg);

    json summary = json::array();
    for (std::int64_t t = 0; t < tasks; ++t) {
      const Dataset data = gan_task_data(seed, t);
      const GanTaskSummary s = train_gan_task(pair, data, cfg);
      std::cout << "task " << t << ": steps=" << s.steps << " d_loss=" << s.final_d_loss
                << " g_loss=" << s.final_g_loss << " sample_mean=" << s.sample_mean << "\n";
      summary.push_back({{"task", t},
                         {"steps", s.steps},
                         {"d_loss", s.final_d_loss},
                         {"g_loss", s.final_g_loss},
                         {"sample_mean", s.sample_mean}});
      write_text(fs::path(out_dir) / ("samples_task_" + std::to_string(t) + ".pgm"),
                 sample_grid_pnm(pair.probe_samples[static_cast<std::size_t>(t)], 4));
    }
    save_gan(pair, out_dir);
    write_text(fs::path(out_dir) / "summary.json", summary.dump(2) + "\n");
    return kOk;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kOutputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}

int cmd_gan_sample(const std::string& run_dir, std::int64_t task, std::int64_t count,
                   std::uint64_t seed, std::string out_path) {
  GanPair pair;
  try {
    pair = load_gan(run_dir);
  } catch (const std::exception& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kCheckpointError;
  }
  try {
    Rng rng(seed);
    Tensor z({count, pair.probe_noise.dim(1)});
    rng.fill_normal(z, 1.0);
    const Tensor images = gan_sample(pair, task, z);
    if (out_path.empty()) {
      out_path = (fs::path(run_dir) / ("samples_" + std::to_string(task) + ".pgm")).string();
    }
    write_text(out_path, sample_grid_pnm(images, 4));
    std::cout << "wrote " << out_path << "\n";
    return kOk;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kOutputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"continual learning with task-specific feature transforms"};
  app.require_subcommand(1);

  std::string config_path;
  auto* train = app.add_subcommand("train", "train a task sequence from a config");
  train->add_option("--config", config_path, "run configuration (json)")->required();

  std::string run_dir, mode = "til";
  auto* eval = app.add_subcommand("eval", "recompute accuracy matrices from a checkpoint");
  eval->add_option("--run", run_dir, "run directory")->required();
  eval->add_option("--mode", mode, "til or cil");

  std::string cost_arch = "resnet18-cifar", cost_mode = "serial", cost_out;
  int cost_a = 8, cost_b = 16;
  std::int64_t cost_tasks = 0, cost_classes = 10;
  bool cost_json = false;
  auto* cost = app.add_subcommand("cost", "closed-form parameter and flop accounting");
  cost->add_option("--arch", cost_arch, "architecture name");
  cost->add_option("--a", cost_a, "spatial group cardinality");
  cost->add_option("--b", cost_b, "pointwise group cardinality");
  cost->add_option("--mode", cost_mode, "serial or parallel");
  cost->add_option("--tasks", cost_tasks, "report totals after this many tasks");
  cost->add_option("--classes", cost_classes, "classes per task head");
  cost->add_flag("--json", cost_json, "print json instead of text");
  cost->add_option("--out", cost_out, "also write json report here");

  std::string plot_run, plot_out;
  auto* plot = app.add_subcommand("plot", "render average-accuracy curves to svg");
  plot->add_option("--run", plot_run, "run directory")->required();
  plot->add_option("--out", plot_out, "output image path");

  std::string gan_out;
  std::int64_t gan_tasks = 2;
  std::uint64_t gan_seed = 11;
  int gan_ef = 0, gan_er = 0;
  auto* gan_train = app.add_subcommand("gan-train", "toy continual generative demo");
  gan_train->add_option("--out", gan_out, "output directory")->required();
  gan_train->add_option("--tasks", gan_tasks, "number of sequential distributions");
  gan_train->add_option("--seed", gan_seed, "run seed");
  gan_train->add_option("--epochs-first", gan_ef, "override first-task epochs");
  gan_train->add_option("--epochs-rest", gan_er, "override later-task epochs");

  std::string gs_run, gs_out;
  std::int64_t gs_task = 0, gs_count = 8;
  std::uint64_t gs_seed = 1;
  auto* gan_sample_cmd = app.add_subcommand("gan-sample", "sample a trained generator");
  gan_sample_cmd->add_option("--run", gs_run, "gan run directory")->required();
  gan_sample_cmd->add_option("--task", gs_task, "task id");
  gan_sample_cmd->add_option("--count", gs_count, "number of samples");
  gan_sample_cmd->add_option("--seed", gs_seed, "noise seed");
  gan_sample_cmd->add_option("--out", gs_out, "output image path");

  CLI11_PARSE(app, argc, argv);

  if (train->parsed()) return cmd_train(config_path);
  if (eval->parsed()) return cmd_eval(run_dir, mode);
  if (cost->parsed())
    return cmd_cost(cost_arch, cost_a, cost_b, cost_mode, cost_tasks, cost_classes, cost_json,
                    cost_out);
  if (plot->parsed()) return cmd_plot(plot_run, plot_out);
  if (gan_train->parsed()) return cmd_gan_train(gan_out, gan_tasks, gan_seed, gan_ef, gan_er);
  if (gan_sample_cmd->parsed()) return cmd_gan_sample(gs_run, gs_task, gs_count, gs_seed, gs_out);
  return kRuntimeError;
}
