#include "eftcl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "eftcl/task_infer.hpp"

namespace eftcl {

void TrainConfig::apply_profile() {
  if (profile.empty()) return;
  EFTCL_CHECK(profile == "desk", "unknown training profile: " << profile);
  epochs_first = 30;
  epochs_rest = 20;
  milestones = {15, 23, 27};
  milestones_rest = {10, 15, 18};
  batch_size = 32;
}

double AccuracyMatrix::avg_after(std::int64_t t) const {
  double acc = 0.0;
  for (std::int64_t i = 0; i <= t; ++i) acc += at(i, t);
  return acc / static_cast<double>(t + 1);
}

std::string AccuracyMatrix::to_csv() const {
  std::ostringstream os;
  os << "task";
  for (std::int64_t t = 0; t < tasks; ++t) os << ",after_" << t;
  os << "\n";
  os.precision(17);
  for (std::int64_t i = 0; i < tasks; ++i) {
    os << i;
    for (std::int64_t t = 0; t < tasks; ++t) {
      os << ",";
      if (i <= t) os << at(i, t);
    }
    os << "\n";
  }
  return os.str();
}

AccuracyMatrix AccuracyMatrix::from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  EFTCL_IO_CHECK(static_cast<bool>(std::getline(is, line)), "empty accuracy matrix csv");
  std::int64_t t_count = -1;  // columns minus the label column
  {
    std::int64_t commas = std::count(line.begin(), line.end(), ',');
    t_count = commas;
  }
  AccuracyMatrix m(t_count);
  std::int64_t row = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::getline(ls, cell, ',');  // row label
    for (std::int64_t t = 0; t < t_count; ++t) {
      std::getline(ls, cell, ',');
      if (!cell.empty()) m.at(row, t) = std::stod(cell);
    }
    ++row;
  }
  EFTCL_IO_CHECK(row == t_count, "accuracy matrix csv is not square");
  return m;
}

namespace {

struct StepStats {
  LossBreakdown loss;
  double train_acc = 0.0;
};

Tensor gather_rows(const Tensor& x, const std::vector<std::int64_t>& order, std::int64_t begin,
                   std::int64_t end) {
  std::vector<std::int64_t> shape = x.shape;
  shape[0] = end - begin;
  Tensor out(shape);
  const std::int64_t stride = x.numel() / x.dim(0);
  for (std::int64_t r = begin; r < end; ++r) {
    std::copy_n(x.ptr() + order[static_cast<std::size_t>(r)] * stride, stride,
                out.ptr() + (r - begin) * stride);
  }
  return out;
}

/// Binds the current task of a registry and runs momentum-SGD steps of the
/// joint objective over the trainable tensors.
class SgdSession {
 public:
  SgdSession(Registry& reg, const TrainConfig& cfg)
      : reg_(reg), cfg_(cfg), t_(reg.task_count() - 1),
        task_(reg.tasks[static_cast<std::size_t>(t_)]),
        grads_(make_grad_buffers(reg.arch, reg.theta, &task_)) {
    EFTCL_CHECK(t_ >= 0 && !task_.finalized, "no open task to train");
    const bool theta_trainable = !reg_.theta_frozen;
    if (theta_trainable) {
      for (std::size_t i = 0; i < reg_.theta.layers.size(); ++i) {
        bind(reg_.theta.layers[i].w, grads_.global[i].w);
        bind(reg_.theta.layers[i].bias, grads_.global[i].bias);
        bind(reg_.theta.layers[i].gamma, grads_.global[i].gamma);
        bind(reg_.theta.layers[i].beta, grads_.global[i].beta);
      }
    }
    if (reg_.eft_enabled) {
      for (std::size_t s = 0; s < task_.adapters.size(); ++s) {
        bind(task_.adapters[s].spatial, grads_.task.adapters[s].spatial);
        bind(task_.adapters[s].pointwise, grads_.task.adapters[s].pointwise);
      }
      bind(task_.calib.scale, grads_.task.calib);
    }
    bind(task_.head.w, grads_.task.head_w);
    bind(task_.head.bias, grads_.task.head_bias);
    for (const Tensor* p : params_) momentum_.push_back(Tensor::zeros_like(*p));
  }

  StepStats step(const Tensor& x, const std::vector<std::int64_t>& labels, double lr) {
    ForwardOptions opts;
    opts.bn_batch_stats = !reg_.theta_frozen;
    opts.apply_eft = reg_.eft_enabled;
    ForwardTrace trace;
    const ForwardResult fwd =
        net_forward(reg_.arch, reg_.spec, reg_.theta, &task_, x, opts, &trace);

    std::vector<GaussianStats> priors = collect_priors(x);
    Tensor grad_logits;
    StepStats st;
    st.loss.ce = cross_entropy(fwd.output, labels, &grad_logits);
    st.loss.lm = priors.empty() ? 0.0 : margin_loss(fit_gaussian(fwd.features), priors,
                                                    cfg_.margin.delta);
    st.loss.total = st.loss.ce + cfg_.margin.lambda * st.loss.lm;
    EFTCL_CHECK(std::isfinite(st.loss.total),
                "training diverged: non-finite loss at task " << t_);

    Tensor margin_grad;
    const Tensor* extra = nullptr;
    if (!priors.empty() && cfg_.margin.lambda > 0.0) {
      margin_grad = margin_loss_backward(fwd.features, priors, cfg_.margin.delta);
      for (double& v : margin_grad.data) v *= cfg_.margin.lambda;
      extra = &margin_grad;
    }

    grads_.zero();
    net_backward(reg_.arch, reg_.spec, reg_.theta, &task_, opts, trace, grad_logits, extra,
                 /*accumulate_global=*/!reg_.theta_frozen, grads_);

    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor& w = *params_[i];
      const Tensor& g = *gptrs_[i];
      Tensor& v = momentum_[i];
      for (std::size_t j = 0; j < w.data.size(); ++j) {
        v.data[j] = cfg_.momentum * v.data[j] -
                    lr * (g.data[j] + cfg_.weight_decay * w.data[j]);
        w.data[j] += v.data[j];
      }
    }
    if (opts.bn_batch_stats) {
      // Cumulative mean of the batch statistics seen this session, so the
      // frozen estimates are usable even after very short schedules.
      ++norm_updates_;
      update_running_stats(reg_.arch, trace, reg_.theta, 1.0 / static_cast<double>(norm_updates_));
    }

    std::int64_t correct = 0;
    const std::int64_t classes = fwd.output.dim(1);
    for (std::int64_t i = 0; i < fwd.output.dim(0); ++i) {
      const double* row = fwd.output.ptr() + i * classes;
      std::int64_t arg = 0;
      for (std::int64_t j = 1; j < classes; ++j)
        if (row[j] > row[arg]) arg = j;
      if (arg == labels[static_cast<std::size_t>(i)]) ++correct;
    }
    st.train_acc = static_cast<double>(correct) / static_cast<double>(fwd.output.dim(0));
    return st;
  }

 private:
  void bind(Tensor& param, Tensor& grad) {
    if (param.numel() == 0) return;
    params_.push_back(&param);
    gptrs_.push_back(&grad);
  }

  std::vector<GaussianStats> collect_priors(const Tensor& x) {
    std::vector<GaussianStats> priors;
    if (cfg_.margin.lambda <= 0.0 || t_ == 0 || !reg_.eft_enabled) return priors;
    if (cfg_.margin.prior_source == PriorSource::kStored) {
      for (std::int64_t i = 0; i < t_; ++i) {
        const GaussianStats& s = reg_.stored_stats[static_cast<std::size_t>(i)];
        EFTCL_CHECK(s.count > 0, "stored prior stats missing for task " << i);
        priors.push_back(s);
      }
      return priors;
    }
    // Re-encode the current batch under each earlier task's parameters,
    // gradients blocked.
    ForwardOptions opts;
    opts.apply_eft = true;
    for (std::int64_t i = 0; i < t_; ++i) {
      const ForwardResult res = net_forward(reg_.arch, reg_.spec, reg_.theta,
                                            &reg_.tasks[static_cast<std::size_t>(i)], x, opts);
      priors.push_back(fit_gaussian(res.features));
    }
    return priors;
  }

  Registry& reg_;
  const TrainConfig& cfg_;
  std::int64_t t_;
  TaskParams& task_;
  GradBuffers grads_;
  std::vector<Tensor*> params_;
  std::vector<Tensor*> gptrs_;
  std::vector<Tensor> momentum_;
  std::int64_t norm_updates_ = 0;
};

/// Re-estimates the frozen normalization statistics with the final weights:
/// one pass over the task's training data in batch-statistics mode, folding
/// each batch in as a cumulative mean. Keeps evaluation consistent even
/// after very short schedules.
void recalibrate_norm_stats(Registry& reg, const Tensor& train_x, int batch_size) {
  bool has_norm = false;
  for (const LayerDesc& l : reg.arch.layers) has_norm |= l.kind == LayerKind::kNorm;
  if (!has_norm) return;

  ForwardOptions opts;
  opts.bn_batch_stats = true;
  opts.apply_eft = reg.eft_enabled;
  const std::int64_t n = train_x.dim(0);
  const std::int64_t stride = train_x.numel() / n;
  std::int64_t updates = 0;
  for (std::int64_t begin = 0; begin < n; begin += batch_size) {
    const std::int64_t end = std::min<std::int64_t>(n, begin + batch_size);
    if (end - begin < 2) continue;
    std::vector<std::int64_t> shape = train_x.shape;
    shape[0] = end - begin;
    Tensor chunk(shape);
    std::copy_n(train_x.ptr() + begin * stride, (end - begin) * stride, chunk.ptr());
    ForwardTrace trace;
    net_forward(reg.arch, reg.spec, reg.theta, &reg.tasks.back(), chunk, opts, &trace);
    ++updates;
    update_running_stats(reg.arch, trace, reg.theta, 1.0 / static_cast<double>(updates));
  }
}

double lr_at_epoch(const TrainConfig& cfg, bool first_task, int epoch) {
  const std::vector<int>& ms = first_task ? cfg.milestones : cfg.milestones_rest;
  double lr = cfg.lr;
  for (int m : ms) {
    if (epoch >= m) lr *= cfg.lr_decay;
  }
  return lr;
}

GaussianStats summarize_features(const Registry& reg, std::int64_t t, const Tensor& x,
                                 int batch_size) {
  ForwardOptions opts;
  opts.apply_eft = reg.eft_enabled;
  const std::int64_t n = x.dim(0);
  Tensor features;
  std::int64_t row = 0;
  for (std::int64_t begin = 0; begin < n; begin += batch_size) {
    const std::int64_t end = std::min<std::int64_t>(n, begin + batch_size);
    std::vector<std::int64_t> idx(static_cast<std::size_t>(end - begin));
    for (std::int64_t i = begin; i < end; ++i) idx[static_cast<std::size_t>(i - begin)] = i;
    Tensor chunk = gather_rows(x, idx, 0, end - begin);
    const ForwardResult res = net_forward(reg.arch, reg.spec, reg.theta,
                                          &reg.tasks[static_cast<std::size_t>(t)], chunk, opts);
    if (features.numel() == 0) features = Tensor({n, res.features.dim(1)});
    std::copy_n(res.features.ptr(), res.features.numel(), features.ptr() + row * features.dim(1));
    row += end - begin;
  }
  return fit_gaussian(features);
}

std::vector<std::int64_t> global_labels(const TaskData& data, bool test_split) {
  const Dataset& ds = test_split ? data.test : data.train;
  std::vector<std::int64_t> out(ds.y.size());
  for (std::size_t i = 0; i < ds.y.size(); ++i)
    out[i] = data.classes[static_cast<std::size_t>(ds.y[i])];
  return out;
}

}  // namespace

TaskSummary train_task(Registry& reg, const TaskData& data, const TrainConfig& cfg,
                       std::vector<MetricRow>* metrics) {
  const std::int64_t t = reg.task_count() - 1;
  EFTCL_CHECK(t >= 0 && !reg.tasks[static_cast<std::size_t>(t)].finalized,
              "train_task needs an open task");
  EFTCL_CHECK(data.train.size() >= 2, "task " << t << " has no training data");

  SgdSession session(reg, cfg);
  const bool first = t == 0;
  const int epochs = first ? cfg.epochs_first : cfg.epochs_rest;

  TaskSummary summary;
  const std::int64_t n = data.train.size();
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, first, epoch);
    Rng order_rng(mix_seed(cfg.seed, mix_seed(static_cast<std::uint64_t>(t),
                                              static_cast<std::uint64_t>(epoch))));
    const std::vector<std::int64_t> order = order_rng.permutation(n);
    for (std::int64_t begin = 0; begin < n; begin += cfg.batch_size) {
      const std::int64_t end = std::min<std::int64_t>(n, begin + cfg.batch_size);
      if (end - begin < 2) continue;  // gaussian summaries need two samples
      Tensor x = gather_rows(data.train.x, order, begin, end);
      std::vector<std::int64_t> labels(static_cast<std::size_t>(end - begin));
      for (std::int64_t r = begin; r < end; ++r) {
        labels[static_cast<std::size_t>(r - begin)] =
            data.train.y[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])];
      }
      const StepStats st = session.step(x, labels, lr);
      summary.steps += 1;
      summary.final_total = st.loss.total;
      summary.final_train_acc = st.train_acc;
      if (metrics != nullptr) {
        metrics->push_back({t, epoch, summary.steps, st.loss.ce, st.loss.lm, st.loss.total,
                            st.train_acc});
      }
    }
  }

  if (!reg.theta_frozen) recalibrate_norm_stats(reg, data.train.x, cfg.batch_size);
  finalize_task(reg, t);
  reg.stored_stats[static_cast<std::size_t>(t)] =
      summarize_features(reg, t, data.train.x, cfg.batch_size);
  return summary;
}

double til_accuracy(const Registry& reg, std::int64_t t, const TaskData& data) {
  const std::vector<std::int64_t> pred = til_predict(reg, t, data.test.x);
  const std::vector<std::int64_t> truth = global_labels(data, true);
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == truth[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

double cil_accuracy(const Registry& reg, const TaskData& data) {
  const std::vector<std::int64_t> pred = cil_predict(reg, data.test.x);
  const std::vector<std::int64_t> truth = global_labels(data, true);
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == truth[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

SequenceResult run_sequence(const ArchSpec& arch, const EftConvSpec& spec,
                            const TaskSequence& seq, const TrainConfig& cfg) {
  EFTCL_CHECK(seq.materialized(), "run_sequence needs a materialized sequence");
  const std::int64_t T = seq.task_count();

  SequenceResult res;
  res.til = AccuracyMatrix(T);
  res.cil = AccuracyMatrix(T);

  Rng init_rng(mix_seed(cfg.seed, 0xA11C));
  res.registry = make_registry(arch, spec, init_rng);
  Registry& reg = res.registry;

  {
    Rng probe_rng(mix_seed(cfg.seed, 0x9806));
    res.probe_batch = Tensor({cfg.probe_size, arch.input_shape[0], arch.input_shape[1],
                              arch.input_shape[2]});
    probe_rng.fill_normal(res.probe_batch, 1.0);
  }

  for (std::int64_t t = 0; t < T; ++t) {
    Rng task_rng(mix_seed(cfg.seed, 0x5EED0 + static_cast<std::uint64_t>(t)));
    InitPolicy policy = cfg.init_policy;
    if (t == 0 && policy == InitPolicy::kForwardTransfer) policy = InitPolicy::kRandom;
    add_task(reg, seq.tasks[static_cast<std::size_t>(t)].classes, policy, task_rng);
    train_task(reg, seq.data[static_cast<std::size_t>(t)], cfg, &res.metrics);

    {
      ForwardOptions opts;
      opts.apply_eft = reg.eft_enabled;
      res.probe_logits.push_back(net_forward(arch, spec, reg.theta,
                                             &reg.tasks[static_cast<std::size_t>(t)],
                                             res.probe_batch, opts)
                                     .output);
    }

    for (std::int64_t i = 0; i <= t; ++i) {
      const TaskData& td = seq.data[static_cast<std::size_t>(i)];
      const double til = til_accuracy(reg, i, td);
      const double cil = cil_accuracy(reg, td);
      EFTCL_CHECK(cil <= til + 1e-12, "class-incremental accuracy exceeded task-incremental at ("
                                          << i << "," << t << ")");
      res.til.at(i, t) = til;
      res.cil.at(i, t) = cil;
    }
  }

  // Final task-prediction accuracy over every task's held-out data.
  std::int64_t correct = 0, total = 0;
  for (std::int64_t i = 0; i < T; ++i) {
    const TaskData& td = seq.data[static_cast<std::size_t>(i)];
    const std::vector<std::int64_t> pred = predict_task(reg, td.test.x);
    std::int64_t task_correct = 0;
    for (std::int64_t p : pred) task_correct += p == i ? 1 : 0;
    res.task_pred_correct.push_back(static_cast<double>(task_correct) /
                                    static_cast<double>(pred.size()));
    correct += task_correct;
    total += static_cast<std::int64_t>(pred.size());
  }
  res.task_pred_accuracy = static_cast<double>(correct) / static_cast<double>(total);
  verify_frozen(reg);
  return res;
}

AblationResult forward_transfer_ablation(const ArchSpec& arch, const EftConvSpec& spec,
                                         const TaskSequence& seq, const TrainConfig& cfg,
                                         double loss_threshold) {
  AblationResult out;
  out.loss_threshold = loss_threshold;

  TrainConfig cfg_transfer = cfg;
  cfg_transfer.init_policy = InitPolicy::kForwardTransfer;
  TrainConfig cfg_random = cfg;
  cfg_random.init_policy = InitPolicy::kRandom;

  out.transfer = run_sequence(arch, spec, seq, cfg_transfer);
  out.random = run_sequence(arch, spec, seq, cfg_random);

  auto steps_to_threshold = [&](const std::vector<MetricRow>& metrics) {
    std::vector<std::int64_t> steps;
    for (std::int64_t t = 1; t < seq.task_count(); ++t) {
      std::int64_t budget = 0;
      std::int64_t reached = -1;
      for (const MetricRow& row : metrics) {
        if (row.task != t) continue;
        ++budget;
        if (reached < 0 && row.total <= loss_threshold) reached = row.step;
      }
      steps.push_back(reached < 0 ? budget : reached);
    }
    return steps;
  };
  out.steps_transfer = steps_to_threshold(out.transfer.metrics);
  out.steps_random = steps_to_threshold(out.random.metrics);
  return out;
}

AccuracyMatrix run_finetune_baseline(const ArchSpec& arch, const TaskSequence& seq,
                                     const TrainConfig& cfg) {
  EFTCL_CHECK(seq.materialized(), "baseline needs a materialized sequence");
  const std::int64_t T = seq.task_count();

  // Class union in ascending global order; the single head indexes into it.
  std::vector<std::int64_t> union_classes;
  for (const TaskDesc& d : seq.tasks)
    union_classes.insert(union_classes.end(), d.classes.begin(), d.classes.end());
  std::sort(union_classes.begin(), union_classes.end());

  Rng rng(mix_seed(cfg.seed, 0xBA5E));
  EftConvSpec dummy_spec{1, 0, EftMode::kSerial};  // sites untouched: transforms disabled below
  Registry reg = make_registry(arch, dummy_spec, rng);
  reg.eft_enabled = false;
  add_task(reg, union_classes, InitPolicy::kIdentity, rng);

  auto to_union = [&](std::int64_t global) {
    const auto it = std::lower_bound(union_classes.begin(), union_classes.end(), global);
    return static_cast<std::int64_t>(it - union_classes.begin());
  };

  AccuracyMatrix cil(T);
  for (std::int64_t t = 0; t < T; ++t) {
    const TaskData& td = seq.data[static_cast<std::size_t>(t)];
    SgdSession session(reg, cfg);
    const int epochs = t == 0 ? cfg.epochs_first : cfg.epochs_rest;
    const std::int64_t n = td.train.size();
    for (int epoch = 0; epoch < epochs; ++epoch) {
      const double lr = lr_at_epoch(cfg, t == 0, epoch);
      Rng order_rng(mix_seed(cfg.seed, mix_seed(static_cast<std::uint64_t>(t),
                                                static_cast<std::uint64_t>(epoch))));
      const std::vector<std::int64_t> order = order_rng.permutation(n);
      for (std::int64_t begin = 0; begin < n; begin += cfg.batch_size) {
        const std::int64_t end = std::min<std::int64_t>(n, begin + cfg.batch_size);
        if (end - begin < 2) continue;
        Tensor x = gather_rows(td.train.x, order, begin, end);
        std::vector<std::int64_t> labels(static_cast<std::size_t>(end - begin));
        for (std::int64_t r = begin; r < end; ++r) {
          const std::int64_t src = order[static_cast<std::size_t>(r)];
          labels[static_cast<std::size_t>(r - begin)] =
              to_union(td.classes[static_cast<std::size_t>(td.train.y[static_cast<std::size_t>(src)])]);
        }
        session.step(x, labels, lr);
      }
    }
    recalibrate_norm_stats(reg, td.train.x, cfg.batch_size);
    for (std::int64_t i = 0; i <= t; ++i) {
      const TaskData& eval_td = seq.data[static_cast<std::size_t>(i)];
      const std::vector<std::int64_t> pred = til_predict(reg, 0, eval_td.test.x);
      const std::vector<std::int64_t> truth = global_labels(eval_td, true);
      std::int64_t correct = 0;
      for (std::size_t s = 0; s < pred.size(); ++s) correct += pred[s] == truth[s] ? 1 : 0;
      cil.at(i, t) = static_cast<double>(correct) / static_cast<double>(pred.size());
    }
  }
  return cil;
}

}  // namespace eftcl
