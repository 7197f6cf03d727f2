#include "eftcl/task_infer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace eftcl {

double softmax_entropy(const double* logits, std::int64_t n) {
  EFTCL_CHECK(n >= 1, "entropy of an empty logit vector");
  double m = logits[0];
  for (std::int64_t i = 1; i < n; ++i) m = std::max(m, logits[i]);
  double s1 = 0.0, s2 = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double y = logits[i] - m;
    const double e = std::exp(y);
    s1 += e;
    s2 += y * e;
  }
  // H = log Z - E[y]; clamp tiny negative round-off.
  const double h = std::log(s1) - s2 / s1;
  return h < 0.0 ? 0.0 : h;
}

double softmax_entropy(const std::vector<double>& logits) {
  return softmax_entropy(logits.data(), static_cast<std::int64_t>(logits.size()));
}

namespace {

std::int64_t finalized_count(const Registry& reg) {
  std::int64_t n = 0;
  while (n < reg.task_count() && reg.tasks[static_cast<std::size_t>(n)].finalized) ++n;
  return n;
}

double max_softmax_prob(const double* logits, std::int64_t n) {
  double m = logits[0];
  for (std::int64_t i = 1; i < n; ++i) m = std::max(m, logits[i]);
  double z = 0.0;
  for (std::int64_t i = 0; i < n; ++i) z += std::exp(logits[i] - m);
  return 1.0 / z;  // exp(max - max) / z
}

}  // namespace

std::vector<std::vector<TaskScore>> score_tasks(const Registry& reg, const Tensor& x) {
  const std::int64_t n_tasks = finalized_count(reg);
  EFTCL_CHECK(n_tasks >= 1, "task scoring requires at least one finalized task");
  const std::int64_t batch = x.dim(0);
  std::vector<std::vector<TaskScore>> scores(
      static_cast<std::size_t>(batch), std::vector<TaskScore>(static_cast<std::size_t>(n_tasks)));
  ForwardOptions opts;
  opts.apply_eft = reg.eft_enabled;
  for (std::int64_t t = 0; t < n_tasks; ++t) {
    const ForwardResult res = net_forward(reg.arch, reg.spec, reg.theta,
                                          &reg.tasks[static_cast<std::size_t>(t)], x, opts);
    const std::int64_t classes = res.output.dim(1);
    for (std::int64_t i = 0; i < batch; ++i) {
      const double* row = res.output.ptr() + i * classes;
      TaskScore& s = scores[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)];
      s.task_id = t;
      s.entropy = softmax_entropy(row, classes);
      s.max_prob = max_softmax_prob(row, classes);
    }
  }
  return scores;
}

std::vector<std::int64_t> predict_task(const Registry& reg, const Tensor& x) {
  const auto scores = score_tasks(reg, x);
  std::vector<std::int64_t> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    std::int64_t best = 0;
    for (std::size_t t = 1; t < scores[i].size(); ++t) {
      if (scores[i][t].entropy < scores[i][static_cast<std::size_t>(best)].entropy) {
        best = static_cast<std::int64_t>(t);
      }
    }
    out[i] = best;
  }
  return out;
}

std::vector<std::int64_t> til_predict(const Registry& reg, std::int64_t t, const Tensor& x) {
  EFTCL_CHECK(t >= 0 && t < reg.task_count(), "unknown task id " << t);
  ForwardOptions opts;
  opts.apply_eft = reg.eft_enabled;
  const ForwardResult res =
      net_forward(reg.arch, reg.spec, reg.theta, &reg.tasks[static_cast<std::size_t>(t)], x, opts);
  const std::int64_t batch = x.dim(0), classes = res.output.dim(1);
  const auto& classes_of_t = reg.manifest[static_cast<std::size_t>(t)];
  std::vector<std::int64_t> out(static_cast<std::size_t>(batch));
  for (std::int64_t i = 0; i < batch; ++i) {
    const double* row = res.output.ptr() + i * classes;
    std::int64_t arg = 0;
    for (std::int64_t j = 1; j < classes; ++j) {
      if (row[j] > row[arg]) arg = j;
    }
    out[static_cast<std::size_t>(i)] = classes_of_t[static_cast<std::size_t>(arg)];
  }
  return out;
}

std::vector<std::int64_t> cil_predict(const Registry& reg, const Tensor& x) {
  const std::int64_t n_tasks = finalized_count(reg);
  EFTCL_CHECK(n_tasks >= 1, "class-incremental prediction requires a finalized task");
  const std::int64_t batch = x.dim(0);
  // One forward per task: each pass yields both the entropy score and the
  // within-task prediction, so evaluation cost stays linear in task count.
  std::vector<double> best_entropy(static_cast<std::size_t>(batch),
                                   std::numeric_limits<double>::infinity());
  std::vector<std::int64_t> out(static_cast<std::size_t>(batch), 0);
  ForwardOptions opts;
  opts.apply_eft = reg.eft_enabled;
  for (std::int64_t t = 0; t < n_tasks; ++t) {
    const ForwardResult res = net_forward(reg.arch, reg.spec, reg.theta,
                                          &reg.tasks[static_cast<std::size_t>(t)], x, opts);
    const std::int64_t classes = res.output.dim(1);
    const auto& classes_of_t = reg.manifest[static_cast<std::size_t>(t)];
    for (std::int64_t i = 0; i < batch; ++i) {
      const double* row = res.output.ptr() + i * classes;
      const double h = softmax_entropy(row, classes);
      if (h < best_entropy[static_cast<std::size_t>(i)]) {
        best_entropy[static_cast<std::size_t>(i)] = h;
        std::int64_t arg = 0;
        for (std::int64_t j = 1; j < classes; ++j) {
          if (row[j] > row[arg]) arg = j;
        }
        out[static_cast<std::size_t>(i)] = classes_of_t[static_cast<std::size_t>(arg)];
      }
    }
  }
  return out;
}

}  // namespace eftcl
