#pragma once

#include <cstdint>
#include <vector>

#include "eftcl/tensor.hpp"

namespace eftcl {

/// Diagonal-Gaussian summary of a feature batch.
struct GaussianStats {
  Tensor mean;  // (d)
  Tensor var;   // (d), entries >= kVarFloor
  std::int64_t count = 0;
};

/// Variance floor applied before any KL evaluation.
inline constexpr double kVarFloor = 1e-6;

enum class PriorSource { kReencode, kStored };

struct MarginConfig {
  double delta = 1.0;
  double lambda = 0.05;
  PriorSource prior_source = PriorSource::kReencode;
};

struct LossBreakdown {
  double ce = 0.0;
  double lm = 0.0;
  double total = 0.0;
};

/// Per-dimension mean and population variance of a (B, d) feature matrix,
/// variance clamped below at kVarFloor. Requires B >= 2.
GaussianStats fit_gaussian(const Tensor& features);

/// KL(P || Q) between diagonal Gaussians of equal dimension; >= 0.
double kl_diag(const GaussianStats& p, const GaussianStats& q);

/// Hinge sum over earlier-task summaries: sum_i max(delta - KL(P||Q_i), 0).
double margin_loss(const GaussianStats& p, const std::vector<GaussianStats>& prior,
                   double delta);

/// Gradient of margin_loss(fit_gaussian(features), prior, delta) with respect
/// to the features. Dimensions whose variance sits at the floor contribute no
/// variance gradient.
Tensor margin_loss_backward(const Tensor& features, const std::vector<GaussianStats>& prior,
                            double delta);

/// Mean softmax cross-entropy over the batch; optionally emits dCE/dlogits.
double cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& labels,
                     Tensor* grad_logits = nullptr);

/// total = ce + lambda * lm.
LossBreakdown joint_loss(const Tensor& logits, const std::vector<std::int64_t>& labels,
                         const GaussianStats& p_t, const std::vector<GaussianStats>& prior,
                         const MarginConfig& cfg);

}  // namespace eftcl
