#include "eftcl/margin.hpp"

#include <algorithm>
#include <cmath>

namespace eftcl {

GaussianStats fit_gaussian(const Tensor& features) {
  EFTCL_CHECK(features.rank() == 2, "fit_gaussian expects a (B, d) matrix");
  const std::int64_t b = features.dim(0), d = features.dim(1);
  EFTCL_CHECK(b >= 2, "fit_gaussian needs at least 2 samples, got " << b);
  GaussianStats s;
  s.mean = Tensor({d});
  s.var = Tensor({d});
  s.count = b;
  for (std::int64_t j = 0; j < d; ++j) {
    double m = 0.0;
    for (std::int64_t i = 0; i < b; ++i) m += features.at(i, j);
    m /= static_cast<double>(b);
    double v = 0.0;
    for (std::int64_t i = 0; i < b; ++i) {
      const double diff = features.at(i, j) - m;
      v += diff * diff;
    }
    v /= static_cast<double>(b);
    s.mean.at(j) = m;
    s.var.at(j) = std::max(v, kVarFloor);
  }
  return s;
}

double kl_diag(const GaussianStats& p, const GaussianStats& q) {
  const std::int64_t d = p.mean.numel();
  EFTCL_CHECK(q.mean.numel() == d, "kl_diag dimension mismatch: " << d << " vs "
                                                                  << q.mean.numel());
  double acc = 0.0;
  for (std::int64_t j = 0; j < d; ++j) {
    const double vp = p.var.at(j), vq = q.var.at(j);
    const double dm = p.mean.at(j) - q.mean.at(j);
    acc += std::log(vq / vp) + (vp + dm * dm) / vq - 1.0;
  }
  return 0.5 * acc;
}

double margin_loss(const GaussianStats& p, const std::vector<GaussianStats>& prior,
                   double delta) {
  double acc = 0.0;
  for (const auto& q : prior) acc += std::max(delta - kl_diag(p, q), 0.0);
  return acc;
}

Tensor margin_loss_backward(const Tensor& features, const std::vector<GaussianStats>& prior,
                            double delta) {
  const std::int64_t b = features.dim(0), d = features.dim(1);
  Tensor grad({b, d});
  if (prior.empty()) return grad;

  const GaussianStats p = fit_gaussian(features);

  // Accumulate d(lm)/d(mean) and d(lm)/d(var); active hinges contribute -1
  // times the KL partials.
  Tensor dmean({d});
  Tensor dvar({d});
  bool any_active = false;
  for (const auto& q : prior) {
    if (kl_diag(p, q) >= delta) continue;
    any_active = true;
    for (std::int64_t j = 0; j < d; ++j) {
      const double vp = p.var.at(j), vq = q.var.at(j);
      const double dm = p.mean.at(j) - q.mean.at(j);
      dmean.at(j) += -(dm / vq);
      dvar.at(j) += -0.5 * (1.0 / vq - 1.0 / vp);
    }
  }
  if (!any_active) return grad;

  const double inv_b = 1.0 / static_cast<double>(b);
  for (std::int64_t j = 0; j < d; ++j) {
    const bool clamped = p.var.at(j) <= kVarFloor;
    for (std::int64_t i = 0; i < b; ++i) {
      double g = dmean.at(j) * inv_b;
      if (!clamped) {
        g += dvar.at(j) * 2.0 * (features.at(i, j) - p.mean.at(j)) * inv_b;
      }
      grad.at(i, j) = g;
    }
  }
  return grad;
}

double cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& labels,
                     Tensor* grad_logits) {
  EFTCL_CHECK(logits.rank() == 2, "cross_entropy expects (B, C) logits");
  const std::int64_t b = logits.dim(0), c = logits.dim(1);
  EFTCL_CHECK(static_cast<std::int64_t>(labels.size()) == b,
              "label count " << labels.size() << " does not match batch " << b);
  if (grad_logits != nullptr) *grad_logits = Tensor({b, c});

  double loss = 0.0;
  const double inv_b = 1.0 / static_cast<double>(b);
  for (std::int64_t i = 0; i < b; ++i) {
    const std::int64_t y = labels[static_cast<std::size_t>(i)];
    EFTCL_CHECK(y >= 0 && y < c, "label " << y << " out of range [0, " << c << ")");
    double maxv = logits.at(i, 0);
    for (std::int64_t j = 1; j < c; ++j) maxv = std::max(maxv, logits.at(i, j));
    double z = 0.0;
    for (std::int64_t j = 0; j < c; ++j) z += std::exp(logits.at(i, j) - maxv);
    const double log_z = std::log(z) + maxv;
    loss += (log_z - logits.at(i, y)) * inv_b;
    if (grad_logits != nullptr) {
      for (std::int64_t j = 0; j < c; ++j) {
        const double p = std::exp(logits.at(i, j) - log_z);
        grad_logits->at(i, j) = (p - (j == y ? 1.0 : 0.0)) * inv_b;
      }
    }
  }
  return loss;
}

LossBreakdown joint_loss(const Tensor& logits, const std::vector<std::int64_t>& labels,
                         const GaussianStats& p_t, const std::vector<GaussianStats>& prior,
                         const MarginConfig& cfg) {
  LossBreakdown out;
  out.ce = cross_entropy(logits, labels, nullptr);
  out.lm = margin_loss(p_t, prior, cfg.delta);
  out.total = out.ce + cfg.lambda * out.lm;
  return out;
}

}  // namespace eftcl
