#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "eftcl/margin.hpp"
#include "eftcl/rng.hpp"
#include "test_util.hpp"

using namespace eftcl;

namespace {

GaussianStats stats_1d(double mean, double var) {
  GaussianStats s;
  s.mean = Tensor({1});
  s.mean.at(0) = mean;
  s.var = Tensor({1});
  s.var.at(0) = var;
  s.count = 2;
  return s;
}

/// Two-pass scalar reference for mean / population variance.
GaussianStats fit_reference(const Tensor& f) {
  const std::int64_t b = f.dim(0), d = f.dim(1);
  GaussianStats s;
  s.mean = Tensor({d});
  s.var = Tensor({d});
  s.count = b;
  for (std::int64_t j = 0; j < d; ++j) {
    double m = 0.0;
    for (std::int64_t i = 0; i < b; ++i) m += f.at(i, j);
    m /= static_cast<double>(b);
    double v = 0.0;
    for (std::int64_t i = 0; i < b; ++i) v += (f.at(i, j) - m) * (f.at(i, j) - m);
    v /= static_cast<double>(b);
    s.mean.at(j) = m;
    s.var.at(j) = std::max(v, kVarFloor);
  }
  return s;
}

double kl_reference(const GaussianStats& p, const GaussianStats& q) {
  double acc = 0.0;
  for (std::int64_t j = 0; j < p.mean.numel(); ++j) {
    const double vp = p.var.at(j), vq = q.var.at(j);
    const double dm = p.mean.at(j) - q.mean.at(j);
    acc += 0.5 * (std::log(vq / vp) + (vp + dm * dm) / vq - 1.0);
  }
  return acc;
}

}  // namespace

TEST_CASE("fit_gaussian analytic cases") {
  Tensor constant({4, 3}, 2.5);
  const GaussianStats s = fit_gaussian(constant);
  for (std::int64_t j = 0; j < 3; ++j) {
    CHECK(s.mean.at(j) == doctest::Approx(2.5));
    CHECK(s.var.at(j) == kVarFloor);
  }

  Tensor two({2, 1});
  two.at(0, 0) = 0.0;
  two.at(1, 0) = 2.0;
  const GaussianStats s2 = fit_gaussian(two);
  CHECK(s2.mean.at(0) == doctest::Approx(1.0));
  CHECK(s2.var.at(0) == doctest::Approx(1.0));

  Tensor single({1, 4}, 0.0);
  CHECK_THROWS_AS(fit_gaussian(single), DimError);
}

TEST_CASE("fit_gaussian matches the two-pass reference on a random matrix") {
  Rng rng(21);
  Tensor f({64, 16});
  rng.fill_normal(f, 3.0);
  const GaussianStats got = fit_gaussian(f);
  const GaussianStats want = fit_reference(f);
  for (std::int64_t j = 0; j < 16; ++j) {
    CHECK(std::fabs(got.mean.at(j) - want.mean.at(j)) < 1e-9);
    CHECK(std::fabs(got.var.at(j) - want.var.at(j)) < 1e-9);
  }
}

TEST_CASE("kl_diag analytic and reference cases") {
  Rng rng(22);
  Tensor f({16, 8});
  rng.fill_normal(f, 1.5);
  const GaussianStats p = fit_gaussian(f);
  CHECK(kl_diag(p, p) == doctest::Approx(0.0).epsilon(1e-12));

  CHECK(std::fabs(kl_diag(stats_1d(0.0, 1.0), stats_1d(1.0, 1.0)) - 0.5) < 1e-9);

  Tensor g({16, 8});
  rng.fill_normal(g, 0.8);
  const GaussianStats q = fit_gaussian(g);
  CHECK(std::fabs(kl_diag(p, q) - kl_reference(p, q)) < 1e-9);
  CHECK(kl_diag(p, q) >= 0.0);
  CHECK(kl_diag(p, q) != doctest::Approx(kl_diag(q, p)).epsilon(1e-6));

  GaussianStats wrong = stats_1d(0.0, 1.0);
  CHECK_THROWS_AS(kl_diag(p, wrong), DimError);
}

TEST_CASE("margin hinge arithmetic") {
  const std::vector<GaussianStats> empty;
  CHECK(margin_loss(stats_1d(0.0, 1.0), empty, 1.0) == 0.0);

  // Unit variances: KL is (mean gap)^2 / 2, so gaps of 2 and sqrt(0.8) give
  // KL values 2.0 and 0.4.
  const GaussianStats p = stats_1d(0.0, 1.0);
  std::vector<GaussianStats> prior{stats_1d(2.0, 1.0), stats_1d(std::sqrt(0.8), 1.0)};
  CHECK(margin_loss(p, prior, 1.0) == doctest::Approx(0.6).epsilon(1e-12));

  // Zero once every divergence clears the margin.
  std::vector<GaussianStats> far{stats_1d(10.0, 1.0), stats_1d(-8.0, 1.0)};
  CHECK(margin_loss(p, far, 1.0) == 0.0);
}

TEST_CASE("margin is monotone in each divergence") {
  const GaussianStats p = stats_1d(0.0, 1.0);
  double prev = margin_loss(p, {stats_1d(0.1, 1.0)}, 1.0);
  for (double gap = 0.2; gap < 2.0; gap += 0.1) {
    const double cur = margin_loss(p, {stats_1d(gap, 1.0)}, 1.0);
    CHECK(cur <= prev + 1e-12);
    prev = cur;
  }
}

TEST_CASE("margin gradient matches central finite differences") {
  Rng rng(23);
  Tensor features({8, 4});
  rng.fill_normal(features, 1.0);
  std::vector<GaussianStats> prior;
  for (int i = 0; i < 3; ++i) {
    Tensor g({8, 4});
    rng.fill_normal(g, 1.0);
    for (double& v : g.data) v += 0.3 * i;
    prior.push_back(fit_gaussian(g));
  }
  const double delta = 6.0;  // keep every hinge active and away from the kink
  const Tensor grad = margin_loss_backward(features, prior, delta);
  auto loss = [&]() { return margin_loss(fit_gaussian(features), prior, delta); };
  CHECK(eftcl::testutil::gradcheck(features, grad, loss) < 1e-4);
}

TEST_CASE("cross entropy values and gradient") {
  Tensor logits({2, 3});
  logits.data = {5.0, 1.0, 1.0, 0.0, 6.0, 0.0};
  const std::vector<std::int64_t> labels{0, 1};
  Tensor grad;
  const double ce = cross_entropy(logits, labels, &grad);
  CHECK(ce < 0.05);  // confidently correct

  Rng rng(24);
  Tensor wild({5, 4});
  rng.fill_normal(wild, 2.0);
  const std::vector<std::int64_t> y{1, 3, 0, 2, 2};
  Tensor g;
  cross_entropy(wild, y, &g);
  auto loss = [&]() { return cross_entropy(wild, y, nullptr); };
  CHECK(eftcl::testutil::gradcheck(wild, g, loss) < 1e-4);

  const std::vector<std::int64_t> bad{1, 9};
  CHECK_THROWS_AS(cross_entropy(logits, bad, nullptr), DimError);
}

TEST_CASE("joint loss composes the tested pieces") {
  Rng rng(25);
  Tensor logits({6, 4});
  rng.fill_normal(logits, 1.0);
  std::vector<std::int64_t> labels;
  for (int i = 0; i < 6; ++i) labels.push_back(i % 4);
  Tensor f({6, 5});
  rng.fill_normal(f, 1.0);
  const GaussianStats p = fit_gaussian(f);

  std::vector<GaussianStats> prior;
  Tensor g({6, 5});
  rng.fill_normal(g, 1.2);
  prior.push_back(fit_gaussian(g));

  MarginConfig cfg;
  cfg.lambda = 0.05;
  cfg.delta = 4.0;
  const LossBreakdown lb = joint_loss(logits, labels, p, prior, cfg);
  const double ce = cross_entropy(logits, labels, nullptr);
  const double lm = margin_loss(p, prior, cfg.delta);
  CHECK(std::fabs(lb.total - (ce + cfg.lambda * lm)) < 1e-9);
  CHECK(lb.ce == doctest::Approx(ce));
  CHECK(lb.lm == doctest::Approx(lm));

  cfg.lambda = 0.0;
  const LossBreakdown lb0 = joint_loss(logits, labels, p, prior, cfg);
  CHECK(lb0.total == doctest::Approx(lb0.ce));

  // Near-one-hot logits with no prior: every term vanishes.
  Tensor hot({2, 2});
  hot.data = {50.0, -50.0, -50.0, 50.0};
  const LossBreakdown lbh = joint_loss(hot, {0, 1}, p, {}, cfg);
  CHECK(lbh.total == doctest::Approx(0.0).epsilon(1e-12));
}
