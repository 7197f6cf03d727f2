#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "eftcl/task_infer.hpp"

using namespace eftcl;

TEST_CASE("softmax entropy analytic cases") {
  std::vector<double> uniform(10, 3.7);
  CHECK(softmax_entropy(uniform) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
  CHECK(softmax_entropy(uniform) == doctest::Approx(2.302585092994046).epsilon(1e-12));

  std::vector<double> spiked{1e6, 0.0, 0.0, 0.0};
  CHECK(softmax_entropy(spiked) == doctest::Approx(0.0).epsilon(1e-9));

  // High-precision frozen value for logits [1, 2, 3].
  CHECK(std::fabs(softmax_entropy({1.0, 2.0, 3.0}) - 0.8323955818399389) < 1e-12);

  // Entropy is shift invariant and bounded by ln C.
  std::vector<double> shifted{1001.0, 1002.0, 1003.0};
  CHECK(softmax_entropy(shifted) == doctest::Approx(softmax_entropy({1.0, 2.0, 3.0})));
  CHECK(softmax_entropy({0.3, -0.2, 0.9}) <= std::log(3.0) + 1e-12);
}

namespace {

Registry two_task_registry(std::uint64_t seed, bool identical_tasks) {
  Rng rng(seed);
  Registry reg = make_registry(build_arch("smallcnn", {3, 16, 16}), {4, 8, EftMode::kSerial}, rng);
  add_task(reg, {0, 1}, InitPolicy::kRandom, rng);
  finalize_task(reg, 0);
  add_task(reg, {2, 3}, InitPolicy::kForwardTransfer, rng);
  if (identical_tasks) {
    reg.tasks[1].calib = reg.tasks[0].calib;
    reg.tasks[1].head.w = reg.tasks[0].head.w;
    reg.tasks[1].head.bias = reg.tasks[0].head.bias;
  }
  finalize_task(reg, 1);
  return reg;
}

}  // namespace

TEST_CASE("single finalized task is always selected") {
  Rng rng(41);
  Registry reg = make_registry(build_arch("smallcnn", {3, 16, 16}), {4, 8, EftMode::kSerial}, rng);
  add_task(reg, {5, 6}, InitPolicy::kRandom, rng);
  finalize_task(reg, 0);
  Tensor x({3, 3, 16, 16});
  rng.fill_normal(x, 1.0);
  for (std::int64_t t : predict_task(reg, x)) CHECK(t == 0);
}

TEST_CASE("identical task parameters tie-break to the first task") {
  Registry reg = two_task_registry(42, /*identical_tasks=*/true);
  Rng rng(43);
  Tensor x({5, 3, 16, 16});
  rng.fill_normal(x, 1.0);
  const auto scores = score_tasks(reg, x);
  for (const auto& per_sample : scores) {
    CHECK(per_sample[0].entropy == doctest::Approx(per_sample[1].entropy).epsilon(1e-12));
  }
  for (std::int64_t t : predict_task(reg, x)) CHECK(t == 0);
}

TEST_CASE("prediction is the entropy argmin and scores are well formed") {
  Registry reg = two_task_registry(44, /*identical_tasks=*/false);
  Rng rng(45);
  Tensor x({6, 3, 16, 16});
  rng.fill_normal(x, 1.0);
  const auto scores = score_tasks(reg, x);
  const auto pred = predict_task(reg, x);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const std::int64_t argmin =
        scores[i][0].entropy <= scores[i][1].entropy ? 0 : 1;
    CHECK(pred[i] == argmin);
    for (const TaskScore& s : scores[i]) {
      CHECK(s.entropy >= 0.0);
      CHECK(s.entropy <= std::log(2.0) + 1e-12);
      CHECK(s.max_prob > 0.0);
      CHECK(s.max_prob <= 1.0);
    }
    // argmin is invariant under a strictly increasing transform (halving is
    // exact in binary floating point, so no rounding ties are introduced)
    const std::int64_t argmin_scaled =
        scores[i][0].entropy / 2.0 <= scores[i][1].entropy / 2.0 ? 0 : 1;
    CHECK(argmin == argmin_scaled);
  }
}

TEST_CASE("cil equals til whenever the task prediction is right") {
  Registry reg = two_task_registry(46, false);
  Rng rng(47);
  Tensor x({8, 3, 16, 16});
  rng.fill_normal(x, 1.0);
  const auto task_pred = predict_task(reg, x);
  const auto cil = cil_predict(reg, x);
  for (std::int64_t t = 0; t < 2; ++t) {
    const auto til = til_predict(reg, t, x);
    for (std::size_t i = 0; i < cil.size(); ++i) {
      if (task_pred[i] == t) CHECK(cil[i] == til[i]);
    }
  }
  // Labels come back through the manifest as global ids.
  for (std::size_t i = 0; i < cil.size(); ++i) {
    const auto& classes = reg.manifest[static_cast<std::size_t>(task_pred[i])];
    CHECK(std::find(classes.begin(), classes.end(), cil[i]) != classes.end());
  }
}

TEST_CASE("evaluation cost is one forward per finalized task") {
  Registry reg = two_task_registry(48, false);
  Rng rng(49);
  Tensor x({10, 3, 16, 16});
  rng.fill_normal(x, 1.0);
  reset_forward_call_count();
  cil_predict(reg, x);
  CHECK(forward_call_count() == 2);
  reset_forward_call_count();
  predict_task(reg, x);
  CHECK(forward_call_count() == 2);
}

TEST_CASE("unknown task ids are rejected") {
  Registry reg = two_task_registry(50, false);
  Tensor x({1, 3, 16, 16}, 0.1);
  CHECK_THROWS_AS(til_predict(reg, 7, x), DimError);
}
