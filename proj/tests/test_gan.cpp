#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "eftcl/gan.hpp"

using namespace eftcl;
namespace fs = std::filesystem;

namespace {

Dataset two_mode_data(std::uint64_t seed, double shift) {
  SyntheticSpec ds;
  ds.shape = {1, 8, 8};
  ds.classes_per_task = 2;  // two cluster modes
  ds.sep = 0.4;
  ds.noise = 0.1;
  ds.samples_per_class = 120;
  ds.seed = seed;
  TaskSequence seq = generate_synthetic(ds, 1);
  Dataset d = seq.data[0].train;
  for (double& v : d.x.data) v = std::clamp(v + shift, -0.95, 0.95);
  return d;
}

GanConfig quick_config() {
  GanConfig cfg;
  cfg.epochs_first = 10;
  cfg.epochs_rest = 6;
  cfg.seed = 17;
  return cfg;
}

}  // namespace

TEST_CASE("sampling is deterministic and batched") {
  GanConfig cfg = quick_config();
  cfg.epochs_first = 2;
  GanPair pair = make_gan_pair(cfg);
  train_gan_task(pair, two_mode_data(3, 0.0), cfg);

  Rng rng(9);
  Tensor z({4, cfg.noise_dim});
  rng.fill_normal(z, 1.0);
  const Tensor a = gan_sample(pair, 0, z);
  const Tensor b = gan_sample(pair, 0, z);
  CHECK(bit_equal(a, b));
  CHECK(a.dim(0) == 4);
  CHECK(a.dim(1) == 1);
  CHECK(a.dim(2) == 8);

  CHECK_THROWS_AS(gan_sample(pair, 5, z), DimError);
}

TEST_CASE("frozen generator is the identical function after later tasks") {
  GanConfig cfg = quick_config();
  GanPair pair = make_gan_pair(cfg);
  train_gan_task(pair, two_mode_data(3, 0.0), cfg);

  const std::uint64_t g1 = pair.gen.task_digests[0];
  const std::uint64_t d1 = pair.disc.task_digests[0];
  const std::uint64_t theta_g = digest_global(pair.gen.theta);

  train_gan_task(pair, two_mode_data(4, 0.2), cfg);

  CHECK(digest_task(pair.gen.tasks[0]) == g1);
  CHECK(digest_task(pair.disc.tasks[0]) == d1);
  CHECK(digest_global(pair.gen.theta) == theta_g);

  const Tensor replay = gan_sample(pair, 0, pair.probe_noise);
  CHECK(bit_equal(replay, pair.probe_samples[0]));

  // Different task parameters generally produce different samples.
  const Tensor other = gan_sample(pair, 1, pair.probe_noise);
  CHECK(max_abs_diff(other, pair.probe_samples[0]) > 1e-9);
}

TEST_CASE("two-mode fit lands near the data distribution") {
  GanConfig cfg;
  cfg.epochs_first = 40;
  cfg.seed = 17;
  GanPair pair = make_gan_pair(cfg);
  const Dataset data = two_mode_data(5, 0.15);
  const GanTaskSummary s = train_gan_task(pair, data, cfg);

  double mean = 0.0;
  for (double v : data.x.data) mean += v;
  mean /= static_cast<double>(data.x.numel());
  double sd = 0.0;
  for (double v : data.x.data) sd += (v - mean) * (v - mean);
  sd = std::sqrt(sd / static_cast<double>(data.x.numel()));

  CHECK(std::isfinite(s.final_d_loss));
  CHECK(std::isfinite(s.final_g_loss));
  CHECK(std::fabs(s.sample_mean - mean) <= 3.0 * sd);
}

TEST_CASE("gan pair persistence round trip") {
  GanConfig cfg = quick_config();
  cfg.epochs_first = 3;
  cfg.epochs_rest = 2;
  GanPair pair = make_gan_pair(cfg);
  train_gan_task(pair, two_mode_data(3, 0.0), cfg);
  train_gan_task(pair, two_mode_data(4, 0.1), cfg);

  const std::string dir = (fs::temp_directory_path() / "eftcl_gan_pair").string();
  fs::remove_all(dir);
  save_gan(pair, dir);
  GanPair back = load_gan(dir);

  CHECK(back.gen.task_count() == 2);
  CHECK(bit_equal(back.probe_noise, pair.probe_noise));
  REQUIRE(back.probe_samples.size() == 2);
  CHECK(bit_equal(back.probe_samples[1], pair.probe_samples[1]));
  CHECK(bit_equal(gan_sample(back, 0, back.probe_noise), pair.probe_samples[0]));
  fs::remove_all(dir);
}

TEST_CASE("unfinalized previous task is rejected") {
  GanConfig cfg = quick_config();
  GanPair pair = make_gan_pair(cfg);
  Rng rng(1);
  add_task(pair.gen, {}, InitPolicy::kRandom, rng);  // open task, never trained
  CHECK_THROWS_AS(train_gan_task(pair, two_mode_data(3, 0.0), cfg), DimError);
}
