#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "eftcl/data.hpp"

using namespace eftcl;

TEST_CASE("build_split partitions the classes") {
  const TaskSequence seq = build_split(100, 10, 123);
  REQUIRE(seq.task_count() == 10);
  std::set<std::int64_t> seen;
  for (const TaskDesc& t : seq.tasks) {
    CHECK(t.classes.size() == 10);
    for (std::int64_t c : t.classes) {
      CHECK(seen.insert(c).second);  // disjoint
    }
  }
  CHECK(seen.size() == 100);

  const TaskSequence again = build_split(100, 10, 123);
  for (int t = 0; t < 10; ++t) CHECK(seq.tasks[t].classes == again.tasks[t].classes);
  const TaskSequence other = build_split(100, 10, 124);
  bool any_diff = false;
  for (int t = 0; t < 10; ++t) any_diff |= seq.tasks[t].classes != other.tasks[t].classes;
  CHECK(any_diff);

  CHECK_THROWS_AS(build_split(10, 3, 1), DimError);
}

TEST_CASE("heterogeneous chains expose per-dataset class counts") {
  const TaskSequence seq = build_heterogeneous({"svhn", "cifar10", "cifar100"});
  REQUIRE(seq.task_count() == 3);
  CHECK(seq.tasks[0].classes.size() == 10);
  CHECK(seq.tasks[1].classes.size() == 10);
  CHECK(seq.tasks[2].classes.size() == 100);
  CHECK(seq.total_classes == 120);
  // Disjoint global ids.
  CHECK(seq.tasks[1].classes.front() == 10);
  CHECK(seq.tasks[2].classes.front() == 20);

  const TaskSequence rev = build_heterogeneous({"cifar100", "cifar10", "svhn"});
  CHECK(rev.tasks[0].classes.size() == 100);
  CHECK(rev.tasks[2].classes.size() == 10);

  const TaskSequence one = build_heterogeneous({"cifar10"});
  CHECK(one.task_count() == 1);

  CHECK_THROWS_AS(build_heterogeneous({"imagenet22k"}), DimError);
}

namespace {

/// Nearest-centroid probe (a linear classifier) on raw pixels.
double centroid_probe_accuracy(const TaskData& td) {
  const std::int64_t pix = td.train.x.numel() / td.train.x.dim(0);
  const std::int64_t classes = static_cast<std::int64_t>(td.classes.size());
  std::vector<std::vector<double>> centroid(static_cast<std::size_t>(classes),
                                            std::vector<double>(static_cast<std::size_t>(pix)));
  std::vector<std::int64_t> counts(static_cast<std::size_t>(classes), 0);
  for (std::int64_t i = 0; i < td.train.size(); ++i) {
    const std::int64_t y = td.train.y[static_cast<std::size_t>(i)];
    ++counts[static_cast<std::size_t>(y)];
    for (std::int64_t p = 0; p < pix; ++p)
      centroid[static_cast<std::size_t>(y)][static_cast<std::size_t>(p)] +=
          td.train.x.ptr()[i * pix + p];
  }
  for (std::int64_t c = 0; c < classes; ++c)
    for (std::int64_t p = 0; p < pix; ++p)
      centroid[static_cast<std::size_t>(c)][static_cast<std::size_t>(p)] /=
          static_cast<double>(counts[static_cast<std::size_t>(c)]);

  std::int64_t correct = 0;
  for (std::int64_t i = 0; i < td.test.size(); ++i) {
    double best = 1e300;
    std::int64_t arg = 0;
    for (std::int64_t c = 0; c < classes; ++c) {
      double dist = 0.0;
      for (std::int64_t p = 0; p < pix; ++p) {
        const double d = td.test.x.ptr()[i * pix + p] -
                         centroid[static_cast<std::size_t>(c)][static_cast<std::size_t>(p)];
        dist += d * d;
      }
      if (dist < best) {
        best = dist;
        arg = c;
      }
    }
    correct += arg == td.test.y[static_cast<std::size_t>(i)] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(td.test.size());
}

}  // namespace

TEST_CASE("well separated synthetic tasks are linearly separable") {
  SyntheticSpec spec;
  spec.shape = {3, 8, 8};
  spec.classes_per_task = 2;
  spec.sep = 3.0;
  spec.noise = 0.3;
  spec.samples_per_class = 50;
  spec.seed = 5;
  const TaskSequence seq = generate_synthetic(spec, 4);
  REQUIRE(seq.materialized());
  for (const TaskData& td : seq.data) {
    CHECK(centroid_probe_accuracy(td) >= 0.99);
    // 80/20 split
    CHECK(td.train.size() == 80);
    CHECK(td.test.size() == 20);
  }
  // Label remap: local labels are 0..k-1, classes map to disjoint globals.
  std::set<std::int64_t> global_ids;
  for (const TaskData& td : seq.data) {
    for (std::int64_t y : td.train.y) CHECK((y == 0 || y == 1));
    for (std::int64_t c : td.classes) CHECK(global_ids.insert(c).second);
  }
}

TEST_CASE("synthetic generation is bit-reproducible per seed") {
  SyntheticSpec spec;
  spec.shape = {1, 4, 4};
  spec.samples_per_class = 10;
  spec.seed = 77;
  const TaskSequence a = generate_synthetic(spec, 2);
  const TaskSequence b = generate_synthetic(spec, 2);
  CHECK(bit_equal(a.data[1].train.x, b.data[1].train.x));
  CHECK(a.data[1].train.y == b.data[1].train.y);
  spec.seed = 78;
  const TaskSequence c = generate_synthetic(spec, 2);
  CHECK(!bit_equal(a.data[1].train.x, c.data[1].train.x));
}

TEST_CASE("coincident classes defeat the probe") {
  SyntheticSpec spec;
  spec.shape = {1, 4, 4};
  spec.classes_per_task = 2;
  spec.sep = 0.0;  // all centers collapse to the origin
  spec.noise = 1.0;
  spec.samples_per_class = 100;
  spec.seed = 9;
  const TaskSequence seq = generate_synthetic(spec, 1);
  CHECK(centroid_probe_accuracy(seq.data[0]) < 0.75);
}

TEST_CASE("shared-center sequences differ only by jitter") {
  SyntheticSpec spec;
  spec.shape = {1, 4, 4};
  spec.classes_per_task = 2;
  spec.sep = 2.0;
  spec.noise = 0.1;
  spec.samples_per_class = 20;
  spec.shared_centers = true;
  spec.jitter = 0.05;
  spec.seed = 13;
  const TaskSequence seq = generate_synthetic(spec, 3);
  // Per-class means of different tasks stay close (jitter) but not equal.
  const std::int64_t pix = 16;
  auto class_mean = [&](const TaskData& td, std::int64_t cls) {
    std::vector<double> m(static_cast<std::size_t>(pix), 0.0);
    std::int64_t n = 0;
    for (std::int64_t i = 0; i < td.train.size(); ++i) {
      if (td.train.y[static_cast<std::size_t>(i)] != cls) continue;
      ++n;
      for (std::int64_t p = 0; p < pix; ++p) m[static_cast<std::size_t>(p)] +=
          td.train.x.ptr()[i * pix + p];
    }
    for (double& v : m) v /= static_cast<double>(n);
    return m;
  };
  const auto m0 = class_mean(seq.data[0], 0);
  const auto m1 = class_mean(seq.data[2], 0);
  double dist = 0.0;
  for (std::int64_t p = 0; p < pix; ++p)
    dist += (m0[static_cast<std::size_t>(p)] - m1[static_cast<std::size_t>(p)]) *
            (m0[static_cast<std::size_t>(p)] - m1[static_cast<std::size_t>(p)]);
  CHECK(std::sqrt(dist / pix) < 0.2);  // far below sep=2
  CHECK(dist > 0.0);
}

TEST_CASE("dataset cache round trip and split materialization") {
  Dataset full;
  full.x = Tensor({12, 1, 2, 2});
  for (std::int64_t i = 0; i < full.x.numel(); ++i) full.x.at(i) = static_cast<double>(i);
  for (std::int64_t i = 0; i < 12; ++i) full.y.push_back(i % 4);

  TaskSequence split = build_split(4, 2, 3);
  TaskSequence seq = materialize_split(std::move(split), full, full);
  REQUIRE(seq.data.size() == 2);
  CHECK(seq.data[0].train.size() + seq.data[1].train.size() == 12);
  for (const TaskData& td : seq.data) {
    for (std::size_t i = 0; i < td.train.y.size(); ++i) {
      CHECK(td.train.y[i] >= 0);
      CHECK(td.train.y[i] < 2);
    }
  }
}
