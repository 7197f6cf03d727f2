#include "eftcl/data.hpp"

#include <algorithm>

#include "eftcl/serialize.hpp"

namespace eftcl {

TaskSequence build_split(std::int64_t total_classes, std::int64_t num_tasks, std::uint64_t seed) {
  EFTCL_CHECK(num_tasks >= 1 && total_classes >= 1, "empty split");
  EFTCL_CHECK(total_classes % num_tasks == 0,
              "task count " << num_tasks << " does not divide class count " << total_classes);
  Rng rng(seed);
  const std::vector<std::int64_t> perm = rng.permutation(total_classes);
  const std::int64_t per_task = total_classes / num_tasks;
  TaskSequence seq;
  seq.total_classes = total_classes;
  seq.seed = seed;
  for (std::int64_t t = 0; t < num_tasks; ++t) {
    TaskDesc d;
    d.task_id = t;
    d.classes.assign(perm.begin() + t * per_task, perm.begin() + (t + 1) * per_task);
    d.source = {"split", ""};
    seq.tasks.push_back(std::move(d));
  }
  return seq;
}

DatasetInfo dataset_info(const std::string& name) {
  if (name == "svhn") return {10, {3, 32, 32}};
  if (name == "cifar10") return {10, {3, 32, 32}};
  if (name == "cifar100") return {100, {3, 32, 32}};
  throw DimError("unknown dataset: " + name);
}

TaskSequence build_heterogeneous(const std::vector<std::string>& names) {
  EFTCL_CHECK(!names.empty(), "empty dataset chain");
  TaskSequence seq;
  std::int64_t offset = 0;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const DatasetInfo info = dataset_info(names[i]);
    TaskDesc d;
    d.task_id = static_cast<std::int64_t>(i);
    for (std::int64_t c = 0; c < info.classes; ++c) d.classes.push_back(offset + c);
    d.source = {"dataset", names[i]};
    offset += info.classes;
    seq.tasks.push_back(std::move(d));
  }
  seq.total_classes = offset;
  return seq;
}

TaskSequence generate_synthetic(const SyntheticSpec& spec, std::int64_t num_tasks) {
  EFTCL_CHECK(num_tasks >= 1 && spec.classes_per_task >= 1, "empty synthetic sequence");
  EFTCL_CHECK(spec.sep >= 0.0 && spec.noise >= 0.0, "negative scale");
  EFTCL_CHECK(spec.samples_per_class >= 5, "too few samples per class");

  const std::int64_t pix = spec.shape[0] * spec.shape[1] * spec.shape[2];
  Rng rng(spec.seed);

  std::vector<Tensor> base_centers;
  if (spec.shared_centers) {
    for (std::int64_t j = 0; j < spec.classes_per_task; ++j) {
      Tensor c({pix});
      rng.fill_normal(c, spec.sep);
      base_centers.push_back(std::move(c));
    }
  }

  TaskSequence seq;
  seq.seed = spec.seed;
  seq.total_classes = num_tasks * spec.classes_per_task;
  const std::int64_t n_train = spec.samples_per_class * 8 / 10;

  for (std::int64_t t = 0; t < num_tasks; ++t) {
    TaskDesc d;
    d.task_id = t;
    d.source = {"synthetic", ""};
    TaskData td;
    td.task_id = t;

    const std::int64_t n_test = spec.samples_per_class - n_train;
    const std::int64_t cpt = spec.classes_per_task;
    td.train.x = Tensor({cpt * n_train, spec.shape[0], spec.shape[1], spec.shape[2]});
    td.test.x = Tensor({cpt * n_test, spec.shape[0], spec.shape[1], spec.shape[2]});

    for (std::int64_t j = 0; j < cpt; ++j) {
      d.classes.push_back(t * cpt + j);
      td.classes.push_back(t * cpt + j);
      Tensor center({pix});
      if (spec.shared_centers) {
        center = base_centers[static_cast<std::size_t>(j)];
        for (std::int64_t p = 0; p < pix; ++p) center.at(p) += rng.normal(0.0, spec.jitter);
      } else {
        rng.fill_normal(center, spec.sep);
      }
      for (std::int64_t s = 0; s < spec.samples_per_class; ++s) {
        const bool is_train = s < n_train;
        Tensor& dst = is_train ? td.train.x : td.test.x;
        const std::int64_t row = is_train ? j * n_train + s : j * n_test + (s - n_train);
        double* out = dst.ptr() + row * pix;
        for (std::int64_t p = 0; p < pix; ++p) out[p] = center.at(p) + rng.normal(0.0, spec.noise);
        (is_train ? td.train.y : td.test.y).push_back(j);
      }
    }
    seq.tasks.push_back(std::move(d));
    seq.data.push_back(std::move(td));
  }
  return seq;
}

TaskSequence materialize_split(TaskSequence split, const Dataset& train, const Dataset& test) {
  EFTCL_CHECK(split.data.empty(), "sequence already materialized");
  const std::int64_t pix = train.x.numel() / std::max<std::int64_t>(1, train.x.dim(0));
  for (const TaskDesc& d : split.tasks) {
    TaskData td;
    td.task_id = d.task_id;
    td.classes = d.classes;
    for (int pass = 0; pass < 2; ++pass) {
      const Dataset& src = pass == 0 ? train : test;
      Dataset& dst = pass == 0 ? td.train : td.test;
      std::vector<std::int64_t> rows;
      std::vector<std::int64_t> labels;
      for (std::int64_t i = 0; i < src.size(); ++i) {
        const auto it = std::find(d.classes.begin(), d.classes.end(),
                                  src.y[static_cast<std::size_t>(i)]);
        if (it == d.classes.end()) continue;
        rows.push_back(i);
        labels.push_back(it - d.classes.begin());
      }
      dst.x = Tensor({static_cast<std::int64_t>(rows.size()), src.x.dim(1), src.x.dim(2),
                      src.x.dim(3)});
      for (std::size_t r = 0; r < rows.size(); ++r) {
        std::copy_n(src.x.ptr() + rows[r] * pix, pix,
                    dst.x.ptr() + static_cast<std::int64_t>(r) * pix);
      }
      dst.y = std::move(labels);
    }
    split.data.push_back(std::move(td));
  }
  return split;
}

Dataset load_dataset_cache(const std::string& path) {
  Dataset ds;
  for (auto& nt : read_archive(path)) {
    if (nt.name == "x") {
      ds.x = std::move(nt.tensor);
    } else if (nt.name == "y") {
      ds.y.reserve(nt.tensor.data.size());
      for (double v : nt.tensor.data) ds.y.push_back(static_cast<std::int64_t>(v));
    }
  }
  EFTCL_IO_CHECK(ds.x.rank() == 4 && ds.x.dim(0) == static_cast<std::int64_t>(ds.y.size()),
                 "dataset cache " << path << " is malformed");
  return ds;
}

void save_dataset_cache(const std::string& path, const Dataset& ds) {
  Tensor y({std::max<std::int64_t>(1, ds.size())});
  for (std::size_t i = 0; i < ds.y.size(); ++i) y.at(static_cast<std::int64_t>(i)) =
      static_cast<double>(ds.y[i]);
  write_archive(path, {{"x", ds.x}, {"y", y}});
}

}  // namespace eftcl
