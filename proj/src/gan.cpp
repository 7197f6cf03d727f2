#include "eftcl/gan.hpp"

#include <cmath>
#include <filesystem>

namespace eftcl {

namespace fs = std::filesystem;

namespace {

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Momentum-SGD over one registry's trainable set (theta while unfrozen plus
/// the current task's adapters).
class GanOptimizer {
 public:
  GanOptimizer(Registry& reg, const GanConfig& cfg)
      : reg_(reg), cfg_(cfg), task_(reg.tasks.back()),
        grads_(make_grad_buffers(reg.arch, reg.theta, &task_)) {
    if (!reg_.theta_frozen) {
      for (std::size_t i = 0; i < reg_.theta.layers.size(); ++i) {
        bind(reg_.theta.layers[i].w, grads_.global[i].w);
        bind(reg_.theta.layers[i].bias, grads_.global[i].bias);
        bind(reg_.theta.layers[i].gamma, grads_.global[i].gamma);
        bind(reg_.theta.layers[i].beta, grads_.global[i].beta);
      }
    }
    for (std::size_t s = 0; s < task_.adapters.size(); ++s) {
      bind(task_.adapters[s].spatial, grads_.task.adapters[s].spatial);
      bind(task_.adapters[s].pointwise, grads_.task.adapters[s].pointwise);
    }
    for (const Tensor* p : params_) momentum_.push_back(Tensor::zeros_like(*p));
  }

  GradBuffers& grads() { return grads_; }
  TaskParams& task() { return task_; }
  bool theta_trainable() const { return !reg_.theta_frozen; }

  void apply(double lr) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor& w = *params_[i];
      const Tensor& g = *gptrs_[i];
      Tensor& v = momentum_[i];
      for (std::size_t j = 0; j < w.data.size(); ++j) {
        v.data[j] = cfg_.momentum * v.data[j] - lr * (g.data[j] + cfg_.weight_decay * w.data[j]);
        w.data[j] += v.data[j];
      }
    }
  }

 private:
  void bind(Tensor& param, Tensor& grad) {
    if (param.numel() == 0) return;
    params_.push_back(&param);
    gptrs_.push_back(&grad);
  }

  Registry& reg_;
  const GanConfig& cfg_;
  TaskParams& task_;
  GradBuffers grads_;
  std::vector<Tensor*> params_;
  std::vector<Tensor*> gptrs_;
  std::vector<Tensor> momentum_;
};

}  // namespace

GanPair make_gan_pair(const GanConfig& cfg) {
  GanPair pair;
  Rng g_rng(mix_seed(cfg.seed, 0x6E6));
  Rng d_rng(mix_seed(cfg.seed, 0xD15C));
  pair.gen = make_registry(build_toy_generator(cfg.noise_dim, cfg.image_shape), cfg.spec, g_rng);
  pair.disc = make_registry(build_toy_discriminator(cfg.image_shape), cfg.spec, d_rng);
  Rng probe_rng(mix_seed(cfg.seed, 0xBEEF));
  pair.probe_noise = Tensor({cfg.probe_count, cfg.noise_dim});
  probe_rng.fill_normal(pair.probe_noise, 1.0);
  return pair;
}

GanTaskSummary train_gan_task(GanPair& pair, const Dataset& data, const GanConfig& cfg) {
  EFTCL_CHECK(pair.gen.task_count() == pair.disc.task_count(),
              "generator and discriminator task counts diverged");
  EFTCL_CHECK(pair.gen.tasks.empty() || pair.gen.tasks.back().finalized,
              "previous generative task must be finalized");
  EFTCL_CHECK(data.size() >= cfg.batch_size, "not enough samples for one batch");

  const std::int64_t t = pair.gen.task_count();
  Rng task_rng(mix_seed(cfg.seed, 0x7A5C + static_cast<std::uint64_t>(t)));
  InitPolicy policy = cfg.init_policy;
  if (t == 0 && policy == InitPolicy::kForwardTransfer) policy = InitPolicy::kRandom;
  add_task(pair.gen, {}, policy, task_rng);
  add_task(pair.disc, {}, policy, task_rng);

  GanOptimizer g_opt(pair.gen, cfg);
  GanOptimizer d_opt(pair.disc, cfg);
  const ArchSpec& ga = pair.gen.arch;
  const ArchSpec& da = pair.disc.arch;

  ForwardOptions opts;  // toy nets carry no norm layers; transforms always on
  GanTaskSummary summary;
  Rng noise_rng(mix_seed(cfg.seed, 0x4015E + static_cast<std::uint64_t>(t)));

  const int epochs = t == 0 ? cfg.epochs_first : cfg.epochs_rest;
  const std::int64_t n = data.size();
  const std::int64_t stride = data.x.numel() / n;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    Rng order_rng(mix_seed(cfg.seed, mix_seed(static_cast<std::uint64_t>(t) * 977,
                                              static_cast<std::uint64_t>(epoch))));
    const std::vector<std::int64_t> order = order_rng.permutation(n);
    for (std::int64_t begin = 0; begin + cfg.batch_size <= n; begin += cfg.batch_size) {
      const std::int64_t bsz = cfg.batch_size;
      Tensor real({bsz, data.x.dim(1), data.x.dim(2), data.x.dim(3)});
      for (std::int64_t r = 0; r < bsz; ++r) {
        std::copy_n(data.x.ptr() + order[static_cast<std::size_t>(begin + r)] * stride, stride,
                    real.ptr() + r * stride);
      }
      Tensor z({bsz, cfg.noise_dim});
      noise_rng.fill_normal(z, 1.0);

      // Discriminator step: real up, fake down.
      d_opt.grads().zero();
      double d_loss = 0.0;
      {
        ForwardTrace trace;
        const ForwardResult out =
            net_forward(da, cfg.spec, pair.disc.theta, &d_opt.task(), real, opts, &trace);
        Tensor grad({bsz, 1});
        for (std::int64_t i = 0; i < bsz; ++i) {
          const double logit = out.output.at(i, 0);
          d_loss += softplus(-logit) / static_cast<double>(bsz);
          grad.at(i, 0) = -sigmoid(-logit) / static_cast<double>(bsz);
        }
        net_backward(da, cfg.spec, pair.disc.theta, &d_opt.task(), opts, trace, grad, nullptr,
                     d_opt.theta_trainable(), d_opt.grads());
      }
      {
        const ForwardResult fake =
            net_forward(ga, cfg.spec, pair.gen.theta, &g_opt.task(), z, opts);
        ForwardTrace trace;
        const ForwardResult out = net_forward(da, cfg.spec, pair.disc.theta, &d_opt.task(),
                                              fake.output, opts, &trace);
        Tensor grad({bsz, 1});
        for (std::int64_t i = 0; i < bsz; ++i) {
          const double logit = out.output.at(i, 0);
          d_loss += softplus(logit) / static_cast<double>(bsz);
          grad.at(i, 0) = sigmoid(logit) / static_cast<double>(bsz);
        }
        net_backward(da, cfg.spec, pair.disc.theta, &d_opt.task(), opts, trace, grad, nullptr,
                     d_opt.theta_trainable(), d_opt.grads());
      }
      d_opt.apply(cfg.lr);

      // Generator step: non-saturating, through a scratch discriminator
      // gradient buffer that is discarded.
      g_opt.grads().zero();
      double g_loss = 0.0;
      {
        Tensor z2({bsz, cfg.noise_dim});
        noise_rng.fill_normal(z2, 1.0);
        ForwardTrace g_trace;
        const ForwardResult fake =
            net_forward(ga, cfg.spec, pair.gen.theta, &g_opt.task(), z2, opts, &g_trace);
        ForwardTrace d_trace;
        const ForwardResult out = net_forward(da, cfg.spec, pair.disc.theta, &d_opt.task(),
                                              fake.output, opts, &d_trace);
        Tensor grad({bsz, 1});
        for (std::int64_t i = 0; i < bsz; ++i) {
          const double logit = out.output.at(i, 0);
          g_loss += softplus(-logit) / static_cast<double>(bsz);
          grad.at(i, 0) = -sigmoid(-logit) / static_cast<double>(bsz);
        }
        GradBuffers scratch = make_grad_buffers(da, pair.disc.theta, &d_opt.task());
        Tensor grad_image;
        net_backward(da, cfg.spec, pair.disc.theta, &d_opt.task(), opts, d_trace, grad, nullptr,
                     /*accumulate_global=*/false, scratch, &grad_image);
        net_backward(ga, cfg.spec, pair.gen.theta, &g_opt.task(), opts, g_trace, grad_image,
                     nullptr, g_opt.theta_trainable(), g_opt.grads());
      }
      g_opt.apply(cfg.lr);

      EFTCL_CHECK(std::isfinite(d_loss) && std::isfinite(g_loss),
                  "generative training diverged at task " << t);
      summary.steps += 1;
      summary.final_d_loss = d_loss;
      summary.final_g_loss = g_loss;
    }
  }

  finalize_task(pair.gen, t);
  finalize_task(pair.disc, t);

  const Tensor samples = gan_sample(pair, t, pair.probe_noise);
  double mean = 0.0;
  for (double v : samples.data) mean += v;
  summary.sample_mean = mean / static_cast<double>(samples.numel());
  pair.probe_samples.push_back(samples);
  return summary;
}

Tensor gan_sample(const GanPair& pair, std::int64_t t, const Tensor& noise) {
  EFTCL_CHECK(t >= 0 && t < pair.gen.task_count(), "unknown generative task " << t);
  ForwardOptions opts;
  return net_forward(pair.gen.arch, pair.gen.spec, pair.gen.theta,
                     &pair.gen.tasks[static_cast<std::size_t>(t)], noise, opts)
      .output;
}

void save_gan(const GanPair& pair, const std::string& dir) {
  save_registry(pair.gen, (fs::path(dir) / "generator").string());
  save_registry(pair.disc, (fs::path(dir) / "discriminator").string());
  std::vector<NamedTensor> probes;
  probes.push_back({"noise", pair.probe_noise});
  for (std::size_t i = 0; i < pair.probe_samples.size(); ++i) {
    probes.push_back({"samples_task_" + std::to_string(i), pair.probe_samples[i]});
  }
  write_archive((fs::path(dir) / "probe.tsr").string(), probes);
}

GanPair load_gan(const std::string& dir) {
  GanPair pair;
  pair.gen = load_registry((fs::path(dir) / "generator").string());
  pair.disc = load_registry((fs::path(dir) / "discriminator").string());
  for (auto& nt : read_archive((fs::path(dir) / "probe.tsr").string())) {
    if (nt.name == "noise") {
      pair.probe_noise = std::move(nt.tensor);
    } else {
      pair.probe_samples.push_back(std::move(nt.tensor));
    }
  }
  return pair;
}

}  // namespace eftcl
