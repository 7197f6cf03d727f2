#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "eftcl/margin.hpp"
#include "eftcl/network.hpp"
#include "test_util.hpp"

using namespace eftcl;
using eftcl::testutil::gradcheck;

namespace {
// Activation kinks make coarse steps unreliable at network level; 1e-6 keeps
// central differences on one side of each kink while staying well above
// double-precision noise.
double gradcheck_net(eftcl::Tensor& param, const eftcl::Tensor& analytic,
                     const std::function<double()>& eval) {
  return gradcheck(param, analytic, eval, 1e-6);
}
}  // namespace

namespace {

LayerDesc conv_desc(std::int64_t in_ch, std::int64_t out_ch, int stride = 1, int pad = 1,
                    int kernel = 3, bool bias = false) {
  LayerDesc d;
  d.kind = LayerKind::kConv;
  d.in_ch = in_ch;
  d.out_ch = out_ch;
  d.kernel = kernel;
  d.stride = stride;
  d.pad = pad;
  d.conv_bias = bias;
  return d;
}

LayerDesc simple(LayerKind kind) {
  LayerDesc d;
  d.kind = kind;
  return d;
}

LayerDesc act_desc(Activation a) {
  LayerDesc d;
  d.kind = LayerKind::kActivation;
  d.act = a;
  return d;
}

LayerDesc norm_desc(std::int64_t ch) {
  LayerDesc d;
  d.kind = LayerKind::kNorm;
  d.out_ch = ch;
  return d;
}

LayerDesc pool_desc(PoolKind p) {
  LayerDesc d;
  d.kind = LayerKind::kPool;
  d.pool = p;
  return d;
}

/// Two conv layers with a norm between them, global pooling and one FC.
ArchSpec toy_arch() {
  ArchSpec a;
  a.name = "toy2conv";
  a.input_shape = {2, 6, 6};
  a.layers.push_back(conv_desc(2, 4));
  a.layers.push_back(norm_desc(4));
  a.layers.push_back(act_desc(Activation::kRelu));
  a.layers.push_back(conv_desc(4, 4));
  a.layers.push_back(act_desc(Activation::kRelu));
  a.layers.push_back(pool_desc(PoolKind::kGlobalAvg));
  LayerDesc fc;
  fc.kind = LayerKind::kFc;
  fc.in_dim = 4;
  fc.out_dim = 6;
  a.layers.push_back(fc);
  a.validate_and_derive();
  return a;
}

/// Residual arch with a strided shortcut conv.
ArchSpec residual_arch() {
  ArchSpec a;
  a.name = "toyresidual";
  a.input_shape = {2, 8, 8};
  a.layers.push_back(conv_desc(2, 4));
  a.layers.push_back(simple(LayerKind::kBlockBegin));
  a.layers.push_back(conv_desc(4, 8, 2));
  a.layers.push_back(act_desc(Activation::kRelu));
  a.layers.push_back(conv_desc(8, 8));
  LayerDesc sc = conv_desc(4, 8, 2, 0, 1);
  sc.on_shortcut = true;
  a.layers.push_back(sc);
  a.layers.push_back(simple(LayerKind::kBlockEnd));
  a.layers.push_back(act_desc(Activation::kRelu));
  a.layers.push_back(pool_desc(PoolKind::kGlobalAvg));
  a.validate_and_derive();
  return a;
}

struct Toy {
  ArchSpec arch;
  EftConvSpec spec;
  GlobalParams theta;
  TaskParams task;
};

Toy make_toy(const ArchSpec& arch, EftConvSpec spec, std::uint64_t seed,
             InitPolicy policy = InitPolicy::kRandom, std::int64_t classes = 3) {
  Toy t{arch, spec, {}, {}};
  Rng rng(seed);
  t.theta = init_global(arch, rng);
  t.task = init_task(arch, spec, 0, classes, policy, nullptr, rng);
  return t;
}

}  // namespace

TEST_CASE("build_arch produces the documented insertion sites") {
  const ArchSpec small = build_arch("smallcnn", {3, 16, 16});
  REQUIRE(small.conv_sites.size() == 4);
  CHECK(small.conv_sites[0].channels == 32);
  CHECK(small.conv_sites[1].channels == 64);
  CHECK(small.conv_sites[2].channels == 128);
  CHECK(small.conv_sites[3].channels == 128);
  CHECK(small.feature_dim == 128);
  CHECK(small.calibrate_features);

  const ArchSpec rn = build_arch("resnet18-cifar");
  CHECK(rn.conv_sites.size() == 20);  // stem + 16 block convs + 3 shortcut convs
  CHECK(rn.feature_dim == 512);

  const ArchSpec le = build_arch("lenet");
  CHECK(le.conv_sites.size() == 2);
  CHECK(le.feature_dim == 84);

  CHECK_THROWS_AS(build_arch("unknown-arch"), DimError);
}

TEST_CASE("identity transforms reproduce the base network bit for bit") {
  for (const EftMode mode : {EftMode::kSerial, EftMode::kParallel}) {
    const ArchSpec arch = build_arch("smallcnn", {3, 16, 16});
    Toy toy = make_toy(arch, {4, 8, mode}, 99, InitPolicy::kIdentity);
    Rng rng(7);
    Tensor x({3, 3, 16, 16});
    rng.fill_normal(x, 1.0);

    ForwardOptions with;
    ForwardOptions without;
    without.apply_eft = false;
    const Tensor a = net_forward(arch, toy.spec, toy.theta, &toy.task, x, with).output;
    const Tensor b = net_forward(arch, toy.spec, toy.theta, &toy.task, x, without).output;
    CHECK(max_abs_diff(a, b) == 0.0);
  }
}

TEST_CASE("forward is pure and deterministic") {
  const ArchSpec arch = build_arch("smallcnn", {3, 16, 16});
  Toy toy = make_toy(arch, {4, 8, EftMode::kSerial}, 5);
  Rng rng(8);
  Tensor x({2, 3, 16, 16});
  rng.fill_normal(x, 1.0);

  const std::uint64_t theta_before = digest_global(toy.theta);
  const std::uint64_t task_before = digest_task(toy.task);
  ForwardOptions opts;
  const Tensor a = net_forward(arch, toy.spec, toy.theta, &toy.task, x, opts).output;
  const Tensor b = net_forward(arch, toy.spec, toy.theta, &toy.task, x, opts).output;
  CHECK(bit_equal(a, b));
  CHECK(digest_global(toy.theta) == theta_before);
  CHECK(digest_task(toy.task) == task_before);
  CHECK(a.dim(0) == 2);
  CHECK(a.dim(1) == 3);  // classes
}

TEST_CASE("different task parameters give different logits") {
  const ArchSpec arch = build_arch("smallcnn", {3, 16, 16});
  const EftConvSpec spec{4, 8, EftMode::kSerial};
  Rng rng(11);
  GlobalParams theta = init_global(arch, rng);
  TaskParams t1 = init_task(arch, spec, 0, 3, InitPolicy::kRandom, nullptr, rng);
  TaskParams t2 = init_task(arch, spec, 1, 3, InitPolicy::kRandom, nullptr, rng);
  Tensor x({1, 3, 16, 16});
  rng.fill_normal(x, 1.0);
  ForwardOptions opts;
  const Tensor a = net_forward(arch, spec, theta, &t1, x, opts).output;
  const Tensor b = net_forward(arch, spec, theta, &t2, x, opts).output;
  CHECK(max_abs_diff(a, b) > 1e-8);
}

TEST_CASE("forward counter tracks invocations") {
  const ArchSpec arch = build_arch("smallcnn", {3, 16, 16});
  Toy toy = make_toy(arch, {4, 8, EftMode::kSerial}, 3);
  Tensor x({1, 3, 16, 16}, 0.5);
  reset_forward_call_count();
  ForwardOptions opts;
  net_forward(arch, toy.spec, toy.theta, &toy.task, x, opts);
  net_forward(arch, toy.spec, toy.theta, &toy.task, x, opts);
  CHECK(forward_call_count() == 2);
}

TEST_CASE("toy net gradients match finite differences (theta and tau, batch norm stats)") {
  const ArchSpec arch = toy_arch();
  const EftConvSpec spec{2, 2, EftMode::kSerial};
  Toy toy = make_toy(arch, spec, 42);
  Rng rng(43);
  Tensor x({4, 2, 6, 6});
  rng.fill_normal(x, 1.0);
  const std::vector<std::int64_t> labels{0, 2, 1, 0};

  ForwardOptions opts;
  opts.bn_batch_stats = true;  // first-task path exercises batch statistics

  auto loss = [&]() {
    const ForwardResult r = net_forward(arch, spec, toy.theta, &toy.task, x, opts);
    return cross_entropy(r.output, labels, nullptr);
  };

  ForwardTrace trace;
  const ForwardResult r = net_forward(arch, spec, toy.theta, &toy.task, x, opts, &trace);
  Tensor grad_logits;
  cross_entropy(r.output, labels, &grad_logits);
  GradBuffers grads = make_grad_buffers(arch, toy.theta, &toy.task);
  net_backward(arch, spec, toy.theta, &toy.task, opts, trace, grad_logits, nullptr,
               /*accumulate_global=*/true, grads);

  CHECK(gradcheck_net(toy.theta.layers[0].w, grads.global[0].w, loss) < 1e-4);
  CHECK(gradcheck_net(toy.theta.layers[1].gamma, grads.global[1].gamma, loss) < 1e-4);
  CHECK(gradcheck_net(toy.theta.layers[1].beta, grads.global[1].beta, loss) < 1e-4);
  CHECK(gradcheck_net(toy.theta.layers[3].w, grads.global[3].w, loss) < 1e-4);
  CHECK(gradcheck_net(toy.theta.layers[6].w, grads.global[6].w, loss) < 1e-4);
  CHECK(gradcheck_net(toy.task.adapters[0].spatial, grads.task.adapters[0].spatial, loss) < 1e-4);
  CHECK(gradcheck_net(toy.task.adapters[1].pointwise, grads.task.adapters[1].pointwise, loss) < 1e-4);
  CHECK(gradcheck_net(toy.task.calib.scale, grads.task.calib, loss) < 1e-4);
  CHECK(gradcheck_net(toy.task.head.w, grads.task.head_w, loss) < 1e-4);
  CHECK(gradcheck_net(toy.task.head.bias, grads.task.head_bias, loss) < 1e-4);
}

TEST_CASE("joint objective gradient on the 2-conv toy net (margin term active)") {
  const ArchSpec arch = toy_arch();
  const EftConvSpec spec{2, 2, EftMode::kSerial};
  Toy toy = make_toy(arch, spec, 77);
  // Frozen-theta path: eval-mode normalization with nontrivial statistics.
  Rng stat_rng(78);
  for (auto& lp : toy.theta.layers) {
    if (lp.run_mean.numel() == 0) continue;
    stat_rng.fill_normal(lp.run_mean, 0.2);
    for (std::int64_t c = 0; c < lp.run_var.numel(); ++c)
      lp.run_var.at(c) = 1.0 + 0.3 * stat_rng.uniform();
  }

  Rng rng(79);
  Tensor x({4, 2, 6, 6});
  rng.fill_normal(x, 1.0);
  const std::vector<std::int64_t> labels{1, 0, 2, 1};

  // Fixed earlier-task summaries; gradients are blocked through them by
  // construction, matching training.
  std::vector<GaussianStats> priors;
  for (int i = 0; i < 2; ++i) {
    Tensor f({8, 6});
    rng.fill_normal(f, 1.0);
    priors.push_back(fit_gaussian(f));
  }
  MarginConfig mcfg;
  mcfg.lambda = 0.05;
  mcfg.delta = 50.0;  // hinges active, far from the kink

  ForwardOptions opts;  // eval-mode norm: theta frozen
  auto loss = [&]() {
    const ForwardResult r = net_forward(arch, spec, toy.theta, &toy.task, x, opts);
    const double ce = cross_entropy(r.output, labels, nullptr);
    const double lm = margin_loss(fit_gaussian(r.features), priors, mcfg.delta);
    return ce + mcfg.lambda * lm;
  };

  ForwardTrace trace;
  const ForwardResult r = net_forward(arch, spec, toy.theta, &toy.task, x, opts, &trace);
  Tensor grad_logits;
  cross_entropy(r.output, labels, &grad_logits);
  Tensor margin_grad = margin_loss_backward(r.features, priors, mcfg.delta);
  for (double& v : margin_grad.data) v *= mcfg.lambda;
  GradBuffers grads = make_grad_buffers(arch, toy.theta, &toy.task);
  net_backward(arch, spec, toy.theta, &toy.task, opts, trace, grad_logits, &margin_grad,
               /*accumulate_global=*/false, grads);

  CHECK(gradcheck_net(toy.task.adapters[0].spatial, grads.task.adapters[0].spatial, loss) < 1e-4);
  CHECK(gradcheck_net(toy.task.adapters[0].pointwise, grads.task.adapters[0].pointwise, loss) < 1e-4);
  CHECK(gradcheck_net(toy.task.adapters[1].spatial, grads.task.adapters[1].spatial, loss) < 1e-4);
  CHECK(gradcheck_net(toy.task.calib.scale, grads.task.calib, loss) < 1e-4);
  CHECK(gradcheck_net(toy.task.head.w, grads.task.head_w, loss) < 1e-4);
}

TEST_CASE("residual block with shortcut conv backpropagates correctly") {
  const ArchSpec arch = residual_arch();
  const EftConvSpec spec{2, 2, EftMode::kSerial};
  Toy toy = make_toy(arch, spec, 55);
  Rng rng(56);
  Tensor x({2, 2, 8, 8});
  rng.fill_normal(x, 1.0);
  const std::vector<std::int64_t> labels{2, 0};

  ForwardOptions opts;
  auto loss = [&]() {
    const ForwardResult r = net_forward(arch, spec, toy.theta, &toy.task, x, opts);
    return cross_entropy(r.output, labels, nullptr);
  };
  ForwardTrace trace;
  const ForwardResult r = net_forward(arch, spec, toy.theta, &toy.task, x, opts, &trace);
  Tensor grad_logits;
  cross_entropy(r.output, labels, &grad_logits);
  GradBuffers grads = make_grad_buffers(arch, toy.theta, &toy.task);
  net_backward(arch, spec, toy.theta, &toy.task, opts, trace, grad_logits, nullptr, true, grads);

  CHECK(gradcheck_net(toy.theta.layers[0].w, grads.global[0].w, loss) < 1e-4);
  CHECK(gradcheck_net(toy.theta.layers[2].w, grads.global[2].w, loss) < 1e-4);
  CHECK(gradcheck_net(toy.theta.layers[4].w, grads.global[4].w, loss) < 1e-4);
  CHECK(gradcheck_net(toy.theta.layers[5].w, grads.global[5].w, loss) < 1e-4);  // shortcut conv
  // transform on the shortcut conv's site
  const int sc_site = arch.site_of_layer[5];
  REQUIRE(sc_site >= 0);
  CHECK(gradcheck_net(toy.task.adapters[static_cast<std::size_t>(sc_site)].spatial,
                  grads.task.adapters[static_cast<std::size_t>(sc_site)].spatial, loss) < 1e-4);
}

TEST_CASE("parallel mode routes gradients through both paths") {
  ArchSpec arch = toy_arch();
  const EftConvSpec spec{2, 2, EftMode::kParallel};
  Toy toy = make_toy(arch, spec, 91);
  Rng rng(92);
  Tensor x({3, 2, 6, 6});
  rng.fill_normal(x, 1.0);
  const std::vector<std::int64_t> labels{0, 1, 2};

  ForwardOptions opts;
  auto loss = [&]() {
    const ForwardResult r = net_forward(arch, spec, toy.theta, &toy.task, x, opts);
    return cross_entropy(r.output, labels, nullptr);
  };
  ForwardTrace trace;
  const ForwardResult r = net_forward(arch, spec, toy.theta, &toy.task, x, opts, &trace);
  Tensor grad_logits;
  cross_entropy(r.output, labels, &grad_logits);
  GradBuffers grads = make_grad_buffers(arch, toy.theta, &toy.task);
  net_backward(arch, spec, toy.theta, &toy.task, opts, trace, grad_logits, nullptr, true, grads);

  // Site 0 has mismatched channels (2 in, 4 out): fallback route. Site 1
  // matches (4 in, 4 out): input-fed route.
  CHECK(trace.layers[0].route == EftRoute::kParallelOutput);
  CHECK(trace.layers[3].route == EftRoute::kParallelInput);
  CHECK(gradcheck_net(toy.task.adapters[0].spatial, grads.task.adapters[0].spatial, loss) < 1e-4);
  CHECK(gradcheck_net(toy.task.adapters[1].spatial, grads.task.adapters[1].spatial, loss) < 1e-4);
  CHECK(gradcheck_net(toy.theta.layers[0].w, grads.global[0].w, loss) < 1e-4);
  CHECK(gradcheck_net(toy.theta.layers[3].w, grads.global[3].w, loss) < 1e-4);
}

TEST_CASE("generator and discriminator shapes compose") {
  const ArchSpec g = build_toy_generator(16, {1, 8, 8});
  const ArchSpec d = build_toy_discriminator({1, 8, 8});
  CHECK(!g.has_head);
  CHECK(g.conv_sites.size() == 2);  // projection conv is exempt
  CHECK(d.conv_sites.size() == 2);

  const EftConvSpec spec{2, 2, EftMode::kSerial};
  Rng rng(100);
  GlobalParams gtheta = init_global(g, rng);
  TaskParams gtask = init_task(g, spec, 0, 0, InitPolicy::kIdentity, nullptr, rng);
  Tensor z({5, 16});
  rng.fill_normal(z, 1.0);
  ForwardOptions opts;
  const Tensor img = net_forward(g, spec, gtheta, &gtask, z, opts).output;
  CHECK(img.dim(0) == 5);
  CHECK(img.dim(1) == 1);
  CHECK(img.dim(2) == 8);

  GlobalParams dtheta = init_global(d, rng);
  TaskParams dtask = init_task(d, spec, 0, 0, InitPolicy::kIdentity, nullptr, rng);
  const Tensor logit = net_forward(d, spec, dtheta, &dtask, img, opts).output;
  CHECK(logit.dim(0) == 5);
  CHECK(logit.dim(1) == 1);
}
