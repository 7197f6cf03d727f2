#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "eftcl/eft.hpp"
#include "eftcl/kernels.hpp"
#include "test_util.hpp"

using namespace eftcl;
using eftcl::testutil::gradcheck;

namespace {

Tensor random_map(std::int64_t b, std::int64_t k, std::int64_t m, std::int64_t n, Rng& rng) {
  Tensor t({b, k, m, n});
  rng.fill_normal(t, 1.0);
  return t;
}

/// Direct nested-loop statement of the grouped 3x3 transform, written against
/// the definition rather than the library kernels.
Tensor spatial_oracle(const Tensor& f, const Tensor& filters, std::int64_t a) {
  const std::int64_t B = f.dim(0), K = f.dim(1), M = f.dim(2), N = f.dim(3);
  Tensor out({B, K, M, N});
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t k = 0; k < K; ++k)
      for (std::int64_t y = 0; y < M; ++y)
        for (std::int64_t x = 0; x < N; ++x) {
          double acc = 0.0;
          for (std::int64_t j = 0; j < a; ++j)
            for (std::int64_t dy = -1; dy <= 1; ++dy)
              for (std::int64_t dx = -1; dx <= 1; ++dx) {
                const std::int64_t yy = y + dy, xx = x + dx;
                if (yy < 0 || yy >= M || xx < 0 || xx >= N) continue;
                acc += filters.at(k, j, dy + 1, dx + 1) * f.at(b, (k / a) * a + j, yy, xx);
              }
          out.at(b, k, y, x) = acc;
        }
  return out;
}

Tensor pointwise_oracle(const Tensor& f, const Tensor& filters, std::int64_t bq) {
  const std::int64_t B = f.dim(0), K = f.dim(1), M = f.dim(2), N = f.dim(3);
  Tensor out({B, K, M, N});
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t k = 0; k < K; ++k)
      for (std::int64_t y = 0; y < M; ++y)
        for (std::int64_t x = 0; x < N; ++x) {
          double acc = 0.0;
          for (std::int64_t j = 0; j < bq; ++j)
            acc += filters.at(k, j, 0, 0) * f.at(b, (k / bq) * bq + j, y, x);
          out.at(b, k, y, x) = acc;
        }
  return out;
}

}  // namespace

TEST_CASE("spec validation rejects a fully disabled transform") {
  EftConvSpec spec{0, 0, EftMode::kSerial};
  CHECK_THROWS_AS(spec.validate(), DimError);
  EftConvSpec ok{0, 4, EftMode::kSerial};
  CHECK_NOTHROW(ok.validate());
  CHECK(!ok.spatial_enabled());
  CHECK(ok.pointwise_enabled());
  CHECK_THROWS_AS(ok.check_channels(6), DimError);  // 6 % 4 != 0
}

TEST_CASE("identity-initialized spatial branch reproduces the input exactly") {
  Rng rng(1);
  EftConvSpec spec{4, 8, EftMode::kSerial};
  Tensor f = random_map(2, 8, 5, 5, rng);
  EftConvParams p = init_identity(spec, 8);
  CHECK(bit_equal(apply_spatial_branch(f, p, spec.a), f));
  CHECK(bit_equal(apply_eft_conv(f, p, spec), f));  // pointwise branch zeroed
}

TEST_CASE("all-zero spatial filters produce a zero map") {
  Rng rng(2);
  Tensor f = random_map(1, 4, 3, 3, rng);
  EftConvParams p;
  p.spatial = Tensor({4, 2, 3, 3});
  Tensor out = apply_spatial_branch(f, p, 2);
  CHECK(max_abs_diff(out, Tensor::zeros_like(f)) == 0.0);
}

TEST_CASE("handcrafted grouped case matches the nested-loop oracle") {
  Tensor f({1, 2, 3, 3});
  for (std::int64_t i = 0; i < f.numel(); ++i) f.at(i) = static_cast<double>(i) - 4.0;
  Tensor filters({2, 2, 3, 3});
  for (std::int64_t i = 0; i < filters.numel(); ++i)
    filters.at(i) = 0.1 * static_cast<double>(i % 7) - 0.2;
  EftConvParams p;
  p.spatial = filters;
  const Tensor got = apply_spatial_branch(f, p, 2);
  const Tensor want = spatial_oracle(f, filters, 2);
  CHECK(max_abs_diff(got, want) < 1e-12);
}

TEST_CASE("pointwise identity and the [1,2] example") {
  Rng rng(3);
  EftConvSpec spec{0, 2, EftMode::kSerial};
  Tensor f = random_map(2, 6, 4, 4, rng);
  EftConvParams ident = init_identity(spec, 6);
  CHECK(bit_equal(apply_pointwise_branch(f, ident, 2), f));

  Tensor v({1, 2, 1, 1});
  v.data = {1.0, 2.0};
  EftConvParams p;
  p.pointwise = Tensor({2, 2, 1, 1});
  p.pointwise.data = {1.0, 1.0, 0.0, -1.0};
  const Tensor out = apply_pointwise_branch(v, p, 2);
  CHECK(out.at(0, 0, 0, 0) == doctest::Approx(3.0));
  CHECK(out.at(0, 1, 0, 0) == doctest::Approx(-2.0));
}

TEST_CASE("random pointwise case K=8 b=4 matches the per-pixel oracle") {
  Rng rng(4);
  Tensor f = random_map(2, 8, 3, 5, rng);
  Tensor filters({8, 4, 1, 1});
  rng.fill_normal(filters, 1.0);
  EftConvParams p;
  p.pointwise = filters;
  CHECK(max_abs_diff(apply_pointwise_branch(f, p, 4), pointwise_oracle(f, filters, 4)) < 1e-12);
}

TEST_CASE("branch disables select the right composition") {
  Rng rng(5);
  Tensor f = random_map(1, 8, 4, 4, rng);
  EftConvSpec both{2, 4, EftMode::kSerial};
  EftConvParams p = init_random(both, 8, rng);

  EftConvSpec only_spatial{2, 0, EftMode::kSerial};
  EftConvParams ps;
  ps.spatial = p.spatial;
  CHECK(bit_equal(apply_eft_conv(f, ps, only_spatial), apply_spatial_branch(f, p, 2)));

  EftConvSpec only_pointwise{0, 4, EftMode::kSerial};
  EftConvParams pp;
  pp.pointwise = p.pointwise;
  CHECK(bit_equal(apply_eft_conv(f, pp, only_pointwise), apply_pointwise_branch(f, p, 4)));

  const Tensor sum = apply_eft_conv(f, p, both);
  Tensor expect = apply_spatial_branch(f, p, 2);
  axpy(1.0, apply_pointwise_branch(f, p, 4), expect);
  CHECK(max_abs_diff(sum, expect) < 1e-12);
}

TEST_CASE("identity init with a disabled spatial branch falls back to pointwise delta") {
  Rng rng(6);
  EftConvSpec spec{0, 4, EftMode::kSerial};
  Tensor f = random_map(2, 8, 3, 3, rng);
  EftConvParams p = init_identity(spec, 8);
  CHECK(bit_equal(apply_eft_conv(f, p, spec), f));
}

TEST_CASE("diagonal calibration examples") {
  EftFcParams ones = init_fc_identity(3);
  Tensor f({3});
  f.data = {1.0, 2.0, 3.0};
  CHECK(bit_equal(apply_eft_fc(f, ones), f));

  EftFcParams e;
  e.scale = Tensor({3});
  e.scale.data = {2.0, 0.0, -1.0};
  const Tensor h = apply_eft_fc(f, e);
  CHECK(h.at(0) == 2.0);
  CHECK(h.at(1) == 0.0);
  CHECK(h.at(2) == -3.0);

  EftFcParams zero;
  zero.scale = Tensor({3});
  CHECK(max_abs_diff(apply_eft_fc(f, zero), Tensor({3})) == 0.0);

  Tensor wrong({4}, 1.0);
  CHECK_THROWS_AS(apply_eft_fc(wrong, e), DimError);
}

TEST_CASE("compose: serial identity, parallel zero, parallel handcrafted") {
  Rng rng(7);
  EftConvSpec serial{2, 2, EftMode::kSerial};
  Tensor input = random_map(1, 4, 4, 4, rng);
  Tensor base = random_map(1, 4, 4, 4, rng);

  CHECK(bit_equal(compose(input, base, init_identity(serial, 4), serial), base));

  EftConvSpec parallel{2, 2, EftMode::kParallel};
  CHECK(bit_equal(compose(input, base, init_identity(parallel, 4), parallel), base));

  EftConvParams p = init_random(parallel, 4, rng);
  Tensor expect = base;
  Tensor add = spatial_oracle(input, p.spatial, 2);
  axpy(1.0, add, expect);
  axpy(1.0, pointwise_oracle(input, p.pointwise, 2), expect);
  CHECK(max_abs_diff(compose(input, base, p, parallel), expect) < 1e-12);

  // Mismatched channel counts fall back to transforming the base output.
  Tensor narrow_input = random_map(1, 2, 4, 4, rng);
  Tensor fallback = base;
  axpy(1.0, apply_eft_conv(base, p, parallel), fallback);
  CHECK(bit_equal(compose(narrow_input, base, p, parallel), fallback));
}

TEST_CASE("init_from_previous yields an independent deep copy") {
  Rng rng(8);
  EftConvSpec spec{2, 4, EftMode::kSerial};
  EftConvParams a = init_random(spec, 8, rng);
  EftConvParams b = init_from_previous(a);
  CHECK(bit_equal(a.spatial, b.spatial));
  CHECK(bit_equal(a.pointwise, b.pointwise));
  b.spatial.at(0) += 1.0;
  CHECK(!bit_equal(a.spatial, b.spatial));

  EftFcParams fa = init_fc_identity(5);
  EftFcParams fb = init_from_previous(fa);
  fb.scale.at(2) = 9.0;
  CHECK(fa.scale.at(2) == 1.0);
}

TEST_CASE("random init is reproducible per seed") {
  EftConvSpec spec{4, 8, EftMode::kSerial};
  EftConvParams a = init_random(spec, 16, std::uint64_t{123});
  EftConvParams b = init_random(spec, 16, std::uint64_t{123});
  EftConvParams c = init_random(spec, 16, std::uint64_t{124});
  CHECK(bit_equal(a.spatial, b.spatial));
  CHECK(bit_equal(a.pointwise, b.pointwise));
  CHECK(!bit_equal(a.spatial, c.spatial));
}

TEST_CASE("shape preservation under randomized specs") {
  Rng rng(9);
  for (int trial = 0; trial < 24; ++trial) {
    const std::int64_t k_choices[] = {2, 4, 8, 12, 16};
    const std::int64_t k = k_choices[rng.uniform_int(5)];
    std::vector<int> divisors;
    for (int d = 1; d <= k; ++d)
      if (k % d == 0) divisors.push_back(d);
    EftConvSpec spec;
    spec.a = divisors[static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(divisors.size())))];
    spec.b = divisors[static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(divisors.size())))];
    Tensor f = random_map(1 + rng.uniform_int(3), k, 1 + rng.uniform_int(6), 1 + rng.uniform_int(6), rng);
    const Tensor out = apply_eft_conv(f, init_random(spec, k, rng), spec);
    CHECK(out.same_shape(f));
  }
}

TEST_CASE("linearity in the input map") {
  Rng rng(10);
  EftConvSpec spec{2, 4, EftMode::kSerial};
  EftConvParams p = init_random(spec, 8, rng);
  Tensor f1 = random_map(2, 8, 5, 5, rng);
  Tensor f2 = random_map(2, 8, 5, 5, rng);
  const double alpha = 0.7, beta = -1.3;
  Tensor mix = Tensor::zeros_like(f1);
  axpy(alpha, f1, mix);
  axpy(beta, f2, mix);
  Tensor lhs = apply_eft_conv(mix, p, spec);
  Tensor rhs = Tensor::zeros_like(f1);
  axpy(alpha, apply_eft_conv(f1, p, spec), rhs);
  axpy(beta, apply_eft_conv(f2, p, spec), rhs);
  CHECK(eftcl::testutil::max_rel_err(lhs, rhs) < 1e-5);
}

TEST_CASE("group locality: a perturbed channel only moves its own group") {
  Rng rng(11);
  const std::int64_t k = 8;
  for (const auto [a, b] : std::vector<std::pair<int, int>>{{2, 0}, {0, 4}}) {
    EftConvSpec spec{a, b, EftMode::kSerial};
    EftConvParams p = init_random(spec, k, rng);
    Tensor f = random_map(1, k, 4, 4, rng);
    const Tensor base = apply_eft_conv(f, p, spec);
    const std::int64_t c = rng.uniform_int(k);
    f.at(0, c, 2, 2) += 3.0;
    const Tensor bumped = apply_eft_conv(f, p, spec);
    const std::int64_t group = a > 0 ? a : b;
    for (std::int64_t ch = 0; ch < k; ++ch) {
      double diff = 0.0;
      for (std::int64_t y = 0; y < 4; ++y)
        for (std::int64_t x = 0; x < 4; ++x)
          diff = std::max(diff, std::fabs(bumped.at(0, ch, y, x) - base.at(0, ch, y, x)));
      if (ch / group == c / group) continue;  // same group may move
      CHECK(diff == 0.0);
    }
  }
}

TEST_CASE("oracle equivalence across K <= 16 and all divisor cardinalities") {
  Rng rng(12);
  for (std::int64_t k = 2; k <= 16; k += 2) {
    for (int a : {1, 2, 4, 8}) {
      for (int b : {1, 2, 4, 8}) {
        if (k % a != 0 || k % b != 0) continue;
        EftConvSpec spec{a, b, EftMode::kSerial};
        EftConvParams p = init_random(spec, k, rng);
        Tensor f = random_map(2, k, 3, 4, rng);
        Tensor want = spatial_oracle(f, p.spatial, a);
        axpy(1.0, pointwise_oracle(f, p.pointwise, b), want);
        CHECK(eftcl::testutil::max_rel_err(apply_eft_conv(f, p, spec), want) < 1e-5);
      }
    }
  }
}

TEST_CASE("transform gradients match central finite differences") {
  Rng rng(13);
  EftConvSpec spec{2, 2, EftMode::kSerial};
  EftConvParams p = init_random(spec, 4, rng);
  Tensor f = random_map(2, 4, 3, 3, rng);
  Tensor coeff = random_map(2, 4, 3, 3, rng);

  auto loss = [&]() {
    const Tensor out = apply_eft_conv(f, p, spec);
    double acc = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i) acc += out.data[i] * coeff.data[i];
    return acc;
  };
  Tensor g_spatial = Tensor::zeros_like(p.spatial);
  Tensor g_pointwise = Tensor::zeros_like(p.pointwise);
  kernels::eft_spatial_backward_filters(coeff, f, g_spatial);
  kernels::eft_pointwise_backward_filters(coeff, f, g_pointwise);
  CHECK(gradcheck(p.spatial, g_spatial, loss) < 1e-4);
  CHECK(gradcheck(p.pointwise, g_pointwise, loss) < 1e-4);

  // calibration gradient: d/de[j] of sum coeff * (e . f) = sum_i coeff[i][j] f[i][j]
  EftFcParams e;
  e.scale = Tensor({6});
  Rng rng2(14);
  rng2.fill_normal(e.scale, 1.0);
  Tensor feat({4, 6});
  rng2.fill_normal(feat, 1.0);
  Tensor fcoeff({4, 6});
  rng2.fill_normal(fcoeff, 1.0);
  auto loss_fc = [&]() {
    const Tensor h = apply_eft_fc(feat, e);
    double acc = 0.0;
    for (std::size_t i = 0; i < h.data.size(); ++i) acc += h.data[i] * fcoeff.data[i];
    return acc;
  };
  Tensor g_e({6});
  for (std::int64_t j = 0; j < 6; ++j) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < 4; ++i) acc += fcoeff.at(i, j) * feat.at(i, j);
    g_e.at(j) = acc;
  }
  CHECK(gradcheck(e.scale, g_e, loss_fc) < 1e-4);
}
