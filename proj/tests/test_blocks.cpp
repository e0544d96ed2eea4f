// Copyright (c) 2026 The MAFNet-HSI Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "mafnet/blocks.hpp"
#include "support.hpp"

using namespace mafnet;
using namespace mafnet::testing;

namespace {

constexpr double kGradTol = 1e-4;

GradReport ain_gradcheck(int c, int h, int w, std::uint64_t seed) {
  AinModule<double> m(c);
  randomize_module(m, seed);
  auto x = random_tensor<double>(c, h, w, seed + 1);
  auto xc = random_tensor<double>(2 * c, h / 2, w / 2, seed + 2);
  const auto wts = random_tensor<double>(c, h, w, seed + 3);
  auto loss = [&] { return dot(m.forward(x, xc), wts); };
  zero_module_grads(m);
  m.forward(x, xc);
  auto [dx, dxc] = m.backward(wts);
  std::vector<Probe> probes{tensor_probe("h", x, dx), tensor_probe("h_coarse", xc, dxc)};
  add_param_probes(m, probes);
  return check_gradients(loss, probes);
}

}  // namespace

TEST_CASE("conv2d matches a direct convolution with reflect and zero padding") {
  for (Padding mode : {Padding::kReflect, Padding::kZeros}) {
    for (int stride : {1, 2}) {
      Conv2d<double> conv({3, 2, 3, stride, 1, mode});
      randomize_module(conv, 11);
      const auto x = random_tensor<double>(3, 7, 6, 12);
      const auto y = conv.forward(x);
      auto at = [&](int c, int i, int j) -> double {
        if (mode == Padding::kReflect) return x(c, reflect_index(i, 7), reflect_index(j, 6));
        if (i < 0 || j < 0 || i >= 7 || j >= 6) return 0.0;
        return x(c, i, j);
      };
      REQUIRE(y.height() == (7 + 2 - 3) / stride + 1);
      for (int o = 0; o < 2; ++o) {
        for (int i = 0; i < y.height(); ++i) {
          for (int j = 0; j < y.width(); ++j) {
            double s = conv.bias().value[o];
            for (int c = 0; c < 3; ++c)
              for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b)
                  s += conv.weight().value[((o * 3 + c) * 3 + a) * 3 + b] *
                       at(c, i * stride + a - 1, j * stride + b - 1);
            CHECK(y(o, i, j) == doctest::Approx(s).epsilon(1e-12));
          }
        }
      }
    }
  }
}

TEST_CASE("conv and transposed conv gradients") {
  SUBCASE("conv2d") {
    for (Padding mode : {Padding::kReflect, Padding::kZeros}) {
      Conv2d<double> conv({3, 4, 3, 2, 1, mode});
      randomize_module(conv, 21);
      auto x = random_tensor<double>(3, 8, 6, 22);
      const auto wts = random_tensor<double>(4, 4, 3, 23);
      auto loss = [&] { return dot(conv.forward(x), wts); };
      zero_module_grads(conv);
      conv.forward(x);
      const auto dx = conv.backward(wts);
      std::vector<Probe> probes{tensor_probe("x", x, dx)};
      add_param_probes(conv, probes);
      CHECK(check_gradients(loss, probes).max_rel_error < kGradTol);
    }
  }
  SUBCASE("transposed conv doubles the size") {
    ConvTranspose2d<double> up(4, 2);
    randomize_module(up, 31);
    auto x = random_tensor<double>(4, 3, 5, 32);
    const auto y = up.forward(x);
    CHECK(y.has_shape(2, 6, 10));
    const auto wts = random_tensor<double>(2, 6, 10, 33);
    auto loss = [&] { return dot(up.forward(x), wts); };
    zero_module_grads(up);
    up.forward(x);
    const auto dx = up.backward(wts);
    std::vector<Probe> probes{tensor_probe("x", x, dx)};
    add_param_probes(up, probes);
    CHECK(check_gradients(loss, probes).max_rel_error < kGradTol);
  }
}

TEST_CASE("pooling and upsampling are adjoint-consistent") {
  auto x = random_tensor<double>(2, 7, 9, 41);
  const auto p = avg_pool(x, 4);
  CHECK(p.has_shape(2, 2, 3));
  // Partial windows average only their valid pixels.
  double s = 0.0;
  for (int i = 4; i < 7; ++i)
    for (int j = 8; j < 9; ++j) s += x(1, i, j);
  CHECK(p(1, 1, 2) == doctest::Approx(s / 3.0));
  const auto u = random_tensor<double>(2, 2, 3, 42);
  const auto up = upsample_nearest(u, 4, 7, 9);
  CHECK(up(0, 6, 8) == u(0, 1, 2));
  // <up(u), x> == <u, up^T(x)>
  const auto back = upsample_nearest_backward(x, 4, 2, 3);
  CHECK(dot(up, x) == doctest::Approx(dot(u, back)).epsilon(1e-12));
}

TEST_CASE("instance stats use the population standard deviation") {
  Tensor<double> t(1, 1, 4);
  t(0, 0, 0) = 1;
  t(0, 0, 1) = 2;
  t(0, 0, 2) = 3;
  t(0, 0, 3) = 4;
  auto [mu, sd] = instance_stats(t);
  CHECK(mu[0] == doctest::Approx(2.5));
  CHECK(sd[0] == doctest::Approx(std::sqrt(1.25)));
}

TEST_CASE("AIN normalization and modulation") {
  AinModule<double> m(3);
  init_module(m, 5);
  const auto h = random_tensor<double>(3, 8, 8, 6, -2.0, 5.0);
  const auto hc = random_tensor<double>(6, 4, 4, 7);
  const auto y = m.forward(h, hc);
  CHECK(y.same_shape(h));
  const auto& n = m.last_normalized();
  auto [mu, sd] = instance_stats(n);
  for (int c = 0; c < 3; ++c) {
    CHECK(std::abs(mu[c]) < 1e-4);
    CHECK(std::abs(sd[c] - 1.0) < 1e-3);
  }
  // modulated = gamma * normalized + beta, element-wise
  for (std::size_t k = 0; k < n.size(); ++k) {
    CHECK(m.last_modulated().data()[k] ==
          doctest::Approx(m.last_gamma().data()[k] * n.data()[k] + m.last_beta().data()[k]));
  }
}

TEST_CASE("AIN with zeroed heads and identity-like output reproduces the normalized input") {
  // gamma == 1, beta == 0 and a centre-tap identity output conv with zero bias:
  // y = h + normalized(h).
  AinModule<double> m(2);
  init_module(m, 8);
  for (auto* conv : {&m.gamma_head(), &m.beta_head()}) {
    std::fill(conv->weight().value.begin(), conv->weight().value.end(), 0.0);
  }
  std::fill(m.gamma_head().bias().value.begin(), m.gamma_head().bias().value.end(), 1.0);
  std::fill(m.beta_head().bias().value.begin(), m.beta_head().bias().value.end(), 0.0);
  auto& w = m.out_conv().weight().value;
  std::fill(w.begin(), w.end(), 0.0);
  for (int c = 0; c < 2; ++c) w[((c * 2 + c) * 3 + 1) * 3 + 1] = 1.0;
  std::fill(m.out_conv().bias().value.begin(), m.out_conv().bias().value.end(), 0.0);
  const auto h = random_tensor<double>(2, 6, 6, 9, 0.0, 3.0);
  const auto y = m.forward(h, random_tensor<double>(4, 3, 3, 10));
  auto [mu, sd] = instance_stats(h);
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) {
        const double expect = h(c, i, j) + (h(c, i, j) - mu[c]) / std::sqrt(sd[c] * sd[c] + 1e-5);
        CHECK(y(c, i, j) == doctest::Approx(expect).epsilon(1e-10));
      }
}

TEST_CASE("AIN rejects mismatched coarse features") {
  AinModule<double> m(2);
  init_module(m, 1);
  CHECK_THROWS_AS(m.forward(random_tensor<double>(2, 8, 8, 1), random_tensor<double>(2, 4, 4, 2)),
                  ShapeError);
  CHECK_THROWS_AS(m.forward(random_tensor<double>(2, 8, 8, 1), random_tensor<double>(4, 3, 4, 2)),
                  ShapeError);
}

TEST_CASE("AIN gradients") {
  const auto r = ain_gradcheck(2, 8, 8, 100);
  INFO(r.worst);
  CHECK(r.max_rel_error < kGradTol);
}

TEST_CASE("scale transforms: shapes and gradients for every pair") {
  const int base = 2;
  for (int from = 0; from < 3; ++from) {
    for (int to = 0; to < 3; ++to) {
      CAPTURE(from);
      CAPTURE(to);
      ScaleTransform<double> t(from, to, base);
      randomize_module(t, 200 + from * 3 + to);
      const int size = 16 >> from;
      auto x = random_tensor<double>(scale_channels(base, from), size, size, 210 + from);
      const auto y = t.forward(x);
      REQUIRE(y.has_shape(scale_channels(base, to), 16 >> to, 16 >> to));
      if (from == to) {
        CHECK(t.convs().empty());
        for (std::size_t k = 0; k < y.size(); ++k) CHECK(y.data()[k] == x.data()[k]);
        continue;
      }
      const auto wts = random_tensor<double>(y.channels(), y.height(), y.width(), 220 + to);
      auto loss = [&] { return dot(t.forward(x), wts); };
      zero_module_grads(t);
      t.forward(x);
      const auto dx = t.backward(wts);
      std::vector<Probe> probes{tensor_probe("x", x, dx)};
      add_param_probes(t, probes);
      const auto r = check_gradients(loss, probes);
      INFO(r.worst);
      CHECK(r.max_rel_error < kGradTol);
    }
  }
}

TEST_CASE("self-calibrated convolution") {
  SUBCASE("preserves shape, including sizes not divisible by the pool factor") {
    for (auto [h, w] : {std::pair{8, 8}, std::pair{6, 10}, std::pair{3, 5}}) {
      SelfCalibratedConv<double> sc(4);
      init_module(sc, 300);
      const auto x = random_tensor<double>(4, h, w, 301);
      const auto y = sc.forward(x);
      CHECK(y.same_shape(x));
      for (double g : sc.last_gate().values()) {
        CHECK(g > 0.0);
        CHECK(g < 1.0);
      }
    }
  }
  SUBCASE("odd channel counts are rejected") { CHECK_THROWS_AS(SelfCalibratedConv<double>(3), ShapeError); }
  SUBCASE("gradients") {
    for (auto [h, w] : {std::pair{8, 8}, std::pair{6, 10}}) {
      SelfCalibratedConv<double> sc(4);
      randomize_module(sc, 310);
      auto x = random_tensor<double>(4, h, w, 311);
      const auto wts = random_tensor<double>(4, h, w, 312);
      auto loss = [&] { return dot(sc.forward(x), wts); };
      zero_module_grads(sc);
      sc.forward(x);
      const auto dx = sc.backward(wts);
      std::vector<Probe> probes{tensor_probe("x", x, dx)};
      add_param_probes(sc, probes);
      const auto r = check_gradients(loss, probes);
      INFO(r.worst);
      CHECK(r.max_rel_error < kGradTol);
    }
  }
}

TEST_CASE("co-attention fusion") {
  SUBCASE("attention weights sum to one per channel") {
    CoAttentionFusion<double> f(4, 4);
    randomize_module(f, 400, 2.0);
    const auto y = f.forward(random_tensor<double>(4, 8, 8, 401), random_tensor<double>(4, 8, 8, 402),
                             random_tensor<double>(4, 8, 8, 403));
    CHECK(y.has_shape(4, 8, 8));
    CHECK(f.hidden() == 3);  // ceil(3 * 4 / 4)
    const auto& a = f.last_alpha();
    for (int c = 0; c < 4; ++c) {
      CHECK(std::abs(a[c] + a[4 + c] + a[8 + c] - 1.0) < 1e-12);
    }
  }
  SUBCASE("identical branch heads weight the branches equally") {
    CoAttentionFusion<double> f(4, 4);
    randomize_module(f, 405, 2.0);
    for (int k = 1; k < 3; ++k) {
      f.head(k).weight().value = f.head(0).weight().value;
      f.head(k).bias().value = f.head(0).bias().value;
    }
    f.forward(random_tensor<double>(4, 8, 8, 406), random_tensor<double>(4, 8, 8, 407),
              random_tensor<double>(4, 8, 8, 408));
    for (double a : f.last_alpha()) CHECK(std::abs(a - 1.0 / 3.0) < 1e-6);
  }
  SUBCASE("identical inputs fuse to the input") {
    CoAttentionFusion<double> f(4, 2);
    randomize_module(f, 410, 2.0);
    const auto x = random_tensor<double>(4, 8, 8, 411);
    f.forward(x, x, x);
    for (std::size_t k = 0; k < x.size(); ++k) {
      CHECK(std::abs(f.last_fused().data()[k] - x.data()[k]) < 1e-12);
    }
  }
  SUBCASE("shape mismatch") {
    CoAttentionFusion<double> f(4, 4);
    init_module(f, 1);
    CHECK_THROWS_AS(f.forward(random_tensor<double>(4, 8, 8, 1), random_tensor<double>(4, 8, 4, 2),
                              random_tensor<double>(4, 8, 8, 3)),
                    ShapeError);
  }
  SUBCASE("gradients") {
    CoAttentionFusion<double> f(4, 4);
    randomize_module(f, 420);
    auto a = random_tensor<double>(4, 8, 8, 421);
    auto b = random_tensor<double>(4, 8, 8, 422);
    auto c = random_tensor<double>(4, 8, 8, 423);
    const auto wts = random_tensor<double>(4, 8, 8, 424);
    auto loss = [&] { return dot(f.forward(a, b, c), wts); };
    zero_module_grads(f);
    f.forward(a, b, c);
    auto d = f.backward(wts);
    std::vector<Probe> probes{tensor_probe("y1", a, d[0]), tensor_probe("y2", b, d[1]),
                              tensor_probe("y3", c, d[2])};
    add_param_probes(f, probes);
    const auto r = check_gradients(loss, probes);
    INFO(r.worst);
    CHECK(r.max_rel_error < kGradTol);
  }
}
