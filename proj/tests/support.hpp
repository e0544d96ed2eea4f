// Copyright (c) 2026 The MAFNet-HSI Authors
// SPDX-License-Identifier: Apache-2.0

// Shared helpers for unit and acceptance tests: random tensors and a
// central-difference gradient checker.

#ifndef MAFNET_TESTS_SUPPORT_HPP
#define MAFNET_TESTS_SUPPORT_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mafnet/blocks.hpp"
#include "mafnet/cube.hpp"
#include "mafnet/rng.hpp"

namespace mafnet::testing {

template <typename T>
Tensor<T> random_tensor(int c, int h, int w, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(c, h, w);
  Rng rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.values()) v = static_cast<T>(d(rng));
  return t;
}

inline HSICube random_cube(int b, int h, int w, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  return HSICube(random_tensor<float>(b, h, w, seed, lo, hi));
}

/// Seeds every parameter reachable through `visit`.
template <typename Module>
void init_module(Module& m, std::uint64_t seed) {
  m.visit("m", [&](const std::string& path, auto& p) { initialize_param(p, path, seed); });
}

/// Same, but every tensor (including constant-initialized biases) gets
/// random values so no gradient path is trivially zero.
template <typename Module>
void randomize_module(Module& m, std::uint64_t seed, double scale = 0.5) {
  m.visit("m", [&](const std::string& path, auto& p) {
    Rng rng(derive_seed(seed, hash_label(path)));
    std::uniform_real_distribution<double> d(-scale, scale);
    for (auto& v : p.value) v = static_cast<typename std::decay_t<decltype(p.value)>::value_type>(d(rng));
    if (p.init == InitKind::kOnes) for (auto& v : p.value) v += 1;
  });
}

template <typename Module>
void zero_module_grads(Module& m) {
  m.visit("m", [](const std::string&, auto& p) { p.zero_grad(); });
}

/// A tensor whose entries are perturbed numerically and the gradient the
/// code under test claims for them.
struct Probe {
  std::string name;
  double* values = nullptr;
  std::size_t size = 0;
  std::vector<double> analytic;
};

struct GradReport {
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

/// |a - n| / max(|a|, |n|, floor), maximized over up to `per_probe` entries
/// of every probe (evenly strided).
inline GradReport check_gradients(const std::function<double()>& loss, std::vector<Probe>& probes,
                                  double step = 1e-5, std::size_t per_probe = 64,
                                  double floor = 1e-6) {
  GradReport r;
  for (auto& p : probes) {
    const std::size_t stride = std::max<std::size_t>(1, p.size / per_probe);
    for (std::size_t k = 0; k < p.size; k += stride) {
      const double orig = p.values[k];
      p.values[k] = orig + step;
      const double up = loss();
      p.values[k] = orig - step;
      const double down = loss();
      p.values[k] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double a = p.analytic[k];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++r.checked;
      if (rel > r.max_rel_error) {
        r.max_rel_error = rel;
        r.worst = p.name + "[" + std::to_string(k) + "] analytic=" + std::to_string(a) +
                  " numeric=" + std::to_string(numeric);
      }
    }
  }
  return r;
}

/// Maximum-likelihood sigma of zero-mean Gaussian deviations that were
/// clipped symmetrically at +-`limit`: `magnitudes` holds |deviation| for
/// every sample, and values >= limit count as censored.
inline double censored_sigma(const std::vector<double>& magnitudes, double limit) {
  double sum_sq = 0.0;
  std::size_t exact = 0, censored = 0;
  for (double m : magnitudes) {
    if (m >= limit) {
      ++censored;
    } else {
      sum_sq += m * m;
      ++exact;
    }
  }
  // d logL / d sigma; decreasing through its single root.
  auto slope = [&](double sigma) {
    const double t = limit / sigma;
    const double tail = std::erfc(t / std::sqrt(2.0));
    const double pdf = std::exp(-0.5 * t * t) / std::sqrt(2.0 * 3.141592653589793);
    double s = -static_cast<double>(exact) / sigma + sum_sq / (sigma * sigma * sigma);
    if (censored > 0) s += static_cast<double>(censored) * 2.0 * pdf * t / (sigma * tail);
    return s;
  };
  double lo = 1e-6, hi = 10.0 * limit;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (slope(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a.data()[k] * b.data()[k];
  return s;
}

inline Probe tensor_probe(const std::string& name, Tensor<double>& t, const Tensor<double>& grad) {
  return {name, t.data(), t.size(), std::vector<double>(grad.data(), grad.data() + grad.size())};
}

template <typename Module>
void add_param_probes(Module& m, std::vector<Probe>& probes) {
  m.visit("m", [&](const std::string& path, Param<double>& p) {
    probes.push_back({path, p.value.data(), p.size(), p.grad});
  });
}

}  // namespace mafnet::testing

#endif  // MAFNET_TESTS_SUPPORT_HPP
