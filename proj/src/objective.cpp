// Copyright (c) 2026 The MAFNet-HSI Authors
// SPDX-License-Identifier: Apache-2.0

#include "mafnet/objective.hpp"

#include <cmath>

namespace mafnet {

namespace {

struct AxisStep {
  int length;
  std::ptrdiff_t stride;
};

template <typename T>
AxisStep axis_step(const Tensor<T>& x, Axis axis) {
  switch (axis) {
    case Axis::kHorizontal: return {x.width(), 1};
    case Axis::kVertical: return {x.height(), x.width()};
    case Axis::kSpectral: return {x.channels(), x.plane()};
  }
  return {0, 0};
}

const char* axis_name(Axis axis) {
  switch (axis) {
    case Axis::kHorizontal: return "horizontal";
    case Axis::kVertical: return "vertical";
    case Axis::kSpectral: return "spectral";
  }
  return "?";
}

// Position of flat index k along the axis.
template <typename T>
int axis_position(const Tensor<T>& x, Axis axis, std::size_t k) {
  switch (axis) {
    case Axis::kHorizontal: return static_cast<int>(k % x.width());
    case Axis::kVertical: return static_cast<int>((k / x.width()) % x.height());
    case Axis::kSpectral: return static_cast<int>(k / x.plane());
  }
  return 0;
}

}  // namespace

template <typename T>
Tensor<T> axis_gradient(const Tensor<T>& x, Axis axis) {
  const AxisStep step = axis_step(x, axis);
  if (step.length < 2) {
    throw ShapeError(std::string("gradient: ") + axis_name(axis) + " axis has length " +
                     std::to_string(step.length));
  }
  Tensor<T> g(x.channels(), x.height(), x.width());
  const T* p = x.data();
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (axis_position(x, axis, k) < step.length - 1) g.data()[k] = p[k + step.stride] - p[k];
  }
  return g;
}

template <typename T>
std::array<Tensor<T>, 3> spatial_spectral_gradients(const Tensor<T>& x) {
  return {axis_gradient(x, Axis::kHorizontal), axis_gradient(x, Axis::kVertical),
          axis_gradient(x, Axis::kSpectral)};
}

template <typename T>
double rec_loss(const Tensor<T>& est, const Tensor<T>& ref) {
  est.require_same_shape(ref, "rec_loss");
  double s = 0.0;
  for (std::size_t k = 0; k < est.size(); ++k) {
    s += std::abs(static_cast<double>(est.data()[k]) - static_cast<double>(ref.data()[k]));
  }
  return s / static_cast<double>(est.size());
}

template <typename T>
double grad_loss(const Tensor<T>& est, const Tensor<T>& ref) {
  est.require_same_shape(ref, "grad_loss");
  Tensor<double> diff = est.template cast<double>();
  for (std::size_t k = 0; k < diff.size(); ++k) diff.data()[k] -= ref.data()[k];
  // The operator is linear, so grad(est) - grad(ref) == grad(est - ref).
  double total = 0.0;
  for (Axis axis : {Axis::kHorizontal, Axis::kVertical, Axis::kSpectral}) {
    const Tensor<double> g = axis_gradient(diff, axis);
    double s = 0.0;
    for (double v : g.values()) s += v * v;
    total += s / static_cast<double>(g.size());
  }
  return total;
}

template <typename T>
LossBreakdown total_loss(const Tensor<T>& est, const Tensor<T>& ref, double lambda,
                         Tensor<T>* grad_est) {
  if (!(lambda >= 0.0)) throw ParamError("total_loss: lambda must be >= 0");
  LossBreakdown out;
  out.lambda = lambda;
  out.rec = rec_loss(est, ref);
  out.grad = grad_loss(est, ref);
  out.total = out.rec + lambda * out.grad;
  if (grad_est) {
    const double n = static_cast<double>(est.size());
    Tensor<double> g(est.channels(), est.height(), est.width());
    Tensor<double> diff = est.template cast<double>();
    for (std::size_t k = 0; k < diff.size(); ++k) {
      diff.data()[k] -= ref.data()[k];
      const double d = diff.data()[k];
      g.data()[k] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / n;
    }
    // d/dx of mean((D x)^2) is (2/n) D^T (D x); D^T of a forward difference
    // is g[k - stride] - g[k] (with the zero trailing slice dropped).
    for (Axis axis : {Axis::kHorizontal, Axis::kVertical, Axis::kSpectral}) {
      const Tensor<double> dd = axis_gradient(diff, axis);
      const AxisStep step = axis_step(diff, axis);
      const double scale = 2.0 * lambda / n;
      for (std::size_t k = 0; k < g.size(); ++k) {
        const int pos = axis_position(diff, axis, k);
        double adj = 0.0;
        if (pos >= 1) adj += dd.data()[k - step.stride];
        if (pos < step.length - 1) adj -= dd.data()[k];
        g.data()[k] += scale * adj;
      }
    }
    *grad_est = g.template cast<T>();
  }
  return out;
}

#define MAFNET_INSTANTIATE_OBJECTIVE(T)                                                   \
  template Tensor<T> axis_gradient(const Tensor<T>&, Axis);                               \
  template std::array<Tensor<T>, 3> spatial_spectral_gradients(const Tensor<T>&);         \
  template double rec_loss(const Tensor<T>&, const Tensor<T>&);                           \
  template double grad_loss(const Tensor<T>&, const Tensor<T>&);                          \
  template LossBreakdown total_loss(const Tensor<T>&, const Tensor<T>&, double, Tensor<T>*);

MAFNET_INSTANTIATE_OBJECTIVE(float)
MAFNET_INSTANTIATE_OBJECTIVE(double)

std::array<HSICube, 3> spatial_spectral_gradients(const HSICube& cube) {
  auto g = spatial_spectral_gradients(cube.voxels());
  return {HSICube(std::move(g[0])), HSICube(std::move(g[1])), HSICube(std::move(g[2]))};
}

double rec_loss(const HSICube& est, const HSICube& ref) { return rec_loss(est.voxels(), ref.voxels()); }

double grad_loss(const HSICube& est, const HSICube& ref) {
  return grad_loss(est.voxels(), ref.voxels());
}

LossBreakdown total_loss(const HSICube& est, const HSICube& ref, double lambda) {
  return total_loss<float>(est.voxels(), ref.voxels(), lambda, nullptr);
}

}  // namespace mafnet
