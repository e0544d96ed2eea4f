// Copyright (c) 2026 The MAFNet-HSI Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef MAFNET_OBJECTIVE_HPP
#define MAFNET_OBJECTIVE_HPP

#include <array>

#include "mafnet/cube.hpp"

namespace mafnet {

inline constexpr double kDefaultGradientWeight = 0.01;

enum class Axis { kHorizontal, kVertical, kSpectral };

struct LossBreakdown {
  double rec = 0.0;
  double grad = 0.0;
  double total = 0.0;
  double lambda = kDefaultGradientWeight;
};

/// Forward difference along one axis; the trailing slice is zero so the
/// result keeps the input shape.
template <typename T>
Tensor<T> axis_gradient(const Tensor<T>& x, Axis axis);

/// (horizontal, vertical, spectral) forward differences.
template <typename T>
std::array<Tensor<T>, 3> spatial_spectral_gradients(const Tensor<T>& x);

/// Mean absolute error.
template <typename T>
double rec_loss(const Tensor<T>& est, const Tensor<T>& ref);

/// Sum over the three directions of the mean squared gradient mismatch.
template <typename T>
double grad_loss(const Tensor<T>& est, const Tensor<T>& ref);

/// rec + lambda * grad. When `grad_est` is non-null it receives dL/d(est)
/// (L1 subgradient is 0 at ties).
template <typename T>
LossBreakdown total_loss(const Tensor<T>& est, const Tensor<T>& ref, double lambda,
                         Tensor<T>* grad_est = nullptr);

std::array<HSICube, 3> spatial_spectral_gradients(const HSICube& cube);
double rec_loss(const HSICube& est, const HSICube& ref);
double grad_loss(const HSICube& est, const HSICube& ref);
LossBreakdown total_loss(const HSICube& est, const HSICube& ref,
                         double lambda = kDefaultGradientWeight);

}  // namespace mafnet

#endif  // MAFNET_OBJECTIVE_HPP
