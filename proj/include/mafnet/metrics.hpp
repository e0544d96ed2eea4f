// Copyright (c) 2026 The MAFNet-HSI Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef MAFNET_METRICS_HPP
#define MAFNET_METRICS_HPP

#include <string>
#include <string_view>
#include <vector>

#include "mafnet/cube.hpp"

namespace mafnet {

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;
inline constexpr double kSamNormFloor = 1e-8;

struct PsnrResult {
  double mean = 0.0;               // over finite bands; +inf when every band is exact
  std::vector<double> per_band;    // dB, +inf for zero-MSE bands
  int infinite_bands = 0;
};

struct SsimResult {
  double mean = 0.0;
  std::vector<double> per_band;
};

struct SamResult {
  double mean = 0.0;     // radians
  Tensor<double> angles; // (1, H, W)
};

PsnrResult psnr(const HSICube& est, const HSICube& ref, double data_range = 1.0);
SsimResult ssim(const HSICube& est, const HSICube& ref, double data_range = 1.0);
SamResult sam(const HSICube& est, const HSICube& ref);

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
std::vector<double> ssim_kernel();

struct MetricsTable {
  double psnr_mean = 0.0;
  double ssim_mean = 0.0;
  double sam_mean = 0.0;
  std::vector<double> per_band_psnr;
  std::vector<double> per_band_ssim;
  int infinite_bands = 0;

  /// Tab-separated: header, one row per band, then a `mean` row.
  std::string to_text() const;
  static MetricsTable parse(std::string_view text);
  /// `PSNR=<dB> SSIM=<x> SAM=<rad>` with 2/4/4 decimals.
  std::string summary() const;
  bool operator==(const MetricsTable&) const = default;
};

MetricsTable compute_metrics(const HSICube& est, const HSICube& ref, double data_range = 1.0);

}  // namespace mafnet

#endif  // MAFNET_METRICS_HPP
