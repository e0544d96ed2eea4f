// Copyright (c) 2026 The MAFNet-HSI Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef MAFNET_NOISE_HPP
#define MAFNET_NOISE_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mafnet/cube.hpp"

namespace mafnet {

// Noise levels are quoted on the 0-255 scale and divided by 255 when applied
// to [0, 1] cubes.
inline constexpr double kSigmaScale = 255.0;

enum class NoiseCase {
  kGaussFixed,
  kGaussBlind,
  kCase1NonIid,
  kCase2Stripe,
  kCase3Deadline,
  kCase4Impulse,
  kCase5Mixture,
};

struct NoiseSpec {
  NoiseCase kind = NoiseCase::kCase1NonIid;
  double sigma_lo = 30.0;  // fixed sigma uses sigma_lo only
  double sigma_hi = 70.0;
  double band_fraction = 1.0 / 3.0;
  std::uint64_t seed = 0;

  static NoiseSpec fixed(double sigma, std::uint64_t seed);
  static NoiseSpec blind(std::uint64_t seed);
  static NoiseSpec complex_case(int case_number, std::uint64_t seed);

  void validate() const;
  std::string name() const;
};

/// Parses the CLI spelling: g30 / g50 / g70 / g<sigma>, blind, 1..5.
NoiseSpec parse_noise_case(std::string_view text, std::uint64_t seed);

/// Blind Gaussian draws its sigma from this set.
inline constexpr double kBlindSigmas[] = {30.0, 50.0, 70.0};

struct StripeRecord {
  int band = 0;
  std::vector<int> columns;
};

struct DeadlineRecord {
  int band = 0;
  std::vector<int> starts;  // sorted run starts
  std::vector<int> widths;  // 1..3 each
  int covered_columns() const;
};

struct ImpulseRecord {
  int band = 0;
  double intensity = 0.0;  // fraction of the band's pixels hit
};

/// Exact description of one realized corruption.
struct NoiseReport {
  std::vector<double> per_band_sigma;  // 0-255 scale
  std::vector<StripeRecord> stripes;
  std::vector<DeadlineRecord> deadlines;
  std::vector<ImpulseRecord> impulses;

  std::string to_text() const;
  static NoiseReport parse(std::string_view text);
  bool operator==(const NoiseReport&) const = default;
};

bool operator==(const StripeRecord& a, const StripeRecord& b);
bool operator==(const DeadlineRecord& a, const DeadlineRecord& b);
bool operator==(const ImpulseRecord& a, const ImpulseRecord& b);

using NoisyResult = std::pair<HSICube, NoiseReport>;

NoisyResult add_gaussian(const HSICube& cube, double sigma, std::uint64_t seed);
NoisyResult add_noniid_gaussian(const HSICube& cube, double sigma_lo, double sigma_hi,
                                std::uint64_t seed);
NoisyResult add_stripes(const HSICube& cube, double band_fraction, std::uint64_t seed);
NoisyResult add_deadlines(const HSICube& cube, double band_fraction, std::uint64_t seed);
NoisyResult add_impulse(const HSICube& cube, double band_fraction, std::uint64_t seed);

/// Composes the requested case: Gaussian first, then stripes (additive),
/// impulses (overwrite), deadlines (overwrite), and a single final clip.
NoisyResult synthesize_case(const HSICube& cube, const NoiseSpec& spec);

/// Column count for a structured corruption on a band of width `width`,
/// given the drawn fraction. Always lands inside [0.05, 0.15] of the width.
int structured_column_count(int width, double fraction);

}  // namespace mafnet

#endif  // MAFNET_NOISE_HPP
