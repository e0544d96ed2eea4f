// Copyright (c) 2026 The MAFNet-HSI Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef MAFNET_CUBE_HPP
#define MAFNET_CUBE_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>

#include "mafnet/tensor.hpp"

namespace mafnet {

struct ValueRange {
  double lo = 0.0;
  double hi = 1.0;
};

/// A B x H x W hyperspectral volume stored band-major in 32-bit floats.
class HSICube {
 public:
  HSICube() = default;
  HSICube(int bands, int height, int width, float fill = 0.0f, ValueRange range = {});
  explicit HSICube(Tensor<float> voxels, ValueRange range = {});

  int bands() const noexcept { return voxels_.channels(); }
  int height() const noexcept { return voxels_.height(); }
  int width() const noexcept { return voxels_.width(); }
  std::size_t size() const noexcept { return voxels_.size(); }
  ValueRange value_range() const noexcept { return range_; }

  float at(int b, int i, int j) const noexcept { return voxels_(b, i, j); }
  float& at(int b, int i, int j) noexcept { return voxels_(b, i, j); }

  std::span<const float> data() const noexcept { return voxels_.values(); }
  std::span<float> data() noexcept { return voxels_.values(); }

  const Tensor<float>& voxels() const noexcept { return voxels_; }
  Tensor<float>& voxels() noexcept { return voxels_; }

  bool same_shape(const HSICube& o) const noexcept { return voxels_.same_shape(o.voxels_); }
  bool all_finite() const { return voxels_.all_finite(); }
  /// Throws DataError naming `where` when any voxel is NaN or infinite.
  void require_finite(const char* where) const;

 private:
  Tensor<float> voxels_;
  ValueRange range_;
};

// --- HSD file format --------------------------------------------------------

inline constexpr std::array<char, 4> kHsdMagic = {'H', 'S', 'D', 'C'};
inline constexpr std::uint8_t kHsdVersion = 1;
inline constexpr std::size_t kHsdHeaderBytes = 20;

HSICube load_cube(const std::filesystem::path& path);
void save_cube(const HSICube& cube, const std::filesystem::path& path);

std::vector<std::uint8_t> encode_cube(const HSICube& cube);
HSICube decode_cube(std::span<const std::uint8_t> bytes);

// --- normalization ----------------------------------------------------------

enum class NormalizationMode { kGlobalMinMax, kFixedRange };

struct NormalizationRecord {
  double lo = 0.0;
  double hi = 1.0;
  NormalizationMode mode = NormalizationMode::kFixedRange;
};

/// Maps values into [0, 1]. kGlobalMinMax uses the cube's own extremes;
/// kFixedRange uses `fixed` and clamps anything outside it.
std::pair<HSICube, NormalizationRecord> normalize(const HSICube& cube, NormalizationMode mode,
                                                  ValueRange fixed = {});
HSICube denormalize(const HSICube& cube, const NormalizationRecord& record);

// --- Gaussian pyramid -------------------------------------------------------

/// Separable 5-tap binomial smoothing kernel.
inline constexpr std::array<float, 5> kPyramidKernel = {1.0f / 16, 4.0f / 16, 6.0f / 16,
                                                        4.0f / 16, 1.0f / 16};

struct ImagePyramid {
  std::array<HSICube, 3> levels;
  std::array<float, 5> kernel = kPyramidKernel;
};

/// Mirror index without repeating the edge sample (…2 1 | 0 1 2 … n-1 | n-2…).
int reflect_index(int i, int n) noexcept;

/// Smooth with the binomial kernel (reflection borders) and keep every second
/// row/column starting at 0. Output dims are ceil(H/2) x ceil(W/2).
template <typename T>
Tensor<T> gaussian_downsample(const Tensor<T>& x);

ImagePyramid build_pyramid(const HSICube& cube);

}  // namespace mafnet

#endif  // MAFNET_CUBE_HPP
