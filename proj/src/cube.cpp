// Copyright (c) 2026 The MAFNet-HSI Authors
// SPDX-License-Identifier: Apache-2.0

#include "mafnet/cube.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace mafnet {

HSICube::HSICube(int bands, int height, int width, float fill, ValueRange range)
    : voxels_(bands, height, width, fill), range_(range) {
  if (bands < 1 || height < 1 || width < 1) {
    throw ShapeError("cube dimensions must be >= 1");
  }
}

HSICube::HSICube(Tensor<float> voxels, ValueRange range) : voxels_(std::move(voxels)), range_(range) {
  if (voxels_.channels() < 1 || voxels_.height() < 1 || voxels_.width() < 1) {
    throw ShapeError("cube dimensions must be >= 1");
  }
}

void HSICube::require_finite(const char* where) const {
  const auto values = data();
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!std::isfinite(values[k])) {
      throw DataError(std::string(where) + ": non-finite value at flat index " +
                      std::to_string(k));
    }
  }
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

}  // namespace

std::vector<std::uint8_t> encode_cube(const HSICube& cube) {
  cube.require_finite("save_cube");
  std::vector<std::uint8_t> out;
  out.reserve(kHsdHeaderBytes + cube.size() * 4);
  out.insert(out.end(), kHsdMagic.begin(), kHsdMagic.end());
  out.push_back(kHsdVersion);
  out.push_back(0);  // dtype: float32 LE
  out.push_back(0);
  out.push_back(0);
  put_u32(out, static_cast<std::uint32_t>(cube.bands()));
  put_u32(out, static_cast<std::uint32_t>(cube.height()));
  put_u32(out, static_cast<std::uint32_t>(cube.width()));
  for (float v : cube.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

HSICube decode_cube(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHsdHeaderBytes) throw FormatError("HSD: file shorter than header");
  if (!std::equal(kHsdMagic.begin(), kHsdMagic.end(), bytes.begin())) {
    throw FormatError("HSD: bad magic");
  }
  if (bytes[4] != kHsdVersion) {
    throw FormatError("HSD: unsupported version " + std::to_string(bytes[4]));
  }
  if (bytes[5] != 0) throw FormatError("HSD: unsupported dtype code " + std::to_string(bytes[5]));
  if (bytes[6] != 0 || bytes[7] != 0) throw FormatError("HSD: reserved bytes must be zero");
  const std::uint32_t b = get_u32(&bytes[8]);
  const std::uint32_t h = get_u32(&bytes[12]);
  const std::uint32_t w = get_u32(&bytes[16]);
  if (b == 0 || h == 0 || w == 0) throw FormatError("HSD: zero dimension");
  const std::uint64_t count = std::uint64_t{b} * h * w;
  if (count > std::numeric_limits<std::int32_t>::max()) throw FormatError("HSD: cube too large");
  if (bytes.size() - kHsdHeaderBytes != count * 4) {
    throw FormatError("HSD: payload is " + std::to_string(bytes.size() - kHsdHeaderBytes) +
                      " bytes, header declares " + std::to_string(count * 4));
  }
  HSICube cube(static_cast<int>(b), static_cast<int>(h), static_cast<int>(w));
  auto values = cube.data();
  const std::uint8_t* p = bytes.data() + kHsdHeaderBytes;
  for (std::size_t k = 0; k < values.size(); ++k, p += 4) {
    values[k] = std::bit_cast<float>(get_u32(p));
  }
  cube.require_finite("load_cube");
  return cube;
}

HSICube load_cube(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_cube(bytes);
}

void save_cube(const HSICube& cube, const std::filesystem::path& path) {
  const auto bytes = encode_cube(cube);  // validates before touching the disk
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

std::pair<HSICube, NormalizationRecord> normalize(const HSICube& cube, NormalizationMode mode,
                                                  ValueRange fixed) {
  NormalizationRecord record;
  record.mode = mode;
  if (mode == NormalizationMode::kGlobalMinMax) {
    const auto [mn, mx] = std::minmax_element(cube.data().begin(), cube.data().end());
    record.lo = *mn;
    record.hi = *mx;
    if (!(record.hi > record.lo)) {
      throw DegenerateRangeError("normalize: constant cube has no range");
    }
  } else {
    record.lo = fixed.lo;
    record.hi = fixed.hi;
    if (!(record.hi > record.lo)) throw DegenerateRangeError("normalize: fixed range hi <= lo");
  }
  HSICube out(cube.bands(), cube.height(), cube.width());
  const double scale = 1.0 / (record.hi - record.lo);
  auto src = cube.data();
  auto dst = out.data();
  const bool identity = record.lo == 0.0 && record.hi == 1.0;
  for (std::size_t k = 0; k < src.size(); ++k) {
    double v = identity ? src[k] : (src[k] - record.lo) * scale;
    dst[k] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return {std::move(out), record};
}

HSICube denormalize(const HSICube& cube, const NormalizationRecord& record) {
  if (!(record.hi > record.lo)) throw DegenerateRangeError("denormalize: hi <= lo");
  HSICube out(cube.bands(), cube.height(), cube.width(), 0.0f, {record.lo, record.hi});
  const double span = record.hi - record.lo;
  auto src = cube.data();
  auto dst = out.data();
  for (std::size_t k = 0; k < src.size(); ++k) {
    dst[k] = static_cast<float>(record.lo + span * static_cast<double>(src[k]));
  }
  return out;
}

int reflect_index(int i, int n) noexcept {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

template <typename T>
Tensor<T> gaussian_downsample(const Tensor<T>& x) {
  const int c = x.channels(), h = x.height(), w = x.width();
  const int oh = (h + 1) / 2, ow = (w + 1) / 2;
  Tensor<T> rows(c, oh, w);
  Tensor<T> out(c, oh, ow);
  for (int ch = 0; ch < c; ++ch) {
    // vertical pass on the kept rows only
    for (int oi = 0; oi < oh; ++oi) {
      for (int j = 0; j < w; ++j) {
        T acc = 0;
        for (int t = -2; t <= 2; ++t) {
          acc += static_cast<T>(kPyramidKernel[t + 2]) * x(ch, reflect_index(2 * oi + t, h), j);
        }
        rows(ch, oi, j) = acc;
      }
    }
    for (int oi = 0; oi < oh; ++oi) {
      for (int oj = 0; oj < ow; ++oj) {
        T acc = 0;
        for (int t = -2; t <= 2; ++t) {
          acc += static_cast<T>(kPyramidKernel[t + 2]) * rows(ch, oi, reflect_index(2 * oj + t, w));
        }
        out(ch, oi, oj) = acc;
      }
    }
  }
  return out;
}

template Tensor<float> gaussian_downsample(const Tensor<float>&);
template Tensor<double> gaussian_downsample(const Tensor<double>&);

ImagePyramid build_pyramid(const HSICube& cube) {
  if (cube.height() < 4 || cube.width() < 4) {
    throw ShapeError("build_pyramid: spatial dims must be >= 4, got " +
                     cube.voxels().shape_string());
  }
  ImagePyramid pyramid;
  pyramid.levels[0] = cube;
  for (int k = 1; k < 3; ++k) {
    pyramid.levels[k] =
        HSICube(gaussian_downsample(pyramid.levels[k - 1].voxels()), cube.value_range());
  }
  return pyramid;
}

}  // namespace mafnet
