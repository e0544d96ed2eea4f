// Copyright (c) 2026 The MAFNet-HSI Authors
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>

#include "doctest.h"
#include "mafnet/cube.hpp"
#include "mafnet/network.hpp"
#include "support.hpp"

using namespace mafnet;
using namespace mafnet::testing;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("mafnet_cube_" + name);
}

bool bitwise_equal(const HSICube& a, const HSICube& b) {
  return a.same_shape(b) && std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) == 0;
}

// Direct 2-D summation of the binomial kernel with mirrored borders,
// sampled at even coordinates.
std::vector<double> reference_downsample(const HSICube& cube, int band) {
  const int h = cube.height(), w = cube.width();
  const int oh = (h + 1) / 2, ow = (w + 1) / 2;
  const double k[5] = {1, 4, 6, 4, 1};
  std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int i = 0; i < oh; ++i) {
    for (int j = 0; j < ow; ++j) {
      double s = 0.0;
      for (int a = -2; a <= 2; ++a) {
        for (int b = -2; b <= 2; ++b) {
          int r = 2 * i + a, c = 2 * j + b;
          r = r < 0 ? -r : (r >= h ? 2 * h - 2 - r : r);
          c = c < 0 ? -c : (c >= w ? 2 * w - 2 - c : c);
          s += k[a + 2] * k[b + 2] / 256.0 * cube.at(band, r, c);
        }
      }
      out[static_cast<std::size_t>(i) * ow + j] = s;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("HSD encoding is bit-exact") {
  HSICube one(1, 1, 1, 0.5f);
  const auto bytes = encode_cube(one);
  REQUIRE(bytes.size() == kHsdHeaderBytes + 4);
  CHECK(std::memcmp(bytes.data(), "HSDC", 4) == 0);
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 0);
  CHECK(bytes[6] == 0);
  CHECK(bytes[7] == 0);
  const std::uint8_t dims[12] = {1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0};
  CHECK(std::memcmp(bytes.data() + 8, dims, 12) == 0);
  // 0.5f == 0x3F000000, little-endian
  const std::uint8_t half[4] = {0x00, 0x00, 0x00, 0x3F};
  CHECK(std::memcmp(bytes.data() + 20, half, 4) == 0);

  const HSICube shaped = random_cube(4, 2, 3, 1);
  const auto b2 = encode_cube(shaped);
  CHECK(b2[8] == 4);
  CHECK(b2[12] == 2);
  CHECK(b2[16] == 3);
  // band-major: the second payload float is (b=0, i=0, j=1)
  float second = 0;
  std::memcpy(&second, b2.data() + 24, 4);
  CHECK(second == shaped.at(0, 0, 1));
}

TEST_CASE("HSD round trip over random cubes") {
  const auto path = temp_path("rt.hsd");
  for (int k = 0; k < 100; ++k) {
    const HSICube c = random_cube(1 + k % 7, 1 + k % 5, 1 + (k * 3) % 11, 1000 + k, -3.0, 5.0);
    save_cube(c, path);
    const HSICube back = load_cube(path);
    CHECK(bitwise_equal(c, back));
    CHECK(encode_cube(back) == read_file_bytes(path));
  }
  const HSICube big = random_cube(31, 64, 64, 7);
  save_cube(big, path);
  CHECK(std::filesystem::file_size(path) == 20u + 31u * 64u * 64u * 4u);
  std::filesystem::remove(path);
}

TEST_CASE("HSD errors") {
  HSICube good(4, 2, 2, 0.25f);
  auto bytes = encode_cube(good);
  CHECK(decode_cube(bytes).bands() == 4);

  SUBCASE("bad magic") {
    std::memcpy(bytes.data(), "XXXX", 4);
    CHECK_THROWS_AS(decode_cube(bytes), FormatError);
  }
  SUBCASE("bad version, dtype and reserved bytes") {
    for (int pos : {4, 5, 6, 7}) {
      auto b = bytes;
      b[pos] = 7;
      CHECK_THROWS_AS(decode_cube(b), FormatError);
    }
  }
  SUBCASE("truncated and oversized payloads") {
    bytes.pop_back();
    CHECK_THROWS_AS(decode_cube(bytes), FormatError);
    bytes.resize(10);
    CHECK_THROWS_AS(decode_cube(bytes), FormatError);
    auto longer = encode_cube(good);
    longer.push_back(0);
    CHECK_THROWS_AS(decode_cube(longer), FormatError);
  }
  SUBCASE("zero dims") {
    bytes[8] = 0;
    CHECK_THROWS_AS(decode_cube(bytes), FormatError);
  }
  SUBCASE("NaN payload") {
    const float nan = std::numeric_limits<float>::quiet_NaN();
    std::memcpy(bytes.data() + 24, &nan, 4);
    CHECK_THROWS_AS(decode_cube(bytes), DataError);
  }
  SUBCASE("saving a NaN cube writes nothing") {
    const auto path = temp_path("nan.hsd");
    std::filesystem::remove(path);
    good.at(1, 1, 1) = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(save_cube(good, path), DataError);
    CHECK_FALSE(std::filesystem::exists(path));
  }
  SUBCASE("io") {
    CHECK_THROWS_AS(load_cube(temp_path("does_not_exist.hsd")), IoError);
    CHECK_THROWS_AS(save_cube(good, "/nonexistent_dir/x.hsd"), IoError);
  }
}

TEST_CASE("normalize") {
  SUBCASE("global min-max") {
    HSICube c = random_cube(3, 8, 8, 3, 0.0, 255.0);
    c.at(0, 0, 0) = 0.0f;
    c.at(2, 7, 7) = 255.0f;
    auto [n, rec] = normalize(c, NormalizationMode::kGlobalMinMax);
    CHECK(rec.lo == 0.0);
    CHECK(rec.hi == 255.0);
    CHECK(n.at(0, 0, 0) == 0.0f);
    CHECK(n.at(2, 7, 7) == 1.0f);
    for (float v : n.data()) CHECK((v >= 0.0f && v <= 1.0f));
  }
  SUBCASE("fixed unit range is the identity") {
    const HSICube c = random_cube(3, 5, 4, 4);
    auto [n, rec] = normalize(c, NormalizationMode::kFixedRange, {0.0, 1.0});
    CHECK(bitwise_equal(n, c));
  }
  SUBCASE("fixed range clamps") {
    HSICube c(1, 1, 2, 0.0f);
    c.at(0, 0, 0) = -5.0f;
    c.at(0, 0, 1) = 50.0f;
    auto [n, rec] = normalize(c, NormalizationMode::kFixedRange, {0.0, 10.0});
    CHECK(n.at(0, 0, 0) == 0.0f);
    CHECK(n.at(0, 0, 1) == 1.0f);
  }
  SUBCASE("round trip") {
    for (int k = 0; k < 20; ++k) {
      const HSICube c = random_cube(4, 6, 6, 50 + k, -100.0 * k, 37.0 + k);
      auto [n, rec] = normalize(c, NormalizationMode::kGlobalMinMax);
      const HSICube back = denormalize(n, rec);
      const double scale = std::max(std::abs(rec.lo), std::abs(rec.hi));
      for (std::size_t i = 0; i < c.size(); ++i) {
        CHECK(std::abs(back.data()[i] - c.data()[i]) <= 1e-6 * scale);
      }
    }
  }
  SUBCASE("monotone") {
    const HSICube c = random_cube(2, 9, 9, 60, -2.0, 3.0);
    auto [n, rec] = normalize(c, NormalizationMode::kGlobalMinMax);
    for (std::size_t a = 0; a < c.size(); a += 7) {
      for (std::size_t b = 0; b < c.size(); b += 5) {
        if (c.data()[a] < c.data()[b]) CHECK(n.data()[a] <= n.data()[b]);
      }
    }
  }
  SUBCASE("degenerate ranges") {
    CHECK_THROWS_AS(normalize(HSICube(2, 3, 3, 0.4f), NormalizationMode::kGlobalMinMax), DegenerateRangeError);
    CHECK_THROWS_AS(normalize(HSICube(2, 3, 3, 0.4f), NormalizationMode::kFixedRange, {1.0, 1.0}),
                    DegenerateRangeError);
  }
}

TEST_CASE("reflect index") {
  CHECK(reflect_index(-1, 5) == 1);
  CHECK(reflect_index(-2, 5) == 2);
  CHECK(reflect_index(5, 5) == 3);
  CHECK(reflect_index(6, 5) == 2);
  CHECK(reflect_index(3, 5) == 3);
  CHECK(reflect_index(-3, 1) == 0);
}

TEST_CASE("image pyramid") {
  CHECK(std::abs(std::accumulate(kPyramidKernel.begin(), kPyramidKernel.end(), 0.0f) - 1.0f) < 1e-7f);

  SUBCASE("shapes") {
    const auto p = build_pyramid(HSICube(31, 128, 128, 0.1f));
    CHECK(p.levels[0].voxels().has_shape(31, 128, 128));
    CHECK(p.levels[1].voxels().has_shape(31, 64, 64));
    CHECK(p.levels[2].voxels().has_shape(31, 32, 32));
    const auto odd = build_pyramid(HSICube(2, 9, 5, 0.1f));
    CHECK(odd.levels[1].voxels().has_shape(2, 5, 3));
    CHECK(odd.levels[2].voxels().has_shape(2, 3, 2));
  }
  SUBCASE("constant stays constant") {
    const auto p = build_pyramid(HSICube(3, 17, 12, 0.7f));
    for (const auto& level : p.levels)
      for (float v : level.data()) CHECK(std::abs(v - 0.7f) < 1e-6f);
  }
  SUBCASE("impulse matches direct summation") {
    for (auto [i, j] : {std::pair{5, 6}, std::pair{0, 0}, std::pair{15, 1}}) {
      HSICube c(2, 16, 12, 0.0f);
      c.at(1, i, j) = 1.0f;
      const auto p = build_pyramid(c);
      for (int band = 0; band < 2; ++band) {
        const auto ref = reference_downsample(c, band);
        for (int r = 0; r < 8; ++r)
          for (int q = 0; q < 6; ++q) CHECK(std::abs(p.levels[1].at(band, r, q) - ref[r * 6 + q]) < 1e-7);
      }
      const auto ref2 = reference_downsample(p.levels[1], 1);
      for (int r = 0; r < 4; ++r)
        for (int q = 0; q < 3; ++q) CHECK(std::abs(p.levels[2].at(1, r, q) - ref2[r * 3 + q]) < 1e-6);
    }
  }
  SUBCASE("smooth inputs keep their mean") {
    HSICube c(2, 64, 64);
    for (int b = 0; b < 2; ++b)
      for (int i = 0; i < 64; ++i)
        for (int j = 0; j < 64; ++j)
          c.at(b, i, j) = static_cast<float>(0.5 + 0.3 * std::sin(0.11 * i + b) * std::cos(0.07 * j));
    const auto p = build_pyramid(c);
    auto mean = [](const HSICube& x) {
      double s = 0;
      for (float v : x.data()) s += v;
      return s / static_cast<double>(x.size());
    };
    CHECK(std::abs(mean(p.levels[1]) - mean(c)) < 1e-3);
    CHECK(std::abs(mean(p.levels[2]) - mean(c)) < 1e-3);
  }
  SUBCASE("too small") {
    CHECK_THROWS_AS(build_pyramid(HSICube(1, 3, 8)), ShapeError);
    CHECK_THROWS_AS(build_pyramid(HSICube(1, 8, 3)), ShapeError);
  }
  CHECK_THROWS_AS(HSICube(0, 2, 2), ShapeError);
}
