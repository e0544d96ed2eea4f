// Copyright (c) 2026 The MAFNet-HSI Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstring>
#include <set>

#include "doctest.h"
#include "mafnet/noise.hpp"
#include "support.hpp"

using namespace mafnet;
using namespace mafnet::testing;

namespace {

bool bitwise_equal(const HSICube& a, const HSICube& b) {
  return a.same_shape(b) && std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) == 0;
}

bool band_equal(const HSICube& a, const HSICube& b, int band) {
  for (int i = 0; i < a.height(); ++i)
    for (int j = 0; j < a.width(); ++j)
      if (a.at(band, i, j) != b.at(band, i, j)) return false;
  return true;
}

}  // namespace

TEST_CASE("censored sigma estimator") {
  Rng rng(3);
  std::normal_distribution<double> normal(0.0, 0.3);
  std::vector<double> clipped, raw;
  for (int k = 0; k < 200000; ++k) {
    const double d = normal(rng);
    raw.push_back(std::abs(d));
    clipped.push_back(std::min(std::abs(d), 0.5));
  }
  CHECK(censored_sigma(clipped, 0.5) == doctest::Approx(0.3).epsilon(0.01));
  CHECK(censored_sigma(raw, 100.0) == doctest::Approx(0.3).epsilon(0.01));
}

TEST_CASE("fixed gaussian") {
  const HSICube clean(31, 64, 64, 0.5f);
  CHECK_THROWS_AS(add_gaussian(clean, 0.0, 1), ParamError);
  CHECK_THROWS_AS(add_gaussian(clean, -3.0, 1), ParamError);
  CHECK_THROWS_AS(add_gaussian(clean, 256.0, 1), ParamError);

  auto [noisy, report] = add_gaussian(clean, 30.0, 42);
  REQUIRE(report.per_band_sigma.size() == 31u);
  for (double s : report.per_band_sigma) CHECK(s == 30.0);
  double s = 0, s2 = 0;
  for (std::size_t k = 0; k < noisy.size(); ++k) {
    const double d = noisy.data()[k] - 0.5;
    s += d;
    s2 += d * d;
  }
  const double n = static_cast<double>(noisy.size());
  const double sd = std::sqrt((s2 - s * s / n) / (n - 1));
  CHECK(std::abs(sd / (30.0 / 255.0) - 1.0) < 0.03);
  for (float v : noisy.data()) CHECK((v >= 0.0f && v <= 1.0f));

  CHECK(bitwise_equal(noisy, add_gaussian(clean, 30.0, 42).first));
  CHECK_FALSE(bitwise_equal(noisy, add_gaussian(clean, 30.0, 43).first));
}

TEST_CASE("non-iid gaussian (case 1)") {
  const HSICube clean(12, 64, 64, 0.5f);
  auto [noisy, report] = add_noniid_gaussian(clean, 30.0, 70.0, 5);
  std::set<double> distinct;
  for (int b = 0; b < 12; ++b) {
    const double sigma = report.per_band_sigma[b];
    CHECK(sigma >= 30.0);
    CHECK(sigma <= 70.0);
    distinct.insert(sigma);
    std::vector<double> mags;
    for (int i = 0; i < 64; ++i)
      for (int j = 0; j < 64; ++j) mags.push_back(std::abs(noisy.at(b, i, j) - 0.5));
    CHECK(std::abs(censored_sigma(mags, 0.5) / (sigma / 255.0) - 1.0) < 0.05);
  }
  CHECK(distinct.size() == 12u);
  CHECK_THROWS_AS(add_noniid_gaussian(clean, 70.0, 30.0, 5), ParamError);

  auto [same, rep] = add_noniid_gaussian(clean, 40.0, 40.0, 5);
  for (double sg : rep.per_band_sigma) CHECK(sg == 40.0);

  const auto spec = NoiseSpec::complex_case(1, 5);
  CHECK(spec.sigma_lo == 30.0);
  CHECK(spec.sigma_hi == 70.0);
  auto [c1, r1] = synthesize_case(clean, spec);
  CHECK(r1.stripes.empty());
  CHECK(r1.deadlines.empty());
  CHECK(r1.impulses.empty());
  CHECK(bitwise_equal(c1, noisy));
}

TEST_CASE("stripes") {
  const HSICube clean = random_cube(9, 24, 40, 10, 0.3, 0.7);
  auto [noisy, report] = add_stripes(clean, 1.0 / 3.0, 77);
  CHECK(report.stripes.size() == 3u);
  std::set<int> striped;
  for (const auto& rec : report.stripes) {
    striped.insert(rec.band);
    const int n = static_cast<int>(rec.columns.size());
    CHECK(n >= static_cast<int>(std::floor(0.05 * 40)));
    CHECK(n <= static_cast<int>(std::ceil(0.15 * 40)));
    std::set<int> cols(rec.columns.begin(), rec.columns.end());
    for (int j = 0; j < 40; ++j) {
      // offsets are constant down each column (no clipping in this range)
      const float d0 = noisy.at(rec.band, 0, j) - clean.at(rec.band, 0, j);
      for (int i = 1; i < 24; ++i) {
        CHECK(std::abs((noisy.at(rec.band, i, j) - clean.at(rec.band, i, j)) - d0) < 1e-6f);
      }
      if (!cols.count(j)) CHECK(d0 == 0.0f);
      CHECK(std::abs(d0) <= 0.25f + 1e-6f);
    }
  }
  for (int b = 0; b < 9; ++b)
    if (!striped.count(b)) CHECK(band_equal(noisy, clean, b));
  CHECK_THROWS_AS(add_stripes(random_cube(2, 8, 19, 1), 1.0, 1), ShapeError);
  CHECK_THROWS_AS(add_stripes(clean, 0.0, 1), ParamError);
}

TEST_CASE("deadlines") {
  const HSICube clean = random_cube(30, 16, 60, 11, 0.2, 0.9);
  auto [noisy, report] = add_deadlines(clean, 1.0 / 3.0, 78);
  CHECK(report.deadlines.size() == 10u);
  std::set<int> dead_bands;
  for (const auto& rec : report.deadlines) {
    dead_bands.insert(rec.band);
    int zero_cols = 0;
    for (int j = 0; j < 60; ++j) {
      bool all_zero = true;
      for (int i = 0; i < 16; ++i) all_zero &= noisy.at(rec.band, i, j) == 0.0f;
      zero_cols += all_zero;
    }
    CHECK(zero_cols == rec.covered_columns());
    const double frac = zero_cols / 60.0;
    CHECK(frac >= 0.05);
    CHECK(frac <= 0.15);
    for (std::size_t r = 0; r < rec.starts.size(); ++r) {
      CHECK(rec.widths[r] >= 1);
      CHECK(rec.widths[r] <= 3);
      for (int t = 0; t < rec.widths[r]; ++t)
        for (int i = 0; i < 16; ++i) CHECK(noisy.at(rec.band, i, rec.starts[r] + t) == 0.0f);
    }
  }
  for (int b = 0; b < 30; ++b)
    if (!dead_bands.count(b)) CHECK(band_equal(noisy, clean, b));
  CHECK_THROWS_AS(add_deadlines(random_cube(2, 8, 10, 1), 1.0, 1), ShapeError);
}

TEST_CASE("impulse") {
  const HSICube clean = random_cube(12, 64, 64, 12, 0.01, 0.99);
  auto [noisy, report] = add_impulse(clean, 1.0 / 3.0, 79);
  CHECK(report.impulses.size() == 4u);
  std::set<int> hit_bands;
  for (const auto& rec : report.impulses) {
    hit_bands.insert(rec.band);
    CHECK(rec.intensity >= 0.10);
    CHECK(rec.intensity <= 0.70);
    int hits = 0, salt = 0;
    for (int i = 0; i < 64; ++i)
      for (int j = 0; j < 64; ++j) {
        const float v = noisy.at(rec.band, i, j);
        if ((v == 0.0f || v == 1.0f) && v != clean.at(rec.band, i, j)) {
          ++hits;
          salt += v == 1.0f;
        } else {
          CHECK(v == clean.at(rec.band, i, j));
        }
      }
    CHECK(std::abs(hits / 4096.0 - rec.intensity) < 0.02);
    CHECK(std::abs(salt / static_cast<double>(hits) - 0.5) < 0.1);
  }
  for (int b = 0; b < 12; ++b)
    if (!hit_bands.count(b)) CHECK(band_equal(noisy, clean, b));
}

TEST_CASE("complex cases") {
  const HSICube clean(30, 32, 40, 0.5f);

  SUBCASE("determinism and report round trip") {
    for (int c = 1; c <= 5; ++c) {
      const auto spec = NoiseSpec::complex_case(c, 900 + c);
      auto [a, ra] = synthesize_case(clean, spec);
      auto [b, rb] = synthesize_case(clean, spec);
      CHECK(bitwise_equal(a, b));
      CHECK(ra == rb);
      CHECK(NoiseReport::parse(ra.to_text()) == ra);
      for (float v : a.data()) CHECK((v >= 0.0f && v <= 1.0f));
    }
  }
  SUBCASE("affected band counts") {
    CHECK(synthesize_case(clean, NoiseSpec::complex_case(2, 1)).second.stripes.size() == 10u);
    CHECK(synthesize_case(clean, NoiseSpec::complex_case(3, 1)).second.deadlines.size() == 10u);
    CHECK(synthesize_case(clean, NoiseSpec::complex_case(4, 1)).second.impulses.size() == 10u);
  }
  SUBCASE("case 2 minus case 1 leaves column offsets") {
    auto s1 = NoiseSpec::complex_case(1, 31);
    auto s2 = NoiseSpec::complex_case(2, 31);
    s1.sigma_lo = s2.sigma_lo = 5.0;
    s1.sigma_hi = s2.sigma_hi = 10.0;
    auto [n1, r1] = synthesize_case(clean, s1);
    auto [n2, r2] = synthesize_case(clean, s2);
    CHECK(r1.per_band_sigma == r2.per_band_sigma);
    std::set<int> striped;
    for (const auto& rec : r2.stripes) {
      striped.insert(rec.band);
      for (int j = 0; j < 40; ++j) {
        const float d0 = n2.at(rec.band, 0, j) - n1.at(rec.band, 0, j);
        for (int i = 1; i < 32; ++i) CHECK(std::abs((n2.at(rec.band, i, j) - n1.at(rec.band, i, j)) - d0) < 1e-6f);
      }
    }
    for (int b = 0; b < 30; ++b)
      if (!striped.count(b)) CHECK(band_equal(n1, n2, b));
  }
  SUBCASE("locality: unnamed pixels carry only gaussian noise") {
    for (int c = 2; c <= 5; ++c) {
      auto [noisy, r] = synthesize_case(clean, NoiseSpec::complex_case(c, 50 + c));
      std::vector<std::vector<bool>> structured(30, std::vector<bool>(40, false));
      std::vector<bool> impulse_band(30, false);
      for (const auto& s : r.stripes)
        for (int col : s.columns) structured[s.band][col] = true;
      for (const auto& d : r.deadlines)
        for (std::size_t k = 0; k < d.starts.size(); ++k)
          for (int t = 0; t < d.widths[k]; ++t) structured[d.band][d.starts[k] + t] = true;
      for (const auto& im : r.impulses) impulse_band[im.band] = true;
      for (int b = 0; b < 30; ++b) {
        const double bound = 8.0 * r.per_band_sigma[b] / 255.0;
        for (int i = 0; i < 32; ++i)
          for (int j = 0; j < 40; ++j) {
            if (structured[b][j]) continue;
            const float v = noisy.at(b, i, j);
            if (impulse_band[b] && (v == 0.0f || v == 1.0f)) continue;
            CHECK(std::abs(v - 0.5) <= bound);
          }
      }
    }
  }
  SUBCASE("case 5 mixes per band") {
    auto [noisy, r] = synthesize_case(clean, NoiseSpec::complex_case(5, 3));
    CHECK(!r.stripes.empty());
    CHECK(!r.deadlines.empty());
    CHECK(!r.impulses.empty());
    CHECK(r.stripes.size() < 30u);
  }
  SUBCASE("blind draws one of the listed sigmas") {
    std::set<double> seen;
    for (std::uint64_t s = 0; s < 40; ++s) {
      auto [n, r] = synthesize_case(clean, NoiseSpec::blind(s));
      seen.insert(r.per_band_sigma[0]);
      for (double v : r.per_band_sigma) CHECK(v == r.per_band_sigma[0]);
    }
    CHECK(seen == std::set<double>{30.0, 50.0, 70.0});
  }
  SUBCASE("structured cases need width >= 20") {
    const HSICube narrow(4, 32, 16, 0.5f);
    CHECK_NOTHROW(synthesize_case(narrow, NoiseSpec::complex_case(1, 1)));
    CHECK_NOTHROW(synthesize_case(narrow, NoiseSpec::complex_case(4, 1)));
    for (int c : {2, 3, 5}) CHECK_THROWS_AS(synthesize_case(narrow, NoiseSpec::complex_case(c, 1)), ShapeError);
  }
}

TEST_CASE("noise case parsing and validation") {
  CHECK(parse_noise_case("g30", 1).kind == NoiseCase::kGaussFixed);
  CHECK(parse_noise_case("g30", 1).sigma_lo == 30.0);
  CHECK(parse_noise_case("g12.5", 1).sigma_lo == 12.5);
  CHECK(parse_noise_case("blind", 1).kind == NoiseCase::kGaussBlind);
  CHECK(parse_noise_case("3", 1).kind == NoiseCase::kCase3Deadline);
  CHECK_THROWS_AS(parse_noise_case("6", 1), ParamError);
  CHECK_THROWS_AS(parse_noise_case("gx", 1), FormatError);
  CHECK_THROWS_AS(parse_noise_case("", 1), ParamError);
  CHECK_THROWS_AS(NoiseSpec::complex_case(0, 1), ParamError);
  auto bad = NoiseSpec::fixed(0.0, 1);
  CHECK_THROWS_AS(bad.validate(), ParamError);
  CHECK(NoiseSpec::complex_case(2, 1).name() == "case2_stripe");
}

TEST_CASE("noise report text") {
  NoiseReport r;
  r.per_band_sigma = {31.5, 0.0, 70.0};
  r.stripes = {{0, {1, 5, 9}}};
  r.deadlines = {{2, {3, 10}, {2, 1}}};
  r.impulses = {{1, 0.25}};
  const std::string text = r.to_text();
  CHECK(text.find("band=0 kind=stripe columns=1,5,9") != std::string::npos);
  CHECK(text.find("band=2 kind=deadline columns=3,10 width=2,1") != std::string::npos);
  CHECK(text.find("band=1 kind=impulse intensity=0.25") != std::string::npos);
  CHECK(NoiseReport::parse(text) == r);
  CHECK_THROWS_AS(NoiseReport::parse("band=0 kind=stripe columns=1\n"), FormatError);
  CHECK_THROWS_AS(NoiseReport::parse("band=0 kind=weird\nbands=1 kind=summary\n"), FormatError);
  CHECK_THROWS_AS(NoiseReport::parse("band=5 kind=gaussian sigma=3\nbands=1 kind=summary\n"), FormatError);
}

TEST_CASE("structured column count bounds") {
  for (int w : {20, 21, 37, 64, 100, 511}) {
    for (double f : {0.0, 0.05, 0.1, 0.15, 0.5}) {
      const int n = structured_column_count(w, f);
      CHECK(n >= static_cast<int>(std::floor(0.05 * w)));
      CHECK(n <= static_cast<int>(std::ceil(0.15 * w)));
      CHECK(n / static_cast<double>(w) >= 0.05 - 1e-12);
      CHECK(n / static_cast<double>(w) <= 0.15 + 1e-12);
    }
  }
}
