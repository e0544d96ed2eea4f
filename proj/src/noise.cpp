// Copyright (c) 2026 The MAFNet-HSI Authors
// SPDX-License-Identifier: Apache-2.0

#include "mafnet/noise.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mafnet/rng.hpp"

namespace mafnet {

namespace {

// Seed streams. Every component draws from its own stream so that, for a
// fixed master seed, Case 1 is a literal sub-realization of Cases 2-5.
enum Stream : std::uint64_t {
  kSigmaStream = 1,
  kFieldStream = 2,
  kStripeStream = 3,
  kDeadlineStream = 4,
  kImpulseStream = 5,
  kMixStream = 6,
  kBlindStream = 7,
};
constexpr std::uint64_t kSelectIndex = 0xFFFF'FFFFull;

constexpr double kStructuredFracLo = 0.05;
constexpr double kStructuredFracHi = 0.15;
constexpr double kStripeAmplitude = 0.25;
constexpr double kImpulseLo = 0.10;
constexpr double kImpulseHi = 0.70;
constexpr int kMinStructuredWidth = 20;

void check_sigma(double sigma, const char* where) {
  if (!(sigma > 0.0) || sigma > kSigmaScale) {
    throw ParamError(std::string(where) + ": sigma must lie in (0, 255], got " +
                     std::to_string(sigma));
  }
}

void check_band_fraction(double f, const char* where) {
  if (!(f > 0.0) || f > 1.0) {
    throw ParamError(std::string(where) + ": band fraction must lie in (0, 1]");
  }
}

void check_structured_width(const HSICube& cube, const char* where) {
  if (cube.width() < kMinStructuredWidth) {
    throw ShapeError(std::string(where) + ": width " + std::to_string(cube.width()) +
                     " too small to resolve a 5-15% column fraction (need >= 20)");
  }
}

void add_gaussian_field(Tensor<float>& work, const std::vector<double>& sigmas,
                        std::uint64_t seed) {
  const int plane = work.plane();
  for (int b = 0; b < work.channels(); ++b) {
    Rng rng(derive_seed(seed, kFieldStream, static_cast<std::uint64_t>(b)));
    std::normal_distribution<double> normal(0.0, sigmas[b] / kSigmaScale);
    float* p = work.channel(b);
    for (int k = 0; k < plane; ++k) p[k] = static_cast<float>(p[k] + normal(rng));
  }
}

std::vector<double> draw_band_sigmas(int bands, double lo, double hi, std::uint64_t seed) {
  std::vector<double> sigmas(bands);
  for (int b = 0; b < bands; ++b) {
    Rng rng(derive_seed(seed, kSigmaStream, static_cast<std::uint64_t>(b)));
    sigmas[b] = lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
  }
  return sigmas;
}

std::vector<int> select_bands(int bands, double fraction, std::uint64_t seed, Stream stream) {
  const int n = static_cast<int>(std::floor(fraction * bands + 1e-9));
  std::vector<int> order(bands);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, stream, kSelectIndex));
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(n);
  std::sort(order.begin(), order.end());
  return order;
}

// Draws `count` distinct values from [0, n) via a partial Fisher-Yates pass.
std::vector<int> sample_distinct(int n, int count, Rng& rng) {
  std::vector<int> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  for (int k = 0; k < count; ++k) {
    std::uniform_int_distribution<int> pick(k, n - 1);
    std::swap(pool[k], pool[pick(rng)]);
  }
  pool.resize(count);
  return pool;
}

StripeRecord stripe_band(Tensor<float>& work, int band, std::uint64_t seed) {
  Rng rng(derive_seed(seed, kStripeStream, static_cast<std::uint64_t>(band)));
  const double frac = std::uniform_real_distribution<double>(kStructuredFracLo, kStructuredFracHi)(rng);
  const int w = work.width();
  StripeRecord rec;
  rec.band = band;
  rec.columns = sample_distinct(w, structured_column_count(w, frac), rng);
  std::sort(rec.columns.begin(), rec.columns.end());
  std::uniform_real_distribution<double> amp(-kStripeAmplitude, kStripeAmplitude);
  for (int col : rec.columns) {
    const auto offset = static_cast<float>(amp(rng));
    for (int i = 0; i < work.height(); ++i) work(band, i, col) += offset;
  }
  return rec;
}

DeadlineRecord deadline_band(Tensor<float>& work, int band, std::uint64_t seed) {
  Rng rng(derive_seed(seed, kDeadlineStream, static_cast<std::uint64_t>(band)));
  const double frac = std::uniform_real_distribution<double>(kStructuredFracLo, kStructuredFracHi)(rng);
  const int w = work.width();
  int remaining = structured_column_count(w, frac);
  std::vector<bool> dead(w, false);
  std::vector<std::pair<int, int>> runs;
  std::uniform_int_distribution<int> width_dist(1, 3);
  while (remaining > 0) {
    int run = std::min(width_dist(rng), remaining);
    std::vector<int> starts;
    while (true) {
      starts.clear();
      for (int s = 0; s + run <= w; ++s) {
        bool free = true;
        for (int t = 0; t < run && free; ++t) free = !dead[s + t];
        if (free) starts.push_back(s);
      }
      if (!starts.empty() || run == 1) break;
      --run;
    }
    const int s = starts[std::uniform_int_distribution<std::size_t>(0, starts.size() - 1)(rng)];
    for (int t = 0; t < run; ++t) dead[s + t] = true;
    runs.emplace_back(s, run);
    remaining -= run;
  }
  std::sort(runs.begin(), runs.end());
  DeadlineRecord rec;
  rec.band = band;
  for (auto [s, run] : runs) {
    rec.starts.push_back(s);
    rec.widths.push_back(run);
    for (int t = 0; t < run; ++t) {
      for (int i = 0; i < work.height(); ++i) work(band, i, s + t) = 0.0f;
    }
  }
  return rec;
}

ImpulseRecord impulse_band(Tensor<float>& work, int band, std::uint64_t seed) {
  Rng rng(derive_seed(seed, kImpulseStream, static_cast<std::uint64_t>(band)));
  ImpulseRecord rec;
  rec.band = band;
  rec.intensity = std::uniform_real_distribution<double>(kImpulseLo, kImpulseHi)(rng);
  const int plane = work.plane();
  const int hits = static_cast<int>(std::lround(rec.intensity * plane));
  std::bernoulli_distribution salt(0.5);
  float* p = work.channel(band);
  for (int idx : sample_distinct(plane, hits, rng)) p[idx] = salt(rng) ? 1.0f : 0.0f;
  return rec;
}

void clip_unit(Tensor<float>& work) {
  for (float& v : work.values()) v = std::clamp(v, 0.0f, 1.0f);
}

HSICube finish(const HSICube& like, Tensor<float> work) {
  clip_unit(work);
  HSICube out(std::move(work), like.value_range());
  out.require_finite("noise synthesis");
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

template <typename Int>
std::string join(const std::vector<Int>& xs) {
  std::string s;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (k) s += ',';
    s += std::to_string(xs[k]);
  }
  return s;
}

std::vector<int> split_ints(std::string_view text) {
  std::vector<int> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const auto token = text.substr(0, comma);
    int v = 0;
    auto res = std::from_chars(token.data(), token.data() + token.size(), v);
    if (res.ec != std::errc{} || res.ptr != token.data() + token.size()) {
      throw FormatError("noise report: bad integer list");
    }
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

double parse_double(std::string_view token) {
  double v = 0.0;
  auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc{} || res.ptr != token.data() + token.size()) {
    throw FormatError("noise report: bad number '" + std::string(token) + "'");
  }
  return v;
}

}  // namespace

int DeadlineRecord::covered_columns() const {
  return std::accumulate(widths.begin(), widths.end(), 0);
}

bool operator==(const StripeRecord& a, const StripeRecord& b) {
  return a.band == b.band && a.columns == b.columns;
}
bool operator==(const DeadlineRecord& a, const DeadlineRecord& b) {
  return a.band == b.band && a.starts == b.starts && a.widths == b.widths;
}
bool operator==(const ImpulseRecord& a, const ImpulseRecord& b) {
  return a.band == b.band && a.intensity == b.intensity;
}

int structured_column_count(int width, double fraction) {
  const int lo = static_cast<int>(std::ceil(kStructuredFracLo * width - 1e-9));
  const int hi = static_cast<int>(std::floor(kStructuredFracHi * width + 1e-9));
  return std::clamp(static_cast<int>(std::lround(fraction * width)), std::max(lo, 1), hi);
}

NoiseSpec NoiseSpec::fixed(double sigma, std::uint64_t seed) {
  NoiseSpec s;
  s.kind = NoiseCase::kGaussFixed;
  s.sigma_lo = s.sigma_hi = sigma;
  s.seed = seed;
  return s;
}

NoiseSpec NoiseSpec::blind(std::uint64_t seed) {
  NoiseSpec s;
  s.kind = NoiseCase::kGaussBlind;
  s.sigma_lo = kBlindSigmas[0];
  s.sigma_hi = kBlindSigmas[2];
  s.seed = seed;
  return s;
}

NoiseSpec NoiseSpec::complex_case(int case_number, std::uint64_t seed) {
  static constexpr NoiseCase kCases[] = {NoiseCase::kCase1NonIid, NoiseCase::kCase2Stripe,
                                         NoiseCase::kCase3Deadline, NoiseCase::kCase4Impulse,
                                         NoiseCase::kCase5Mixture};
  if (case_number < 1 || case_number > 5) {
    throw ParamError("complex noise case must be 1..5, got " + std::to_string(case_number));
  }
  NoiseSpec s;
  s.kind = kCases[case_number - 1];
  s.seed = seed;
  return s;
}

void NoiseSpec::validate() const {
  check_sigma(sigma_lo, "NoiseSpec");
  check_sigma(sigma_hi, "NoiseSpec");
  if (sigma_lo > sigma_hi) throw ParamError("NoiseSpec: sigma_lo > sigma_hi");
  check_band_fraction(band_fraction, "NoiseSpec");
}

std::string NoiseSpec::name() const {
  switch (kind) {
    case NoiseCase::kGaussFixed: return "gauss_fixed_" + format_double(sigma_lo);
    case NoiseCase::kGaussBlind: return "gauss_blind";
    case NoiseCase::kCase1NonIid: return "case1_noniid";
    case NoiseCase::kCase2Stripe: return "case2_stripe";
    case NoiseCase::kCase3Deadline: return "case3_deadline";
    case NoiseCase::kCase4Impulse: return "case4_impulse";
    case NoiseCase::kCase5Mixture: return "case5_mixture";
  }
  return "unknown";
}

NoiseSpec parse_noise_case(std::string_view text, std::uint64_t seed) {
  if (text == "blind") return NoiseSpec::blind(seed);
  if (text.size() > 1 && text.front() == 'g') {
    return NoiseSpec::fixed(parse_double(text.substr(1)), seed);
  }
  if (text.size() == 1 && text[0] >= '1' && text[0] <= '5') {
    return NoiseSpec::complex_case(text[0] - '0', seed);
  }
  throw ParamError("unknown noise case '" + std::string(text) +
                   "' (expected g30, g50, g70, blind, 1..5)");
}

NoisyResult add_gaussian(const HSICube& cube, double sigma, std::uint64_t seed) {
  check_sigma(sigma, "add_gaussian");
  NoiseReport report;
  report.per_band_sigma.assign(cube.bands(), sigma);
  Tensor<float> work = cube.voxels();
  add_gaussian_field(work, report.per_band_sigma, seed);
  return {finish(cube, std::move(work)), std::move(report)};
}

NoisyResult add_noniid_gaussian(const HSICube& cube, double sigma_lo, double sigma_hi,
                                std::uint64_t seed) {
  check_sigma(sigma_lo, "add_noniid_gaussian");
  check_sigma(sigma_hi, "add_noniid_gaussian");
  if (sigma_lo > sigma_hi) throw ParamError("add_noniid_gaussian: sigma_lo > sigma_hi");
  NoiseReport report;
  report.per_band_sigma = draw_band_sigmas(cube.bands(), sigma_lo, sigma_hi, seed);
  Tensor<float> work = cube.voxels();
  add_gaussian_field(work, report.per_band_sigma, seed);
  return {finish(cube, std::move(work)), std::move(report)};
}

NoisyResult add_stripes(const HSICube& cube, double band_fraction, std::uint64_t seed) {
  check_band_fraction(band_fraction, "add_stripes");
  check_structured_width(cube, "add_stripes");
  NoiseReport report;
  report.per_band_sigma.assign(cube.bands(), 0.0);
  Tensor<float> work = cube.voxels();
  for (int b : select_bands(cube.bands(), band_fraction, seed, kStripeStream)) {
    report.stripes.push_back(stripe_band(work, b, seed));
  }
  return {finish(cube, std::move(work)), std::move(report)};
}

NoisyResult add_deadlines(const HSICube& cube, double band_fraction, std::uint64_t seed) {
  check_band_fraction(band_fraction, "add_deadlines");
  check_structured_width(cube, "add_deadlines");
  NoiseReport report;
  report.per_band_sigma.assign(cube.bands(), 0.0);
  Tensor<float> work = cube.voxels();
  for (int b : select_bands(cube.bands(), band_fraction, seed, kDeadlineStream)) {
    report.deadlines.push_back(deadline_band(work, b, seed));
  }
  return {finish(cube, std::move(work)), std::move(report)};
}

NoisyResult add_impulse(const HSICube& cube, double band_fraction, std::uint64_t seed) {
  check_band_fraction(band_fraction, "add_impulse");
  NoiseReport report;
  report.per_band_sigma.assign(cube.bands(), 0.0);
  Tensor<float> work = cube.voxels();
  for (int b : select_bands(cube.bands(), band_fraction, seed, kImpulseStream)) {
    report.impulses.push_back(impulse_band(work, b, seed));
  }
  return {finish(cube, std::move(work)), std::move(report)};
}

NoisyResult synthesize_case(const HSICube& cube, const NoiseSpec& spec) {
  spec.validate();
  const std::uint64_t seed = spec.seed;
  const int bands = cube.bands();
  NoiseReport report;

  switch (spec.kind) {
    case NoiseCase::kGaussFixed:
      report.per_band_sigma.assign(bands, spec.sigma_lo);
      break;
    case NoiseCase::kGaussBlind: {
      Rng rng(derive_seed(seed, kBlindStream));
      const double sigma = kBlindSigmas[std::uniform_int_distribution<int>(0, 2)(rng)];
      report.per_band_sigma.assign(bands, sigma);
      break;
    }
    default:
      report.per_band_sigma = draw_band_sigmas(bands, spec.sigma_lo, spec.sigma_hi, seed);
      break;
  }

  std::vector<int> stripe_bands, impulse_bands, deadline_bands;
  switch (spec.kind) {
    case NoiseCase::kCase2Stripe:
      check_structured_width(cube, "case 2");
      stripe_bands = select_bands(bands, spec.band_fraction, seed, kStripeStream);
      break;
    case NoiseCase::kCase3Deadline:
      check_structured_width(cube, "case 3");
      deadline_bands = select_bands(bands, spec.band_fraction, seed, kDeadlineStream);
      break;
    case NoiseCase::kCase4Impulse:
      impulse_bands = select_bands(bands, spec.band_fraction, seed, kImpulseStream);
      break;
    case NoiseCase::kCase5Mixture:
      check_structured_width(cube, "case 5");
      for (int b = 0; b < bands; ++b) {
        Rng rng(derive_seed(seed, kMixStream, static_cast<std::uint64_t>(b)));
        std::bernoulli_distribution coin(0.5);
        if (coin(rng)) stripe_bands.push_back(b);
        if (coin(rng)) deadline_bands.push_back(b);
        if (coin(rng)) impulse_bands.push_back(b);
      }
      break;
    default:
      break;
  }

  Tensor<float> work = cube.voxels();
  add_gaussian_field(work, report.per_band_sigma, seed);
  for (int b : stripe_bands) report.stripes.push_back(stripe_band(work, b, seed));
  for (int b : impulse_bands) report.impulses.push_back(impulse_band(work, b, seed));
  for (int b : deadline_bands) report.deadlines.push_back(deadline_band(work, b, seed));
  return {finish(cube, std::move(work)), std::move(report)};
}

std::string NoiseReport::to_text() const {
  std::ostringstream os;
  for (std::size_t b = 0; b < per_band_sigma.size(); ++b) {
    if (per_band_sigma[b] > 0.0) {
      os << "band=" << b << " kind=gaussian sigma=" << format_double(per_band_sigma[b]) << '\n';
    }
  }
  for (const auto& s : stripes) {
    os << "band=" << s.band << " kind=stripe columns=" << join(s.columns) << '\n';
  }
  for (const auto& d : deadlines) {
    os << "band=" << d.band << " kind=deadline columns=" << join(d.starts)
       << " width=" << join(d.widths) << '\n';
  }
  for (const auto& i : impulses) {
    os << "band=" << i.band << " kind=impulse intensity=" << format_double(i.intensity) << '\n';
  }
  os << "bands=" << per_band_sigma.size() << " kind=summary\n";
  return os.str();
}

NoiseReport NoiseReport::parse(std::string_view text) {
  NoiseReport report;
  std::istringstream is{std::string(text)};
  std::string line;
  std::vector<std::pair<int, double>> sigmas;
  bool have_summary = false;
  std::size_t bands = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string token, kind;
    int band = -1;
    std::string columns, width, sigma, intensity;
    while (ls >> token) {
      const auto eq = token.find('=');
      if (eq == std::string::npos) throw FormatError("noise report: token without '='");
      const auto key = token.substr(0, eq);
      const auto value = token.substr(eq + 1);
      if (key == "band") band = static_cast<int>(parse_double(value));
      else if (key == "bands") bands = static_cast<std::size_t>(parse_double(value));
      else if (key == "kind") kind = value;
      else if (key == "columns") columns = value;
      else if (key == "width") width = value;
      else if (key == "sigma") sigma = value;
      else if (key == "intensity") intensity = value;
      else throw FormatError("noise report: unknown field '" + key + "'");
    }
    if (kind == "summary") {
      have_summary = true;
    } else if (kind == "gaussian") {
      sigmas.emplace_back(band, parse_double(sigma));
    } else if (kind == "stripe") {
      report.stripes.push_back({band, split_ints(columns)});
    } else if (kind == "deadline") {
      report.deadlines.push_back({band, split_ints(columns), split_ints(width)});
    } else if (kind == "impulse") {
      report.impulses.push_back({band, parse_double(intensity)});
    } else {
      throw FormatError("noise report: unknown kind '" + kind + "'");
    }
  }
  if (!have_summary) throw FormatError("noise report: missing summary line");
  report.per_band_sigma.assign(bands, 0.0);
  for (auto [b, s] : sigmas) {
    if (b < 0 || static_cast<std::size_t>(b) >= bands) throw FormatError("noise report: band out of range");
    report.per_band_sigma[b] = s;
  }
  return report;
}

}  // namespace mafnet
