// Copyright (c) 2026 The MAFNet-HSI Authors
// SPDX-License-Identifier: Apache-2.0

#include "mafnet/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace mafnet {

namespace {

void require_same(const HSICube& est, const HSICube& ref, const char* where) {
  est.voxels().require_same_shape(ref.voxels(), where);
}

void require_range(double data_range, const char* where) {
  if (!(data_range > 0.0) || !std::isfinite(data_range)) {
    throw ParamError(std::string(where) + ": data_range must be positive");
  }
}

// Valid-mode separable filtering of an H x W plane.
std::vector<double> filter_valid(const std::vector<double>& img, int h, int w,
                                 const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int oh = h - n + 1, ow = w - n + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow, 0.0);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < ow; ++j) {
      double s = 0.0;
      for (int t = 0; t < n; ++t) s += k[t] * img[static_cast<std::size_t>(i) * w + j + t];
      rows[static_cast<std::size_t>(i) * ow + j] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int i = 0; i < oh; ++i) {
    for (int t = 0; t < n; ++t) {
      const double kt = k[t];
      const double* src = rows.data() + static_cast<std::size_t>(i + t) * ow;
      double* dst = out.data() + static_cast<std::size_t>(i) * ow;
      for (int j = 0; j < ow; ++j) dst[j] += kt * src[j];
    }
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view token) {
  double v = 0.0;
  auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc{} || res.ptr != token.data() + token.size()) {
    throw FormatError("metrics table: bad number '" + std::string(token) + "'");
  }
  return v;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  while (true) {
    const auto tab = line.find('\t');
    out.push_back(line.substr(0, tab));
    if (tab == std::string_view::npos) break;
    line.remove_prefix(tab + 1);
  }
  return out;
}

constexpr std::string_view kHeader = "band\tpsnr_db\tssim\tsam_rad";

}  // namespace

PsnrResult psnr(const HSICube& est, const HSICube& ref, double data_range) {
  require_same(est, ref, "psnr");
  require_range(data_range, "psnr");
  PsnrResult out;
  const std::size_t plane = static_cast<std::size_t>(est.height()) * est.width();
  double finite_sum = 0.0;
  int finite = 0;
  for (int b = 0; b < est.bands(); ++b) {
    const float* e = est.voxels().channel(b);
    const float* r = ref.voxels().channel(b);
    double se = 0.0;
    for (std::size_t k = 0; k < plane; ++k) {
      const double d = static_cast<double>(e[k]) - static_cast<double>(r[k]);
      se += d * d;
    }
    const double mse = plane ? se / static_cast<double>(plane) : 0.0;
    double db = std::numeric_limits<double>::infinity();
    if (mse > 0.0) {
      db = 10.0 * std::log10(data_range * data_range / mse);
      finite_sum += db;
      ++finite;
    } else {
      ++out.infinite_bands;
    }
    out.per_band.push_back(db);
  }
  out.mean = finite ? finite_sum / finite : std::numeric_limits<double>::infinity();
  return out;
}

std::vector<double> ssim_kernel() {
  std::vector<double> k(kSsimWindow);
  const int half = kSsimWindow / 2;
  double s = 0.0;
  for (int t = 0; t < kSsimWindow; ++t) {
    const double x = t - half;
    k[t] = std::exp(-x * x / (2.0 * kSsimSigma * kSsimSigma));
    s += k[t];
  }
  for (double& v : k) v /= s;
  return k;
}

SsimResult ssim(const HSICube& est, const HSICube& ref, double data_range) {
  require_same(est, ref, "ssim");
  require_range(data_range, "ssim");
  const int h = est.height(), w = est.width();
  if (h < kSsimWindow || w < kSsimWindow) {
    throw ShapeError("ssim: image " + std::to_string(h) + "x" + std::to_string(w) +
                     " smaller than the " + std::to_string(kSsimWindow) + "x" +
                     std::to_string(kSsimWindow) + " window");
  }
  const auto k = ssim_kernel();
  const double c1 = std::pow(kSsimK1 * data_range, 2);
  const double c2 = std::pow(kSsimK2 * data_range, 2);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  SsimResult out;
  std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
  for (int b = 0; b < est.bands(); ++b) {
    const float* e = est.voxels().channel(b);
    const float* r = ref.voxels().channel(b);
    for (std::size_t p = 0; p < plane; ++p) {
      x[p] = e[p];
      y[p] = r[p];
      xx[p] = x[p] * x[p];
      yy[p] = y[p] * y[p];
      xy[p] = x[p] * y[p];
    }
    const auto mx = filter_valid(x, h, w, k);
    const auto my = filter_valid(y, h, w, k);
    const auto mxx = filter_valid(xx, h, w, k);
    const auto myy = filter_valid(yy, h, w, k);
    const auto mxy = filter_valid(xy, h, w, k);
    double s = 0.0;
    for (std::size_t p = 0; p < mx.size(); ++p) {
      const double vx = mxx[p] - mx[p] * mx[p];
      const double vy = myy[p] - my[p] * my[p];
      const double cxy = mxy[p] - mx[p] * my[p];
      const double num = (2.0 * mx[p] * my[p] + c1) * (2.0 * cxy + c2);
      const double den = (mx[p] * mx[p] + my[p] * my[p] + c1) * (vx + vy + c2);
      s += num / den;
    }
    out.per_band.push_back(s / static_cast<double>(mx.size()));
  }
  double total = 0.0;
  for (double v : out.per_band) total += v;
  out.mean = out.per_band.empty() ? 0.0 : total / static_cast<double>(out.per_band.size());
  return out;
}

SamResult sam(const HSICube& est, const HSICube& ref) {
  require_same(est, ref, "sam");
  if (est.bands() < 2) throw ShapeError("sam: needs at least 2 bands");
  const int h = est.height(), w = est.width();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  SamResult out;
  out.angles = Tensor<double>(1, h, w);
  std::vector<double> ne(plane, 0.0), nr(plane, 0.0);
  for (int b = 0; b < est.bands(); ++b) {
    const float* e = est.voxels().channel(b);
    const float* r = ref.voxels().channel(b);
    for (std::size_t p = 0; p < plane; ++p) {
      ne[p] += static_cast<double>(e[p]) * e[p];
      nr[p] += static_cast<double>(r[p]) * r[p];
    }
  }
  for (std::size_t p = 0; p < plane; ++p) {
    ne[p] = std::sqrt(ne[p]);
    nr[p] = std::sqrt(nr[p]);
  }
  // angle = 2 atan2(|u - v|, |u + v|) on the unit vectors; unlike acos of the
  // cosine it stays accurate near 0 and pi.
  std::vector<double> diff(plane, 0.0), sum(plane, 0.0);
  for (int b = 0; b < est.bands(); ++b) {
    const float* e = est.voxels().channel(b);
    const float* r = ref.voxels().channel(b);
    for (std::size_t p = 0; p < plane; ++p) {
      if (ne[p] < kSamNormFloor || nr[p] < kSamNormFloor) continue;
      const double u = e[p] / ne[p], v = r[p] / nr[p];
      diff[p] += (u - v) * (u - v);
      sum[p] += (u + v) * (u + v);
    }
  }
  double total = 0.0;
  for (std::size_t p = 0; p < plane; ++p) {
    double angle = 0.0;
    if (ne[p] >= kSamNormFloor && nr[p] >= kSamNormFloor) {
      angle = 2.0 * std::atan2(std::sqrt(diff[p]), std::sqrt(sum[p]));
    }
    out.angles.data()[p] = angle;
    total += angle;
  }
  out.mean = plane ? total / static_cast<double>(plane) : 0.0;
  return out;
}

MetricsTable compute_metrics(const HSICube& est, const HSICube& ref, double data_range) {
  const PsnrResult p = psnr(est, ref, data_range);
  const SsimResult s = ssim(est, ref, data_range);
  const SamResult a = sam(est, ref);
  MetricsTable t;
  t.psnr_mean = p.mean;
  t.ssim_mean = s.mean;
  t.sam_mean = a.mean;
  t.per_band_psnr = p.per_band;
  t.per_band_ssim = s.per_band;
  t.infinite_bands = p.infinite_bands;
  return t;
}

std::string MetricsTable::to_text() const {
  std::string s(kHeader);
  s += '\n';
  for (std::size_t b = 0; b < per_band_psnr.size(); ++b) {
    s += std::to_string(b) + '\t' + format_double(per_band_psnr[b]) + '\t' +
         format_double(per_band_ssim[b]) + "\t-\n";
  }
  s += "mean\t" + format_double(psnr_mean) + '\t' + format_double(ssim_mean) + '\t' +
       format_double(sam_mean) + '\n';
  return s;
}

MetricsTable MetricsTable::parse(std::string_view text) {
  MetricsTable t;
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != kHeader) throw FormatError("metrics table: bad header");
  bool saw_mean = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (saw_mean) throw FormatError("metrics table: rows after the mean row");
    const auto cols = split_tabs(line);
    if (cols.size() != 4) throw FormatError("metrics table: expected 4 columns");
    if (cols[0] == "mean") {
      t.psnr_mean = parse_double(cols[1]);
      t.ssim_mean = parse_double(cols[2]);
      t.sam_mean = parse_double(cols[3]);
      saw_mean = true;
      continue;
    }
    if (parse_double(cols[0]) != static_cast<double>(t.per_band_psnr.size())) {
      throw FormatError("metrics table: band rows out of order");
    }
    const double db = parse_double(cols[1]);
    if (std::isinf(db)) ++t.infinite_bands;
    t.per_band_psnr.push_back(db);
    t.per_band_ssim.push_back(parse_double(cols[2]));
  }
  if (!saw_mean) throw FormatError("metrics table: missing mean row");
  return t;
}

std::string MetricsTable::summary() const {
  char buf[128];
  if (std::isinf(psnr_mean)) {
    std::snprintf(buf, sizeof(buf), "PSNR=inf SSIM=%.4f SAM=%.4f", ssim_mean, sam_mean);
  } else {
    std::snprintf(buf, sizeof(buf), "PSNR=%.2f SSIM=%.4f SAM=%.4f", psnr_mean, ssim_mean, sam_mean);
  }
  return buf;
}

}  // namespace mafnet
