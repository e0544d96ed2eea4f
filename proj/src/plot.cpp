// Copyright (c) 2026 The MAFNet-HSI Authors
// SPDX-License-Identifier: Apache-2.0

#include "mafnet/plot.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace mafnet {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;
constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string num(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string label_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::pair<double, double> padded(double lo, double hi) {
  if (!(lo <= hi)) return {0.0, 1.0};
  if (hi - lo < 1e-12) return {lo - 0.5, hi + 0.5};
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

double attribute(std::string_view svg, std::string_view name) {
  const std::string key = std::string(name) + "=\"";
  const auto root_end = svg.find('>');
  const auto at = svg.find(key);
  if (at == std::string_view::npos || at > root_end) {
    throw FormatError("svg: missing " + std::string(name));
  }
  const auto start = at + key.size();
  const auto stop = svg.find('"', start);
  double v = 0.0;
  auto res = std::from_chars(svg.data() + start, svg.data() + stop, v);
  if (res.ec != std::errc{} || res.ptr != svg.data() + stop) {
    throw FormatError("svg: bad " + std::string(name));
  }
  return v;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace

std::string render_svg(const LineChart& chart) {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : chart.series) {
    for (std::size_t k = 0; k < std::min(s.x.size(), s.y.size()); ++k) {
      if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
      xmin = std::min(xmin, s.x[k]);
      xmax = std::max(xmax, s.x[k]);
      ymin = std::min(ymin, s.y[k]);
      ymax = std::max(ymax, s.y[k]);
    }
  }
  std::tie(xmin, xmax) = padded(xmin, xmax);
  std::tie(ymin, ymax) = padded(ymin, ymax);
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (x - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double y) { return kTop + (ymax - y) / (ymax - ymin) * ph; };

  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) +
                  "\" height=\"" + num(kHeight) + "\" data-xmin=\"" + num(xmin) +
                  "\" data-xmax=\"" + num(xmax) + "\" data-ymin=\"" + num(ymin) +
                  "\" data-ymax=\"" + num(ymax) + "\" data-series=\"" +
                  std::to_string(chart.series.size()) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(kWidth / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" +
       escape(chart.title) + "</text>\n";
  s += "<rect x=\"" + num(kLeft) + "\" y=\"" + num(kTop) + "\" width=\"" + num(pw) + "\" height=\"" +
       num(ph) + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double yv = ymin + (ymax - ymin) * t / 4.0;
    const double xv = xmin + (xmax - xmin) * t / 4.0;
    s += "<text x=\"" + num(kLeft - 6) + "\" y=\"" + num(sy(yv) + 4) +
         "\" text-anchor=\"end\" font-size=\"11\">" + label_num(yv) + "</text>\n";
    s += "<text x=\"" + num(sx(xv)) + "\" y=\"" + num(kTop + ph + 16) +
         "\" text-anchor=\"middle\" font-size=\"11\">" + label_num(xv) + "</text>\n";
  }
  s += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"" + num(kHeight - 10) +
       "\" text-anchor=\"middle\" font-size=\"13\">" + escape(chart.x_label) + "</text>\n";
  s += "<text x=\"16\" y=\"" + num(kTop + ph / 2) + "\" text-anchor=\"middle\" font-size=\"13\" " +
       "transform=\"rotate(-90 16 " + num(kTop + ph / 2) + ")\">" + escape(chart.y_label) +
       "</text>\n";
  for (std::size_t k = 0; k < chart.series.size(); ++k) {
    const Series& ser = chart.series[k];
    const char* color = kColors[k % std::size(kColors)];
    std::string pts;
    for (std::size_t i = 0; i < std::min(ser.x.size(), ser.y.size()); ++i) {
      if (!std::isfinite(ser.x[i]) || !std::isfinite(ser.y[i])) continue;
      if (!pts.empty()) pts += ' ';
      pts += num(sx(ser.x[i])) + ',' + num(sy(ser.y[i]));
    }
    s += "<polyline data-label=\"" + escape(ser.label) + "\" fill=\"none\" stroke=\"" + color +
         "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    s += "<text x=\"" + num(kLeft + 10) + "\" y=\"" + num(kTop + 16 + 14.0 * k) + "\" fill=\"" +
         color + "\" font-size=\"12\">" + escape(ser.label) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

SvgAxes parse_svg_axes(std::string_view svg) {
  if (svg.substr(0, 4) != "<svg") throw FormatError("svg: not an svg document");
  SvgAxes a;
  a.xmin = attribute(svg, "data-xmin");
  a.xmax = attribute(svg, "data-xmax");
  a.ymin = attribute(svg, "data-ymin");
  a.ymax = attribute(svg, "data-ymax");
  a.series = static_cast<int>(attribute(svg, "data-series"));
  return a;
}

std::vector<std::filesystem::path> plot_metrics(const MetricsTable& table,
                                                const std::filesystem::path& dir,
                                                const std::string& stem) {
  std::vector<double> bands(table.per_band_psnr.size());
  for (std::size_t b = 0; b < bands.size(); ++b) bands[b] = static_cast<double>(b + 1);
  LineChart psnr_chart{"PSNR per band", "band", "PSNR (dB)", {{"psnr", bands, table.per_band_psnr}}};
  LineChart ssim_chart{"SSIM per band", "band", "SSIM", {{"ssim", bands, table.per_band_ssim}}};
  const auto psnr_path = dir / (stem + "psnr_per_band.svg");
  const auto ssim_path = dir / (stem + "ssim_per_band.svg");
  write_text(psnr_path, render_svg(psnr_chart));
  write_text(ssim_path, render_svg(ssim_chart));
  return {psnr_path, ssim_path};
}

std::filesystem::path plot_loss_curves(
    const std::vector<std::pair<std::string, std::vector<EpochLog>>>& logs,
    const std::filesystem::path& dir) {
  if (logs.empty()) throw ParamError("plot_loss_curves: no training logs");
  LineChart chart{"Training loss", "epoch", "loss", {}};
  for (const auto& [label, entries] : logs) {
    Series s{label, {}, {}};
    for (std::size_t k = 0; k < entries.size(); ++k) {
      s.x.push_back(static_cast<double>(k + 1));
      s.y.push_back(entries[k].total);
    }
    chart.series.push_back(std::move(s));
  }
  const auto path = dir / "loss_curves.svg";
  write_text(path, render_svg(chart));
  return path;
}

}  // namespace mafnet
