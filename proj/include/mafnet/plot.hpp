// Copyright (c) 2026 The MAFNet-HSI Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef MAFNET_PLOT_HPP
#define MAFNET_PLOT_HPP

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mafnet/metrics.hpp"
#include "mafnet/trainer.hpp"

namespace mafnet {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

/// Standalone SVG line chart. The root element carries the axis ranges as
/// data-xmin/data-xmax/data-ymin/data-ymax; non-finite points are dropped.
std::string render_svg(const LineChart& chart);

struct SvgAxes {
  double xmin = 0.0;
  double xmax = 0.0;
  double ymin = 0.0;
  double ymax = 0.0;
  int series = 0;
};
SvgAxes parse_svg_axes(std::string_view svg);

/// Writes `<stem>psnr_per_band.svg` and `<stem>ssim_per_band.svg`.
std::vector<std::filesystem::path> plot_metrics(const MetricsTable& table,
                                                const std::filesystem::path& dir,
                                                const std::string& stem = "");

/// One overlay of total loss against cumulative epoch, one curve per log.
std::filesystem::path plot_loss_curves(
    const std::vector<std::pair<std::string, std::vector<EpochLog>>>& logs,
    const std::filesystem::path& dir);

}  // namespace mafnet

#endif  // MAFNET_PLOT_HPP
