// SPDX-License-Identifier: Apache-2.0
//
// CSV output and minimal SVG scatter / line plots.

#pragma once

#include "indm/autodiff.hpp"

#include <string>
#include <vector>

namespace indm {

/// Writes rows of `values` under a comma-separated header.
void write_csv(const std::string& path, const std::vector<std::string>& header, const Tensor& values);
/// Reads a numeric CSV with one header line.
Tensor read_csv(const std::string& path, std::vector<std::string>* header = nullptr);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotOptions {
  std::string title;
  double width = 480;
  double height = 480;
  bool log_x = false;
  bool log_y = false;
};

/// Scatter of the first two columns of each panel, drawn side by side with
/// shared axes.
std::string svg_scatter(const std::vector<Tensor>& panels, const std::vector<std::string>& titles,
                        const PlotOptions& opts = {});
std::string svg_lines(const std::vector<Series>& series, const PlotOptions& opts = {});
void write_text(const std::string& path, const std::string& text);

}  // namespace indm
