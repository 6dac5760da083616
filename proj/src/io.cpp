// SPDX-License-Identifier: Apache-2.0

#include "indm/io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace indm {
namespace {

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void pad() {
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
    const double m = 0.05 * (hi - lo);
    lo -= m;
    hi += m;
  }
};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

}  // namespace

void write_text(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path);
  f << text;
}

void write_csv(const std::string& path, const std::vector<std::string>& header, const Tensor& values) {
  if (!header.empty() && static_cast<Index>(header.size()) != values.cols()) {
    throw ShapeError("write_csv: header has " + std::to_string(header.size()) + " names for " +
                     std::to_string(values.cols()) + " columns");
  }
  std::ostringstream os;
  os.precision(std::numeric_limits<double>::max_digits10);
  for (std::size_t j = 0; j < header.size(); ++j) os << (j ? "," : "") << header[j];
  os << '\n';
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) os << (j ? "," : "") << values(i, j);
    os << '\n';
  }
  write_text(path, os.str());
}

Tensor read_csv(const std::string& path, std::vector<std::string>* header) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open " + path);
  std::string line;
  std::getline(f, line);
  if (header) {
    header->clear();
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header->push_back(cell);
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows.front().size()) throw Error(path + ": ragged CSV row");
    rows.push_back(std::move(row));
  }
  Tensor out(static_cast<Index>(rows.size()), rows.empty() ? 0 : static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) out(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  }
  return out;
}

std::string svg_scatter(const std::vector<Tensor>& panels, const std::vector<std::string>& titles,
                        const PlotOptions& opts) {
  Range rx, ry;
  for (const auto& p : panels) {
    if (p.cols() < 2) throw ShapeError("svg_scatter needs two columns, got " + shape_str(p));
    for (Index i = 0; i < p.rows(); ++i) {
      rx.add(p(i, 0));
      ry.add(p(i, 1));
    }
  }
  rx.pad();
  ry.pad();
  const double w = opts.width, h = opts.height, top = opts.title.empty() ? 24 : 44;
  const double total_w = w * static_cast<double>(std::max<std::size_t>(panels.size(), 1));
  std::ostringstream os;
  os.precision(5);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << total_w << "\" height=\"" << h + top
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!opts.title.empty()) os << "<text x=\"8\" y=\"18\" font-size=\"14\">" << escape(opts.title) << "</text>\n";
  for (std::size_t k = 0; k < panels.size(); ++k) {
    const double x0 = w * static_cast<double>(k);
    os << "<g transform=\"translate(" << x0 << "," << top << ")\">\n"
       << "<rect x=\"4\" y=\"4\" width=\"" << w - 8 << "\" height=\"" << h - 8
       << "\" fill=\"none\" stroke=\"#999\"/>\n";
    if (k < titles.size()) os << "<text x=\"8\" y=\"-6\">" << escape(titles[k]) << "</text>\n";
    const Tensor& p = panels[k];
    for (Index i = 0; i < p.rows(); ++i) {
      if (!std::isfinite(p(i, 0)) || !std::isfinite(p(i, 1))) continue;
      const double px = 4 + (w - 8) * (p(i, 0) - rx.lo) / (rx.hi - rx.lo);
      const double py = h - 4 - (h - 8) * (p(i, 1) - ry.lo) / (ry.hi - ry.lo);
      os << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"1.2\" fill=\"" << kColors[k % 6]
         << "\" fill-opacity=\"0.5\"/>\n";
    }
    os << "</g>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string svg_lines(const std::vector<Series>& series, const PlotOptions& opts) {
  auto tx = [&](double v) { return opts.log_x ? std::log10(v) : v; };
  auto ty = [&](double v) { return opts.log_y ? std::log10(v) : v; };
  Range rx, ry;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      rx.add(tx(s.x[i]));
      ry.add(ty(s.y[i]));
    }
  }
  rx.pad();
  ry.pad();
  const double w = opts.width, h = opts.height, m = 48;
  std::ostringstream os;
  os.precision(5);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!opts.title.empty()) os << "<text x=\"8\" y=\"18\" font-size=\"14\">" << escape(opts.title) << "</text>\n";
  os << "<rect x=\"" << m << "\" y=\"" << m / 2 << "\" width=\"" << w - 1.5 * m << "\" height=\"" << h - 1.5 * m
     << "\" fill=\"none\" stroke=\"#999\"/>\n";
  os << "<text x=\"" << m << "\" y=\"" << h - 8 << "\">" << rx.lo << "</text><text x=\"" << w - m << "\" y=\""
     << h - 8 << "\" text-anchor=\"end\">" << rx.hi << "</text>\n";
  os << "<text x=\"4\" y=\"" << h - m << "\">" << ry.lo << "</text><text x=\"4\" y=\"" << m / 2 + 12 << "\">"
     << ry.hi << "</text>\n";
  auto px = [&](double v) { return m + (w - 1.5 * m) * (tx(v) - rx.lo) / (rx.hi - rx.lo); };
  auto py = [&](double v) { return h - m - (h - 1.5 * m) * (ty(v) - ry.lo) / (ry.hi - ry.lo); };
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    os << "<polyline fill=\"none\" stroke=\"" << kColors[k % 6] << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (std::isfinite(tx(s.x[i])) && std::isfinite(ty(s.y[i]))) os << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    }
    os << "\"/>\n<text x=\"" << w - m << "\" y=\"" << m / 2 + 16 * (k + 1) << "\" text-anchor=\"end\" fill=\""
       << kColors[k % 6] << "\">" << escape(s.label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace indm
