/*
 * Copyright (c) 2026, the blscomm authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "blscomm/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "blscomm/error.hpp"

namespace blscomm::plot {

namespace {

constexpr double kWidth = 720;
constexpr double kHeight = 480;
constexpr double kMarginL = 80;
constexpr double kMarginR = 160;
constexpr double kMarginT = 48;
constexpr double kMarginB = 64;

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                         "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

struct Axis {
  double lo = 0;
  double hi = 1;
  bool log_scale = false;

  double to_unit(double v) const {
    const double a = log_scale ? std::log10(v) : v;
    const double l = log_scale ? std::log10(lo) : lo;
    const double h = log_scale ? std::log10(hi) : hi;
    if (h == l) return 0.5;
    return (a - l) / (h - l);
  }
};

std::string fmt(double v) {
  char buf[48];
  if (v != 0 && (std::fabs(v) >= 1e4 || std::fabs(v) < 1e-3)) {
    std::snprintf(buf, sizeof(buf), "%.2g", v);
  } else {
    std::snprintf(buf, sizeof(buf), "%g", v);
  }
  return buf;
}

std::vector<double> ticks_for(const Axis& axis) {
  std::vector<double> ticks;
  if (axis.log_scale) {
    const int lo = static_cast<int>(std::floor(std::log10(axis.lo)));
    const int hi = static_cast<int>(std::ceil(std::log10(axis.hi)));
    for (int e = lo; e <= hi; ++e) ticks.push_back(std::pow(10.0, e));
  } else {
    const double span = axis.hi - axis.lo;
    const double raw = span / 6.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw > 0 ? raw : 1)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
      if (raw <= m * mag) {
        step = m * mag;
        break;
      }
    }
    const double start = std::ceil(axis.lo / step) * step;
    for (double t = start; t <= axis.hi + step * 1e-9; t += step) ticks.push_back(t);
  }
  return ticks;
}

}  // namespace

void write_svg(const std::string& path, const PlotSpec& spec) {
  double x_lo = std::numeric_limits<double>::infinity();
  double x_hi = -x_lo;
  double y_lo = x_lo;
  double y_hi = -x_lo;
  for (const Series& s : spec.series) {
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      const auto [x, y] = s.points[i];
      if (spec.log_x && x <= 0) continue;
      if (spec.log_y && y <= 0) continue;
      x_lo = std::min(x_lo, x);
      x_hi = std::max(x_hi, x);
      const double err = i < s.y_error.size() ? s.y_error[i] : 0.0;
      y_lo = std::min(y_lo, spec.log_y ? y : y - err);
      y_hi = std::max(y_hi, y + err);
    }
  }
  for (const auto& [y, label] : spec.h_lines) {
    (void)label;
    if (spec.log_y && y <= 0) continue;
    y_lo = std::min(y_lo, y);
    y_hi = std::max(y_hi, y);
  }
  if (!std::isfinite(x_lo)) {
    x_lo = spec.log_x ? 1 : 0;
    x_hi = spec.log_x ? 10 : 1;
  }
  if (!std::isfinite(y_lo)) {
    y_lo = spec.log_y ? 1 : 0;
    y_hi = spec.log_y ? 10 : 1;
  }
  if (x_lo == x_hi) {
    x_lo = spec.log_x ? x_lo / 2 : x_lo - 1;
    x_hi = spec.log_x ? x_hi * 2 : x_hi + 1;
  }
  if (y_lo == y_hi) {
    y_lo = spec.log_y ? y_lo / 2 : y_lo - 1;
    y_hi = spec.log_y ? y_hi * 2 : y_hi + 1;
  }
  if (!spec.log_y && y_lo > 0 && y_lo < 0.3 * y_hi) y_lo = 0;

  const Axis ax{x_lo, x_hi, spec.log_x};
  const Axis ay{y_lo, y_hi, spec.log_y};
  const double plot_w = kWidth - kMarginL - kMarginR;
  const double plot_h = kHeight - kMarginT - kMarginB;
  auto px = [&](double x) { return kMarginL + ax.to_unit(x) * plot_w; };
  auto py = [&](double y) { return kHeight - kMarginB - ay.to_unit(y) * plot_h; };

  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\" "
      << "font-family=\"sans-serif\">" << spec.title << "</text>\n";

  // Axes box and ticks.
  out << "<rect x=\"" << kMarginL << "\" y=\"" << kMarginT << "\" width=\"" << plot_w
      << "\" height=\"" << plot_h << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double t : ticks_for(ax)) {
    if (t < x_lo || t > x_hi) continue;
    out << "<line x1=\"" << px(t) << "\" y1=\"" << kHeight - kMarginB << "\" x2=\"" << px(t)
        << "\" y2=\"" << kHeight - kMarginB + 6 << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << px(t) << "\" y=\"" << kHeight - kMarginB + 22
        << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">" << fmt(t)
        << "</text>\n";
  }
  for (double t : ticks_for(ay)) {
    if (t < y_lo || t > y_hi) continue;
    out << "<line x1=\"" << kMarginL - 6 << "\" y1=\"" << py(t) << "\" x2=\"" << kMarginL
        << "\" y2=\"" << py(t) << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << kMarginL - 10 << "\" y=\"" << py(t) + 4
        << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" << fmt(t)
        << "</text>\n";
  }
  out << "<text x=\"" << kMarginL + plot_w / 2 << "\" y=\"" << kHeight - 16
      << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">"
      << spec.x_label << "</text>\n";
  out << "<text x=\"20\" y=\"" << kMarginT + plot_h / 2
      << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\" "
      << "transform=\"rotate(-90 20 " << kMarginT + plot_h / 2 << ")\">" << spec.y_label
      << "</text>\n";

  for (const auto& [y, label] : spec.h_lines) {
    if (y < y_lo || y > y_hi) continue;
    out << "<line x1=\"" << kMarginL << "\" y1=\"" << py(y) << "\" x2=\"" << kMarginL + plot_w
        << "\" y2=\"" << py(y) << "\" stroke=\"#555\" stroke-dasharray=\"6 3\"/>\n";
    out << "<text x=\"" << kMarginL + plot_w - 4 << "\" y=\"" << py(y) - 4
        << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\" fill=\"#555\">"
        << label << "</text>\n";
  }

  int color = 0;
  double legend_y = kMarginT + 10;
  for (const Series& s : spec.series) {
    const char* c = kColors[color % 8];
    ++color;
    out << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : s.points) {
      if ((spec.log_x && x <= 0) || (spec.log_y && y <= 0)) continue;
      out << px(x) << "," << py(y) << " ";
    }
    out << "\"/>\n";
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      const auto [x, y] = s.points[i];
      if ((spec.log_x && x <= 0) || (spec.log_y && y <= 0)) continue;
      out << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"3\" fill=\"" << c
          << "\"/>\n";
      if (i < s.y_error.size() && s.y_error[i] > 0 && !spec.log_y) {
        out << "<line x1=\"" << px(x) << "\" y1=\"" << py(y - s.y_error[i]) << "\" x2=\""
            << px(x) << "\" y2=\"" << py(y + s.y_error[i]) << "\" stroke=\"" << c << "\"/>\n";
      }
    }
    out << "<line x1=\"" << kWidth - kMarginR + 8 << "\" y1=\"" << legend_y << "\" x2=\""
        << kWidth - kMarginR + 28 << "\" y2=\"" << legend_y << "\" stroke=\"" << c
        << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << kWidth - kMarginR + 34 << "\" y=\"" << legend_y + 4
        << "\" font-size=\"12\" font-family=\"sans-serif\">" << s.label << "</text>\n";
    legend_y += 18;
  }
  out << "</svg>\n";
}

}  // namespace blscomm::plot
