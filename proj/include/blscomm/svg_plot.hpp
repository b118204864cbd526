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

#pragma once

#include <string>
#include <utility>
#include <vector>

namespace blscomm::plot {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
  /// Optional symmetric error-bar half-widths in y, per point.
  std::vector<double> y_error;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<Series> series;
  /// Horizontal reference lines (e.g. a synchronous baseline).
  std::vector<std::pair<double, std::string>> h_lines;
};

/// Static SVG line plot; presentation only, derived from already
/// emitted CSV data.
void write_svg(const std::string& path, const PlotSpec& spec);

}  // namespace blscomm::plot
