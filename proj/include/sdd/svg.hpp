#pragma once

#include <optional>
#include <string>
#include <vector>

namespace sdd::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
  double stroke_width = 1.5;
  bool markers = false;
  bool dashed = false;
  bool legend = true;
};

/// Scatter points coloured by `value` on a fixed blue-to-yellow ramp over [value_min, value_max].
struct Scatter {
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> value;
  double value_min = 0.0;
  double value_max = 1.0;
  std::string value_label;
  double radius = 1.2;
};

struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  std::optional<double> x_min, x_max, y_min, y_max;
  bool diagonal = false;  // dashed y = x reference
  std::vector<Series> series;
  std::optional<Scatter> scatter;
  int width = 720;
  int height = 480;
};

/// Self-contained SVG document. Output depends only on the chart contents.
std::string render(const Chart& chart);

/// Colour for the i-th of n series, cycling a fixed palette.
std::string palette(std::size_t i);

/// Hex colour for t in [0, 1] on the scatter ramp.
std::string ramp(double t);

}  // namespace sdd::svg
