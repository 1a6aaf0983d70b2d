#include "sdd/svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace sdd::svg {

namespace {

constexpr double kLeft = 70.0;
constexpr double kRight = 170.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 56.0;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string tick_label(double v) {
  char buf[32];
  if (v != 0.0 && (std::abs(v) >= 1e5 || std::abs(v) < 1e-3)) {
    std::snprintf(buf, sizeof(buf), "%.0e", v);
  } else {
    std::snprintf(buf, sizeof(buf), "%g", v);
  }
  return buf;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  bool empty() const { return lo > hi; }
};

std::vector<double> linear_ticks(double lo, double hi) {
  const double span = hi - lo;
  const double raw = span / 6.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> ticks;
  for (double t = std::ceil(lo / step - 1e-9) * step; t <= hi + step * 1e-9; t += step)
    ticks.push_back(std::abs(t) < step * 1e-9 ? 0.0 : t);
  return ticks;
}

std::vector<double> log_ticks(double lo, double hi) {
  std::vector<double> ticks;
  for (int e = static_cast<int>(std::floor(std::log10(lo))); e <= static_cast<int>(std::ceil(std::log10(hi))); ++e) {
    const double t = std::pow(10.0, e);
    if (t >= lo * (1 - 1e-9) && t <= hi * (1 + 1e-9)) ticks.push_back(t);
  }
  return ticks;
}

}  // namespace

std::string palette(std::size_t i) {
  static const std::array<const char*, 10> colors{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return colors[i % colors.size()];
}

std::string ramp(double t) {
  static const std::array<std::array<double, 3>, 5> stops{{{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}}};
  t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0) * static_cast<double>(stops.size() - 1);
  const auto i = std::min(static_cast<std::size_t>(t), stops.size() - 2);
  const double f = t - static_cast<double>(i);
  char buf[8];
  int rgb[3];
  for (int c = 0; c < 3; ++c) rgb[c] = static_cast<int>(std::lround(stops[i][c] + f * (stops[i + 1][c] - stops[i][c])));
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
  return buf;
}

std::string render(const Chart& chart) {
  Range xr, yr;
  for (const auto& s : chart.series) {
    if (s.x.size() != s.y.size()) throw std::invalid_argument("series '" + s.label + "' has mismatched x/y lengths");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (chart.log_x && !(s.x[i] > 0.0)) continue;
      xr.add(s.x[i]);
      yr.add(s.y[i]);
    }
  }
  if (chart.scatter) {
    const auto& sc = *chart.scatter;
    if (sc.x.size() != sc.y.size() || sc.x.size() != sc.value.size())
      throw std::invalid_argument("scatter has mismatched lengths");
    for (std::size_t i = 0; i < sc.x.size(); ++i) {
      xr.add(sc.x[i]);
      yr.add(sc.y[i]);
    }
  }
  if (xr.empty()) xr = {chart.log_x ? 1.0 : 0.0, chart.log_x ? 10.0 : 1.0};
  if (yr.empty()) yr = {0.0, 1.0};
  double x0 = chart.x_min.value_or(xr.lo), x1 = chart.x_max.value_or(xr.hi);
  double y0 = chart.y_min.value_or(yr.lo), y1 = chart.y_max.value_or(yr.hi);
  if (chart.log_x) {
    if (x1 <= x0) x1 = x0 * 10.0;
    x0 = std::pow(10.0, std::floor(std::log10(x0)));
    x1 = std::pow(10.0, std::ceil(std::log10(x1)));
  } else if (x1 <= x0) {
    x0 -= 0.5;
    x1 += 0.5;
  }
  if (y1 <= y0) {
    y0 -= 0.5;
    y1 += 0.5;
  } else if (!chart.y_min && !chart.y_max) {
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
  }

  const double w = chart.width, h = chart.height;
  const double pw = w - kLeft - kRight, ph = h - kTop - kBottom;
  auto px = [&](double x) {
    const double t = chart.log_x ? (std::log10(x) - std::log10(x0)) / (std::log10(x1) - std::log10(x0)) : (x - x0) / (x1 - x0);
    return kLeft + t * pw;
  };
  auto py = [&](double y) { return kTop + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) + "\" viewBox=\"0 0 " +
         num(w) + " " + num(h) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + num(w / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" + escape(chart.title) + "</text>\n";
  out += "<defs><clipPath id=\"plot\"><rect x=\"" + num(kLeft) + "\" y=\"" + num(kTop) + "\" width=\"" + num(pw) +
         "\" height=\"" + num(ph) + "\"/></clipPath></defs>\n";

  const auto xt = chart.log_x ? log_ticks(x0, x1) : linear_ticks(x0, x1);
  for (double t : xt) {
    const double x = px(t);
    out += "<line x1=\"" + num(x) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(x) + "\" y2=\"" + num(kTop + ph) +
           "\" stroke=\"#e0e0e0\"/>\n";
    out += "<text x=\"" + num(x) + "\" y=\"" + num(kTop + ph + 16) + "\" text-anchor=\"middle\">" + tick_label(t) + "</text>\n";
  }
  for (double t : linear_ticks(y0, y1)) {
    const double y = py(t);
    out += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(y) + "\" x2=\"" + num(kLeft + pw) + "\" y2=\"" + num(y) +
           "\" stroke=\"#e0e0e0\"/>\n";
    out += "<text x=\"" + num(kLeft - 6) + "\" y=\"" + num(y + 4) + "\" text-anchor=\"end\">" + tick_label(t) + "</text>\n";
  }
  out += "<rect x=\"" + num(kLeft) + "\" y=\"" + num(kTop) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
  out += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"" + num(h - 14) + "\" text-anchor=\"middle\">" +
         escape(chart.x_label) + "</text>\n";
  out += "<text transform=\"translate(18," + num(kTop + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
         escape(chart.y_label) + "</text>\n";

  out += "<g clip-path=\"url(#plot)\">\n";
  if (chart.diagonal) {
    const double lo = std::max(x0, y0), hi = std::min(x1, y1);
    if (hi > lo)
      out += "<line x1=\"" + num(px(lo)) + "\" y1=\"" + num(py(lo)) + "\" x2=\"" + num(px(hi)) + "\" y2=\"" + num(py(hi)) +
             "\" stroke=\"#555555\" stroke-dasharray=\"4 4\"/>\n";
  }
  if (chart.scatter) {
    const auto& sc = *chart.scatter;
    const double span = sc.value_max > sc.value_min ? sc.value_max - sc.value_min : 1.0;
    for (std::size_t i = 0; i < sc.x.size(); ++i) {
      if (!std::isfinite(sc.x[i]) || !std::isfinite(sc.y[i])) continue;
      out += "<circle cx=\"" + num(px(sc.x[i])) + "\" cy=\"" + num(py(sc.y[i])) + "\" r=\"" + num(sc.radius) +
             "\" fill=\"" + ramp((sc.value[i] - sc.value_min) / span) + "\"/>\n";
    }
  }
  for (const auto& s : chart.series) {
    std::string pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if ((chart.log_x && !(s.x[i] > 0.0)) || !std::isfinite(s.y[i])) continue;
      if (!pts.empty()) pts += ' ';
      pts += num(px(s.x[i])) + "," + num(py(s.y[i]));
    }
    if (pts.empty()) continue;
    out += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"" + num(s.stroke_width) + "\"" +
           (s.dashed ? " stroke-dasharray=\"6 3\"" : "") + " points=\"" + pts + "\"/>\n";
    if (s.markers)
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if ((chart.log_x && !(s.x[i] > 0.0)) || !std::isfinite(s.y[i])) continue;
        out += "<circle cx=\"" + num(px(s.x[i])) + "\" cy=\"" + num(py(s.y[i])) + "\" r=\"3\" fill=\"" + s.color + "\"/>\n";
      }
  }
  out += "</g>\n";

  double ly = kTop + 8;
  for (const auto& s : chart.series) {
    if (!s.legend || s.label.empty()) continue;
    const double lx = kLeft + pw + 12;
    out += "<line x1=\"" + num(lx) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(lx + 22) + "\" y2=\"" + num(ly) +
           "\" stroke=\"" + s.color + "\" stroke-width=\"" + num(std::max(2.0, s.stroke_width)) + "\"" +
           (s.dashed ? " stroke-dasharray=\"6 3\"" : "") + "/>\n";
    out += "<text x=\"" + num(lx + 28) + "\" y=\"" + num(ly + 4) + "\">" + escape(s.label) + "</text>\n";
    ly += 18;
  }
  if (chart.scatter) {
    const auto& sc = *chart.scatter;
    const double lx = kLeft + pw + 20, bar_h = ph * 0.6;
    for (int k = 0; k < 50; ++k) {
      const double t0 = k / 50.0;
      out += "<rect x=\"" + num(lx) + "\" y=\"" + num(kTop + bar_h * (1.0 - t0 - 0.02)) + "\" width=\"14\" height=\"" +
             num(bar_h / 50.0 + 0.5) + "\" fill=\"" + ramp(t0) + "\"/>\n";
    }
    out += "<text x=\"" + num(lx + 20) + "\" y=\"" + num(kTop + 4) + "\">" + tick_label(sc.value_max) + "</text>\n";
    out += "<text x=\"" + num(lx + 20) + "\" y=\"" + num(kTop + bar_h) + "\">" + tick_label(sc.value_min) + "</text>\n";
    out += "<text x=\"" + num(lx) + "\" y=\"" + num(kTop + bar_h + 20) + "\">" + escape(sc.value_label) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace sdd::svg
