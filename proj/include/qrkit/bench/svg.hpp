#pragma once

// Minimal SVG line charts: axes with ticks, optional log scaling, legend.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace qrkit::bench {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<Series> series;
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
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

inline std::string fmt(double v, const char* spec = "%.2f") {
  char buf[48];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

inline std::string tick_label(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

/// Maps data values to one screen axis.
struct Axis {
  bool log = false;
  double lo = 0, hi = 1;

  double t(double v) const { return log ? std::log10(v) : v; }
  bool usable(double v) const { return std::isfinite(v) && (!log || v > 0); }

  void fit(const std::vector<Series>& all, bool use_x) {
    double a = std::numeric_limits<double>::infinity(), b = -a;
    for (const auto& s : all) {
      for (double v : use_x ? s.x : s.y) {
        if (!usable(v)) continue;
        a = std::min(a, t(v));
        b = std::max(b, t(v));
      }
    }
    if (!std::isfinite(a)) {
      a = 0;
      b = 1;
    }
    if (b - a < 1e-12) {
      const double pad = log ? 0.5 : std::max(1e-12, 0.5 * std::abs(a) + 0.5);
      a -= pad;
      b += pad;
    }
    if (log) {
      a = std::floor(a);
      b = std::ceil(b);
    }
    lo = a;
    hi = b;
  }

  /// Tick positions in transformed units.
  std::vector<double> ticks() const {
    std::vector<double> out;
    if (log) {
      const double step = std::max(1.0, std::ceil((hi - lo) / 8));
      for (double e = lo; e <= hi + 1e-9; e += step) out.push_back(e);
      return out;
    }
    const double raw = (hi - lo) / 5;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
      step = m * mag;
      if (step >= raw) break;
    }
    for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * step; v += step) out.push_back(v);
    return out;
  }

  std::string label(double tv) const { return tick_label(log ? std::pow(10.0, tv) : tv); }
};

inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                           "#9467bd", "#8c564b", "#e377c2", "#17becf"};

}  // namespace detail

/// Draws `chart` into the box (x0, y0, w, h) of an enclosing SVG.
inline void draw_chart(std::ostringstream& os, const Chart& chart, double x0, double y0, double w, double h) {
  using detail::fmt;
  const double left = x0 + 70, right = x0 + w - 150, top = y0 + 35, bottom = y0 + h - 50;
  detail::Axis ax{chart.log_x}, ay{chart.log_y};
  ax.fit(chart.series, true);
  ay.fit(chart.series, false);
  const auto sx = [&](double v) { return left + (ax.t(v) - ax.lo) / (ax.hi - ax.lo) * (right - left); };
  const auto sy = [&](double v) { return bottom - (ay.t(v) - ay.lo) / (ay.hi - ay.lo) * (bottom - top); };

  os << "<text x=\"" << fmt((left + right) / 2) << "\" y=\"" << fmt(y0 + 20)
     << "\" text-anchor=\"middle\" font-size=\"15\">" << detail::xml_escape(chart.title) << "</text>\n";
  os << "<rect x=\"" << fmt(left) << "\" y=\"" << fmt(top) << "\" width=\"" << fmt(right - left) << "\" height=\""
     << fmt(bottom - top) << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (double tv : ax.ticks()) {
    const double px = left + (tv - ax.lo) / (ax.hi - ax.lo) * (right - left);
    os << "<line x1=\"" << fmt(px) << "\" y1=\"" << fmt(top) << "\" x2=\"" << fmt(px) << "\" y2=\"" << fmt(bottom)
       << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << fmt(px) << "\" y=\"" << fmt(bottom + 16) << "\" text-anchor=\"middle\" font-size=\"11\">"
       << ax.label(tv) << "</text>\n";
  }
  for (double tv : ay.ticks()) {
    const double py = bottom - (tv - ay.lo) / (ay.hi - ay.lo) * (bottom - top);
    os << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(py) << "\" x2=\"" << fmt(right) << "\" y2=\"" << fmt(py)
       << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << fmt(left - 6) << "\" y=\"" << fmt(py + 4) << "\" text-anchor=\"end\" font-size=\"11\">"
       << ay.label(tv) << "</text>\n";
  }
  os << "<text x=\"" << fmt((left + right) / 2) << "\" y=\"" << fmt(bottom + 36)
     << "\" text-anchor=\"middle\" font-size=\"12\">" << detail::xml_escape(chart.x_label) << "</text>\n";
  os << "<text transform=\"translate(" << fmt(x0 + 16) << "," << fmt((top + bottom) / 2)
     << ") rotate(-90)\" text-anchor=\"middle\" font-size=\"12\">" << detail::xml_escape(chart.y_label) << "</text>\n";

  for (std::size_t k = 0; k < chart.series.size(); ++k) {
    const auto& s = chart.series[k];
    const char* color = detail::kPalette[k % std::size(detail::kPalette)];
    std::string pts;
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!ax.usable(s.x[i]) || !ay.usable(s.y[i])) continue;
      pts += fmt(sx(s.x[i])) + "," + fmt(sy(s.y[i])) + " ";
    }
    if (!pts.empty()) {
      os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"" << pts << "\"/>\n";
    }
    const double ly = top + 14 + 18 * static_cast<double>(k);
    os << "<line x1=\"" << fmt(right + 12) << "\" y1=\"" << fmt(ly - 4) << "\" x2=\"" << fmt(right + 32) << "\" y2=\""
       << fmt(ly - 4) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << fmt(right + 38) << "\" y=\"" << fmt(ly) << "\" font-size=\"11\">" << detail::xml_escape(s.name)
       << "</text>\n";
  }
}

/// Charts stacked vertically in one document.
inline std::string render_svg(const std::vector<Chart>& charts, double width = 760, double chart_height = 360) {
  std::ostringstream os;
  const double h = chart_height * static_cast<double>(std::max<std::size_t>(charts.size(), 1));
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << detail::fmt(width, "%.0f") << "\" height=\""
     << detail::fmt(h, "%.0f") << "\" font-family=\"sans-serif\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < charts.size(); ++i) {
    draw_chart(os, charts[i], 0, chart_height * static_cast<double>(i), width, chart_height);
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace qrkit::bench
