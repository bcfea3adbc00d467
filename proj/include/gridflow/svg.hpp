#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "gridflow/io.hpp"

namespace gridflow {

// Minimal hand-rolled SVG output, enough for bar charts and loss curves.
// Nothing fancy, fixed 720x420 canvas with a margin for labels.

namespace svg_detail {

constexpr double kWidth = 720, kHeight = 420;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 70;

inline std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

inline std::string num(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52",
                                 "#8172b3", "#937860"};
  return colors[i % 6];
}

inline void header(std::ostringstream& out, const std::string& title) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << " "
      << kHeight << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"16\">"
      << esc(title) << "</text>\n";
}

inline void y_axis(std::ostringstream& out, double lo, double hi) {
  const double plot_h = kHeight - kTop - kBottom;
  for (int i = 0; i <= 4; ++i) {
    const double frac = i / 4.0;
    const double y = kTop + plot_h * (1.0 - frac);
    const double val = lo + (hi - lo) * frac;
    out << "<line x1=\"" << kLeft << "\" y1=\"" << num(y) << "\" x2=\""
        << kWidth - kRight << "\" y2=\"" << num(y)
        << "\" stroke=\"#dddddd\"/>\n"
        << "<text x=\"" << kLeft - 8 << "\" y=\"" << num(y + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << num(val) << "</text>\n";
  }
}

}  // namespace svg_detail

struct BarSeries {
  std::string label;
  double value = 0.0;
};

inline std::string bar_chart_svg(const std::string& title,
                                 const std::vector<BarSeries>& bars) {
  using namespace svg_detail;
  std::ostringstream out;
  header(out, title);
  double hi = 0.0, lo = 0.0;
  for (const BarSeries& b : bars) {
    hi = std::max(hi, b.value);
    lo = std::min(lo, b.value);
  }
  if (hi == lo) hi = lo + 1.0;
  y_axis(out, lo, hi);
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  const double slot = bars.empty() ? plot_w : plot_w / bars.size();
  const double bw = slot * 0.6;
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double frac = (bars[i].value - lo) / (hi - lo);
    const double h = plot_h * frac;
    const double x = kLeft + slot * i + (slot - bw) / 2;
    const double y = kTop + plot_h - h;
    out << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\""
        << num(bw) << "\" height=\"" << num(h) << "\" fill=\"" << palette(i)
        << "\"/>\n"
        << "<text x=\"" << num(x + bw / 2) << "\" y=\""
        << num(kHeight - kBottom + 16)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << esc(bars[i].label) << "</text>\n"
        << "<text x=\"" << num(x + bw / 2) << "\" y=\"" << num(y - 4)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"10\">"
        << num(bars[i].value) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

struct LineSeries {
  std::string label;
  std::vector<double> y;  // x is the 1-based index
};

inline std::string line_chart_svg(const std::string& title,
                                  const std::string& x_label,
                                  const std::vector<LineSeries>& series) {
  using namespace svg_detail;
  std::ostringstream out;
  header(out, title);
  double hi = -1e300, lo = 1e300;
  std::size_t max_n = 1;
  for (const LineSeries& s : series) {
    max_n = std::max(max_n, s.y.size());
    for (double v : s.y) {
      if (!std::isfinite(v)) continue;
      hi = std::max(hi, v);
      lo = std::min(lo, v);
    }
  }
  if (hi < lo) { lo = 0.0; hi = 1.0; }
  if (hi == lo) hi = lo + 1.0;
  y_axis(out, lo, hi);
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  for (std::size_t si = 0; si < series.size(); ++si) {
    const LineSeries& s = series[si];
    if (s.y.empty()) continue;
    out << "<polyline fill=\"none\" stroke=\"" << palette(si)
        << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.y.size(); ++i) {
      const double x =
          kLeft + plot_w * (max_n > 1 ? static_cast<double>(i) / (max_n - 1) : 0.5);
      const double y = kTop + plot_h * (1.0 - (s.y[i] - lo) / (hi - lo));
      out << num(x) << ',' << num(y) << ' ';
    }
    out << "\"/>\n"
        << "<text x=\"" << num(kLeft + 8) << "\" y=\"" << num(kTop + 14 + 14 * si)
        << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\""
        << palette(si) << "\">" << esc(s.label) << "</text>\n";
  }
  out << "<text x=\"" << num(kLeft + plot_w / 2) << "\" y=\""
      << num(kHeight - 20)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\">"
      << esc(x_label) << "</text>\n</svg>\n";
  return out.str();
}

}  // namespace gridflow
