/*
 * Copyright 2026 The neoseize Authors
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

// Deterministic SVG rendering of ROC curves, probability heatmaps and
// architecture sweeps.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace neoseize {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

enum class PlotKind { Roc, Heatmap, Sweep };

namespace svg_detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string escape(const std::string& s) {
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

/// Blue (0) through white (0.5) to red (1).
inline std::string ramp(double v) {
  v = std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0);
  auto lerp = [](double a, double b, double t) {
    return static_cast<int>(std::lround(a + (b - a) * t));
  };
  int r, g, b;
  if (v <= 0.5) {
    const double t = v / 0.5;
    r = lerp(33, 247, t);
    g = lerp(102, 247, t);
    b = lerp(172, 247, t);
  } else {
    const double t = (v - 0.5) / 0.5;
    r = lerp(247, 178, t);
    g = lerp(247, 24, t);
    b = lerp(247, 43, t);
  }
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

inline const char* palette(std::size_t i) {
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
  return kColors[i % 8];
}

struct Frame {
  double left = 70, top = 40, width = 520, height = 360;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  double px(double x) const { return left + (x - x0) / (x1 - x0) * width; }
  double py(double y) const { return top + height - (y - y0) / (y1 - y0) * height; }
};

inline std::string text(double x, double y, const std::string& s, const char* anchor = "middle",
                        const char* extra = "") {
  return "<text x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" text-anchor=\"" + anchor +
         "\" font-family=\"sans-serif\" font-size=\"12\"" + extra + ">" + escape(s) +
         "</text>\n";
}

inline std::string axes(const Frame& f, const std::string& xlabel, const std::string& ylabel,
                        int ticks = 5) {
  std::string s;
  s += "<rect x=\"" + fmt(f.left) + "\" y=\"" + fmt(f.top) + "\" width=\"" + fmt(f.width) +
       "\" height=\"" + fmt(f.height) + "\" fill=\"none\" stroke=\"#000\"/>\n";
  for (int i = 0; i <= ticks; ++i) {
    const double t = static_cast<double>(i) / ticks;
    const double xv = f.x0 + (f.x1 - f.x0) * t, yv = f.y0 + (f.y1 - f.y0) * t;
    const double X = f.px(xv), Y = f.py(yv);
    s += "<line x1=\"" + fmt(X) + "\" y1=\"" + fmt(f.top + f.height) + "\" x2=\"" + fmt(X) +
         "\" y2=\"" + fmt(f.top + f.height + 5) + "\" stroke=\"#000\"/>\n";
    s += text(X, f.top + f.height + 18, fmt(xv));
    s += "<line x1=\"" + fmt(f.left - 5) + "\" y1=\"" + fmt(Y) + "\" x2=\"" + fmt(f.left) +
         "\" y2=\"" + fmt(Y) + "\" stroke=\"#000\"/>\n";
    s += text(f.left - 8, Y + 4, fmt(yv), "end");
  }
  s += text(f.left + f.width / 2, f.top + f.height + 36, xlabel);
  const double cy = f.top + f.height / 2;
  s += "<text x=\"18\" y=\"" + fmt(cy) + "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       "font-size=\"12\" transform=\"rotate(-90 18 " + fmt(cy) + ")\">" + escape(ylabel) +
       "</text>\n";
  return s;
}

inline std::string polyline(const Frame& f, const Series& s, const char* color) {
  std::string pts;
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    pts += (i ? " " : "") + fmt(f.px(s.x[i])) + "," + fmt(f.py(s.y[i]));
  }
  return "<polyline fill=\"none\" stroke=\"" + std::string(color) +
         "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
}

inline std::string legend(const Frame& f, const std::vector<Series>& series) {
  std::string s;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double y = f.top + 14 + 16 * static_cast<double>(i);
    const double x = f.left + f.width + 12;
    s += "<line x1=\"" + fmt(x) + "\" y1=\"" + fmt(y - 4) + "\" x2=\"" + fmt(x + 18) + "\" y2=\"" +
         fmt(y - 4) + "\" stroke=\"" + palette(i) + "\" stroke-width=\"2\"/>\n";
    s += text(x + 24, y, series[i].label, "start");
  }
  return s;
}

inline void check(const std::vector<Series>& series) {
  if (series.empty()) throw std::invalid_argument("render_svg: empty series");
  for (const auto& s : series) {
    if (s.x.empty() || s.x.size() != s.y.size()) {
      throw std::invalid_argument("render_svg: series '" + s.label +
                                  "' is empty or has mismatched x/y");
    }
  }
}

inline std::pair<double, double> span(const std::vector<Series>& series, bool use_x) {
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& s : series) {
    for (double v : use_x ? s.x : s.y) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) return {0.0, 1.0};
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  return {lo, hi};
}

}  // namespace svg_detail

/// Roc: x = 1 - specificity, y = sensitivity, one curve per series.
/// Heatmap: one row per series (y values in [0,1] over x = time), with a
/// colour ramp legend. Sweep: y = AUC against x, one line per series.
inline std::string render_svg(const std::vector<Series>& series, PlotKind kind,
                              const std::string& title = "") {
  using namespace svg_detail;
  check(series);
  const double W = 760, H = 460;
  std::string body;
  Frame f;
  switch (kind) {
    case PlotKind::Roc: {
      body += axes(f, "1 - specificity", "sensitivity");
      body += "<line x1=\"" + fmt(f.px(0)) + "\" y1=\"" + fmt(f.py(0)) + "\" x2=\"" + fmt(f.px(1)) +
              "\" y2=\"" + fmt(f.py(1)) + "\" stroke=\"#999\" stroke-dasharray=\"4 4\"/>\n";
      for (std::size_t i = 0; i < series.size(); ++i) body += polyline(f, series[i], palette(i));
      body += legend(f, series);
      break;
    }
    case PlotKind::Sweep: {
      std::tie(f.x0, f.x1) = span(series, true);
      std::tie(f.y0, f.y1) = span(series, false);
      const double pad = 0.05 * (f.y1 - f.y0);
      f.y0 -= pad;
      f.y1 += pad;
      body += axes(f, "n_blocks", "AUC (%)");
      for (std::size_t i = 0; i < series.size(); ++i) {
        body += polyline(f, series[i], palette(i));
        for (std::size_t k = 0; k < series[i].x.size(); ++k) {
          body += "<circle cx=\"" + fmt(f.px(series[i].x[k])) + "\" cy=\"" +
                  fmt(f.py(series[i].y[k])) + "\" r=\"3\" fill=\"" + palette(i) + "\"/>\n";
        }
      }
      body += legend(f, series);
      break;
    }
    case PlotKind::Heatmap: {
      std::tie(f.x0, f.x1) = span(series, true);
      const auto rows = static_cast<double>(series.size());
      const double row_h = f.height / rows;
      for (std::size_t r = 0; r < series.size(); ++r) {
        const auto& s = series[r];
        const double step = s.x.size() > 1 ? (s.x.back() - s.x.front()) / static_cast<double>(s.x.size() - 1) : 1.0;
        const double y = f.top + row_h * static_cast<double>(r);
        // merge runs of equal colour into one rectangle
        for (std::size_t i = 0; i < s.x.size();) {
          const std::string color = ramp(s.y[i]);
          std::size_t j = i + 1;
          while (j < s.x.size() && ramp(s.y[j]) == color) ++j;
          const double xa = f.px(s.x[i] - step / 2), xb = f.px(s.x[j - 1] + step / 2);
          const double xl = std::max(f.left, xa), xr = std::min(f.left + f.width, xb);
          body += "<rect x=\"" + fmt(xl) + "\" y=\"" + fmt(y) + "\" width=\"" + fmt(xr - xl) +
                  "\" height=\"" + fmt(row_h) + "\" fill=\"" + color + "\"/>\n";
          i = j;
        }
        body += text(f.left - 6, y + row_h / 2 + 4, s.label, "end");
      }
      body += "<rect x=\"" + fmt(f.left) + "\" y=\"" + fmt(f.top) + "\" width=\"" + fmt(f.width) +
              "\" height=\"" + fmt(f.height) + "\" fill=\"none\" stroke=\"#000\"/>\n";
      for (int i = 0; i <= 5; ++i) {
        const double xv = f.x0 + (f.x1 - f.x0) * i / 5.0;
        body += text(f.px(xv), f.top + f.height + 18, fmt(xv));
      }
      body += text(f.left + f.width / 2, f.top + f.height + 36, "time (s)");
      // colour ramp over [0, 1]
      const double rx = f.left + f.width + 30, rw = 16;
      for (int i = 0; i < 50; ++i) {
        const double v0 = i / 50.0;
        body += "<rect x=\"" + fmt(rx) + "\" y=\"" + fmt(f.top + f.height * (1 - (i + 1) / 50.0)) +
                "\" width=\"" + fmt(rw) + "\" height=\"" + fmt(f.height / 50 + 0.5) +
                "\" fill=\"" + ramp(v0 + 0.01) + "\"/>\n";
      }
      body += text(rx + rw + 4, f.top + 10, "1", "start");
      body += text(rx + rw + 4, f.top + f.height, "0", "start");
      body += text(rx + rw / 2, f.top - 8, "p(seizure)");
      break;
    }
  }
  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + svg_detail::fmt(W) + "\" height=\"" +
         svg_detail::fmt(H) + "\" viewBox=\"0 0 " + svg_detail::fmt(W) + " " + svg_detail::fmt(H) +
         "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n";
  if (!title.empty()) out += svg_detail::text(W / 2, 22, title, "middle", " font-weight=\"bold\"");
  out += body;
  out += "</svg>\n";
  return out;
}

}  // namespace neoseize
