#include "ilioseg/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace ilio::svg {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", std::fabs(v) < 1e-12 ? 0.0 : v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::vector<double> nice_ticks(double lo, double hi) {
  if (!(hi > lo)) return {lo};
  const double raw = (hi - lo) / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> t;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * step; v += step) t.push_back(v);
  return t;
}

std::string Plot::render() const {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (double v : s.x) x0 = std::min(x0, v), x1 = std::max(x1, v);
    for (double v : s.y) y0 = std::min(y0, v), y1 = std::max(y1, v);
  }
  for (const auto& r : rules) y0 = std::min(y0, r.y), y1 = std::max(y1, r.y);
  if (!std::isfinite(x0)) x0 = 0, x1 = 1;
  if (!std::isfinite(y0)) y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 1, x1 += 1;
  if (y1 == y0) y0 -= 1, y1 += 1;
  const double padx = 0.05 * (x1 - x0), pady = 0.05 * (y1 - y0);
  x0 -= padx, x1 += padx, y0 -= pady, y1 += pady;

  const double left = 70, right = width - 20.0, top = 40, bottom = height - 50.0;
  auto px = [&](double v) { return left + (v - x0) / (x1 - x0) * (right - left); };
  auto py = [&](double v) { return bottom - (v - y0) / (y1 - y0) * (bottom - top); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" viewBox=\"0 0 " << width << " " << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  o << "<text x=\"" << num(width / 2.0) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
    << escape(title) << "</text>\n";
  o << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(right - left)
    << "\" height=\"" << num(bottom - top) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double t : nice_ticks(x0, x1)) {
    o << "<line x1=\"" << num(px(t)) << "\" y1=\"" << num(bottom) << "\" x2=\"" << num(px(t))
      << "\" y2=\"" << num(bottom + 5) << "\" stroke=\"black\"/>"
      << "<text x=\"" << num(px(t)) << "\" y=\"" << num(bottom + 18)
      << "\" text-anchor=\"middle\">" << tick_label(t) << "</text>\n";
  }
  for (double t : nice_ticks(y0, y1)) {
    o << "<line x1=\"" << num(left - 5) << "\" y1=\"" << num(py(t)) << "\" x2=\"" << num(left)
      << "\" y2=\"" << num(py(t)) << "\" stroke=\"black\"/>"
      << "<text x=\"" << num(left - 8) << "\" y=\"" << num(py(t) + 4)
      << "\" text-anchor=\"end\">" << tick_label(t) << "</text>\n";
  }
  o << "<text x=\"" << num((left + right) / 2) << "\" y=\"" << num(height - 12.0)
    << "\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n";
  o << "<text x=\"16\" y=\"" << num((top + bottom) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << num((top + bottom) / 2) << ")\">" << escape(y_label) << "</text>\n";

  for (const auto& s : series) {
    const std::string color = s.color.empty() ? "black" : s.color;
    if (s.line) {
      o << "<polyline class=\"curve\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        o << (i ? " " : "") << num(px(s.x[i])) << "," << num(py(s.y[i]));
      }
      o << "\"/>\n";
    } else {
      o << "<g class=\"points\" fill=\"" << color << "\" fill-opacity=\"0.5\">\n";
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        o << "<circle cx=\"" << num(px(s.x[i])) << "\" cy=\"" << num(py(s.y[i])) << "\" r=\"2.5\"/>\n";
      }
      o << "</g>\n";
    }
  }
  for (const auto& r : rules) {
    o << "<line class=\"rule\" x1=\"" << num(left) << "\" y1=\"" << num(py(r.y)) << "\" x2=\""
      << num(right) << "\" y2=\"" << num(py(r.y))
      << "\" stroke=\"black\" stroke-dasharray=\"2,3\"/>"
      << "<text x=\"" << num(right - 4) << "\" y=\"" << num(py(r.y) - 4)
      << "\" text-anchor=\"end\">" << escape(r.label) << "</text>\n";
  }
  double ly = top + 16;
  for (const auto& s : series) {
    if (s.label.empty()) continue;
    const std::string color = s.color.empty() ? "black" : s.color;
    o << "<rect x=\"" << num(left + 10) << "\" y=\"" << num(ly - 9) << "\" width=\"10\" height=\"10\" fill=\""
      << color << "\"/><text x=\"" << num(left + 26) << "\" y=\"" << num(ly) << "\">"
      << escape(s.label) << "</text>\n";
    ly += 16;
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace ilio::svg
