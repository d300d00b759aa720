#pragma once

#include <string>
#include <vector>

namespace ilio::svg {

struct Series {
  std::vector<double> x;
  std::vector<double> y;
  std::string color;
  std::string label;
  bool line = false;  // polyline instead of markers
};

struct HRule {
  double y = 0.0;
  std::string label;
};

// Self-contained scatter/line chart with linear axes.
struct Plot {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  std::vector<HRule> rules;  // dotted horizontal lines
  int width = 640;
  int height = 480;

  std::string render() const;
};

// About five round tick positions covering [lo, hi].
std::vector<double> nice_ticks(double lo, double hi);

}  // namespace ilio::svg
