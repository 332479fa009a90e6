#pragma once

// Minimal SVG line/scatter charts with optional error bars.

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace vergescope::svg {

struct Point {
  double x = 0.0;
  double y = 0.0;
  double err = 0.0;  // half-height of the error bar
};

struct Series {
  std::string label;
  std::vector<Point> points;
  bool lines = true;
  bool markers = true;
  bool error_bars = false;
  bool dashed = false;
};

struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  std::optional<std::pair<double, double>> x_range;
  std::optional<std::pair<double, double>> y_range;
  int width = 640;
  int height = 420;
  bool legend = true;
};

/// Round-number ticks covering [lo, hi].
std::vector<double> nice_ticks(double lo, double hi, int target = 6);

std::string escape(const std::string& text);

/// Non-finite points are skipped. Output depends only on the chart.
std::string render(const Chart& chart);

}  // namespace vergescope::svg
