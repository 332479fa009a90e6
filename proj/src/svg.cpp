#include "vergescope/svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>

namespace vergescope::svg {

namespace {

constexpr std::array<const char*, 10> kPalette{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                               "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string f2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v, double step) {
  int decimals = 0;
  while (decimals < 6 && std::abs(step * std::pow(10.0, decimals) - std::round(step * std::pow(10.0, decimals))) > 1e-9)
    ++decimals;
  if (std::abs(v) < step * 1e-9) v = 0.0;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::pair<double, double> data_range(const Chart& c, bool x_axis) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : c.series)
    for (const auto& p : s.points) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) continue;
      const double v = x_axis ? p.x : p.y;
      const double e = (!x_axis && s.error_bars && std::isfinite(p.err)) ? std::abs(p.err) : 0.0;
      lo = std::min(lo, v - e);
      hi = std::max(hi, v + e);
    }
  if (!std::isfinite(lo)) return {0.0, 1.0};
  if (hi - lo < 1e-12) {
    const double pad = std::max(std::abs(lo) * 0.1, 0.5);
    return {lo - pad, hi + pad};
  }
  return {lo, hi};
}

}  // namespace

std::vector<double> nice_ticks(double lo, double hi, int target) {
  if (!(hi > lo)) return {lo};
  const double raw = (hi - lo) / std::max(target, 1);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0})
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  std::vector<double> out;
  for (double k = std::ceil(lo / step - 1e-9); k * step <= hi + step * 1e-9; k += 1.0) out.push_back(k * step);
  return out;
}

std::string escape(const std::string& text) {
  std::string out;
  for (char ch : text) switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  return out;
}

std::string render(const Chart& c) {
  const double left = 70, right = c.legend ? 150 : 20, top = 40, bottom = 55;
  const double pw = c.width - left - right, ph = c.height - top - bottom;

  auto [x0, x1] = c.x_range ? *c.x_range : data_range(c, true);
  auto [y0, y1] = c.y_range ? *c.y_range : data_range(c, false);
  // snap automatic ranges outward to whole tick steps
  auto snap = [](double& lo, double& hi) {
    const auto t = nice_ticks(lo, hi);
    if (t.size() < 2) return;
    const double step = t[1] - t[0];
    lo = std::floor(lo / step + 1e-9) * step;
    hi = std::ceil(hi / step - 1e-9) * step;
  };
  if (!c.x_range) snap(x0, x1);
  if (!c.y_range) snap(y0, y1);
  auto sx = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return top + ph - (y - y0) / (y1 - y0) * ph; };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(c.width) + "\" height=\"" +
       std::to_string(c.height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + f2(left + pw / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" + escape(c.title) +
       "</text>\n";

  // grid and ticks
  const auto yticks = nice_ticks(y0, y1);
  const auto xticks = nice_ticks(x0, x1);
  const double ystep = yticks.size() > 1 ? yticks[1] - yticks[0] : 1.0;
  const double xstep = xticks.size() > 1 ? xticks[1] - xticks[0] : 1.0;
  for (double y : yticks) {
    s += "<line x1=\"" + f2(left) + "\" y1=\"" + f2(sy(y)) + "\" x2=\"" + f2(left + pw) + "\" y2=\"" + f2(sy(y)) +
         "\" stroke=\"#e0e0e0\"/>\n";
    s += "<text x=\"" + f2(left - 6) + "\" y=\"" + f2(sy(y) + 4) + "\" text-anchor=\"end\">" + tick_label(y, ystep) +
         "</text>\n";
  }
  for (double x : xticks) {
    s += "<line x1=\"" + f2(sx(x)) + "\" y1=\"" + f2(top + ph) + "\" x2=\"" + f2(sx(x)) + "\" y2=\"" +
         f2(top + ph + 5) + "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + f2(sx(x)) + "\" y=\"" + f2(top + ph + 18) + "\" text-anchor=\"middle\">" +
         tick_label(x, xstep) + "</text>\n";
  }
  s += "<rect x=\"" + f2(left) + "\" y=\"" + f2(top) + "\" width=\"" + f2(pw) + "\" height=\"" + f2(ph) +
       "\" fill=\"none\" stroke=\"black\"/>\n";
  s += "<text x=\"" + f2(left + pw / 2) + "\" y=\"" + f2(c.height - 12.0) + "\" text-anchor=\"middle\">" +
       escape(c.x_label) + "</text>\n";
  s += "<text transform=\"translate(18," + f2(top + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
       escape(c.y_label) + "</text>\n";

  for (std::size_t i = 0; i < c.series.size(); ++i) {
    const auto& ser = c.series[i];
    const std::string color = kPalette[i % kPalette.size()];
    std::vector<Point> pts;
    for (const auto& p : ser.points)
      if (std::isfinite(p.x) && std::isfinite(p.y)) pts.push_back(p);
    s += "<g stroke=\"" + color + "\" fill=\"" + color + "\">\n";
    if (ser.lines && pts.size() > 1) {
      s += "<polyline fill=\"none\" stroke-width=\"1.5\"";
      if (ser.dashed) s += " stroke-dasharray=\"5,3\"";
      s += " points=\"";
      for (std::size_t k = 0; k < pts.size(); ++k) s += (k ? " " : "") + f2(sx(pts[k].x)) + "," + f2(sy(pts[k].y));
      s += "\"/>\n";
    }
    for (const auto& p : pts) {
      if (ser.error_bars && std::isfinite(p.err) && p.err > 0) {
        const double cx = sx(p.x);
        s += "<line x1=\"" + f2(cx) + "\" y1=\"" + f2(sy(p.y - p.err)) + "\" x2=\"" + f2(cx) + "\" y2=\"" +
             f2(sy(p.y + p.err)) + "\"/>\n";
        for (double e : {p.y - p.err, p.y + p.err})
          s += "<line x1=\"" + f2(cx - 4) + "\" y1=\"" + f2(sy(e)) + "\" x2=\"" + f2(cx + 4) + "\" y2=\"" + f2(sy(e)) +
               "\"/>\n";
      }
      if (ser.markers) s += "<circle cx=\"" + f2(sx(p.x)) + "\" cy=\"" + f2(sy(p.y)) + "\" r=\"3\"/>\n";
    }
    s += "</g>\n";
    if (c.legend && !ser.label.empty()) {
      const double ly = top + 10 + 18.0 * static_cast<double>(i);
      const double lx = left + pw + 12;
      s += "<line x1=\"" + f2(lx) + "\" y1=\"" + f2(ly) + "\" x2=\"" + f2(lx + 18) + "\" y2=\"" + f2(ly) +
           "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
      s += "<text x=\"" + f2(lx + 24) + "\" y=\"" + f2(ly + 4) + "\">" + escape(ser.label) + "</text>\n";
    }
  }
  s += "</svg>\n";
  return s;
}

}  // namespace vergescope::svg
