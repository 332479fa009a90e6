#include "vergescope/report.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "vergescope/error.hpp"
#include "vergescope/svg.hpp"

namespace vergescope::report {

namespace {

using io::Json;

double value(const Json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_number()) return std::nan("");
  return it->get<double>();
}

struct Acc {
  double sum = 0.0, sum2 = 0.0;
  int n = 0;
  void add(double v) {
    if (!std::isfinite(v)) return;
    sum += v;
    sum2 += v * v;
    ++n;
  }
  double mean() const { return n ? sum / n : std::nan(""); }
  double se() const {
    if (n < 2) return 0.0;
    const double m = mean();
    const double var = std::max(0.0, (sum2 - n * m * m) / (n - 1));
    return std::sqrt(var / n);
  }
};

const char* kEnvs[] = {"Real", "AR", "VR"};

// series per environment of across-participant means at each end depth
std::vector<svg::Series> env_means(const Json& cells, const char* key) {
  std::vector<svg::Series> out;
  for (const char* env : kEnvs) {
    std::map<double, Acc> by_d;
    for (const auto& c : cells)
      if (c.at("environment") == env) by_d[1.0 / value(c, "end_depth_m")].add(value(c, key));
    svg::Series s;
    s.label = env;
    s.error_bars = true;
    for (const auto& [d, a] : by_d)
      if (a.n) s.points.push_back({d, a.mean(), a.se()});
    if (!s.points.empty()) out.push_back(std::move(s));
  }
  return out;
}

std::string fmt(const char* spec, double v) {
  if (!std::isfinite(v)) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string pad(std::string s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}

}  // namespace

std::vector<Figure> figures(const Json& a) {
  std::vector<Figure> out;
  const Json empty = Json::array();
  const Json& cells = a.contains("cells") ? a.at("cells") : empty;

  if (!cells.empty()) {
    svg::Chart c;
    c.title = "Mean GVA by end depth";
    c.x_label = "End depth (D)";
    c.y_label = "GVA (deg)";
    c.series = env_means(cells, "gva_deg");
    out.push_back({"gva_by_depth.svg", svg::render(c)});
  }

  if (!cells.empty() && a.contains("models")) {
    svg::Chart c;
    c.title = "Per-participant GVA and fitted lines";
    c.x_label = "End depth (D)";
    c.y_label = "GVA (deg)";
    c.legend = false;
    for (const auto& m : a.at("models")) {
      if (!m.at("environment").is_null()) continue;
      const std::string id = m.at("participant_id").get<std::string>();
      const double ia = value(m, "intercept_deg"), b = value(m, "slope_deg_per_diopter");
      svg::Series pts;
      pts.label = id;
      pts.lines = false;
      std::map<double, Acc> by_d;
      for (const auto& cell : cells)
        if (cell.at("participant_id") == id) by_d[1.0 / value(cell, "end_depth_m")].add(value(cell, "gva_deg"));
      for (const auto& [d, acc] : by_d) pts.points.push_back({d, acc.mean()});
      if (pts.points.empty()) continue;
      svg::Series line;
      line.markers = false;
      line.points = {{pts.points.front().x, ia + b * pts.points.front().x},
                     {pts.points.back().x, ia + b * pts.points.back().x}};
      c.series.push_back(std::move(pts));
      c.series.push_back(std::move(line));
    }
    if (!c.series.empty()) out.push_back({"participant_lines.svg", svg::render(c)});
  }

  if (!cells.empty() && a.value("options", Json::object()).value("normalized", false)) {
    svg::Chart c;
    c.title = "Mean normalized GVA by end depth";
    c.x_label = "End depth (D)";
    c.y_label = "Normalized GVA (deg)";
    c.series = env_means(cells, "norm_gva_deg");
    if (!c.series.empty()) out.push_back({"normalized_by_depth.svg", svg::render(c)});
  }

  if (a.contains("pair_cells")) {
    std::map<double, std::map<double, Acc>> by_end;
    for (const auto& p : a.at("pair_cells"))
      by_end[value(p, "end_depth_m")][1.0 / value(p, "start_depth_m")].add(value(p, "norm_gva_deg"));
    svg::Chart c;
    c.title = "Normalized GVA by switching depth";
    c.x_label = "Start depth (D)";
    c.y_label = "Normalized GVA (deg)";
    for (auto it = by_end.rbegin(); it != by_end.rend(); ++it) {
      svg::Series s;
      s.label = "end " + fmt("%g", it->first) + " m";
      s.error_bars = true;
      for (const auto& [d, acc] : it->second) s.points.push_back({d, acc.mean(), acc.se()});
      c.series.push_back(std::move(s));
    }
    if (!c.series.empty()) out.push_back({"stability.svg", svg::render(c)});
  }

  if (a.contains("log_ratios")) {
    svg::Chart c;
    c.title = "Log ratio XR / Real";
    c.x_label = "End depth (D)";
    c.y_label = "ln(XR / Real)";
    for (const char* env : {"AR", "VR"})
      for (const char* measure : {"GVA", "subjective"}) {
        std::map<double, Acc> by_d;
        for (const auto& r : a.at("log_ratios"))
          if (r.at("environment") == env && r.at("measure") == measure)
            by_d[1.0 / value(r, "end_depth_m")].add(value(r, "log_ratio"));
        svg::Series s;
        s.label = std::string(env) + " " + measure;
        s.error_bars = true;
        s.dashed = std::string(measure) == "GVA";
        for (const auto& [d, acc] : by_d) s.points.push_back({d, acc.mean(), acc.se()});
        if (!s.points.empty()) c.series.push_back(std::move(s));
      }
    if (!c.series.empty()) out.push_back({"log_ratio.svg", svg::render(c)});
  }
  return out;
}

std::string text_tables(const Json& a) {
  std::ostringstream o;
  if (a.contains("trials"))
    o << "trials: " << a.at("trials").value("retained", 0) << " retained of " << a.at("trials").value("total", 0)
      << "\n";
  if (a.contains("participants")) {
    const auto& p = a.at("participants");
    o << "participants: " << p.value("count", 0) << "  a = " << fmt("%.2f", value(p, "intercept_mean_deg"))
      << " (sd " << fmt("%.2f", value(p, "intercept_sd_deg")) << ")  b = " << fmt("%.2f", value(p, "slope_mean"))
      << " (sd " << fmt("%.2f", value(p, "slope_sd")) << ")\n";
  }
  for (const auto& t : a.value("tables", Json::array())) {
    o << "\n== " << t.at("name").get<std::string>() << " (n = " << t.at("n").get<std::size_t>() << ")\n";
    o << pad("", 5) << pad("formula", 52) << pad("R2", 9) << pad("Res.Df", 8) << pad("Df", 5) << pad("F", 8)
      << "p\n";
    for (const auto& r : t.at("rows")) {
      const std::string ddf = r.at("delta_df").is_null() ? "" : std::to_string(r.at("delta_df").get<int>());
      o << pad(r.at("model_tag").get<std::string>(), 5) << pad(r.at("formula").get<std::string>(), 52)
        << pad(fmt("%.2f%%", 100.0 * value(r, "r_squared")), 9) << pad(std::to_string(r.at("res_df").get<int>()), 8)
        << pad(ddf, 5) << pad(r.at("f").is_null() ? "" : fmt("%.1f", value(r, "f")), 8)
        << (r.at("p_text").is_null() ? "" : r.at("p_text").get<std::string>()) << "\n";
    }
    std::string sep = "R2 explained by: ";
    for (const auto& s : t.at("shares")) {
      o << sep << s.at("label").get<std::string>() << " = " << s.at("definition").get<std::string>() << " = "
        << (s.at("fraction").is_null() ? "undefined" : fmt("%.1f%%", 100.0 * value(s, "fraction")));
      sep = ", ";
    }
    o << "\n";
  }
  if (a.contains("environment_offsets")) {
    const auto& e = a.at("environment_offsets");
    o << "\nenvironment offsets: AR - Real = " << fmt("%.3f", value(e, "ar_minus_real"))
      << ", VR - Real = " << fmt("%.3f", value(e, "vr_minus_real")) << ", slope " << fmt("%.3f", value(e, "slope"))
      << "\n";
  }
  if (a.contains("log_ratio_means")) {
    o << "\nmean log ratios\n";
    for (const auto& m : a.at("log_ratio_means"))
      o << "  " << pad(m.at("environment").get<std::string>(), 4) << pad(m.at("measure").get<std::string>(), 12)
        << pad(fmt("%.4f", value(m, "mean")), 10) << "ratio " << fmt("%.4f", value(m, "ratio")) << "\n";
  }
  if (a.contains("correlations")) {
    o << "\nsubjective vs normalized GVA\n";
    for (const auto& c : a.at("correlations"))
      o << "  " << pad(c.at("environment").get<std::string>(), 6) << "r = " << fmt("%.3f", value(c, "r"))
        << "  r2 = " << fmt("%.1f%%", 100.0 * value(c, "r_squared")) << "\n";
  }
  return o.str();
}

std::vector<std::string> write_report(const Json& analysis, const std::filesystem::path& dir) {
  if (!analysis.is_object() || !analysis.contains("tables"))
    throw Error(ErrorCode::Parse, "not an analysis report (no \"tables\")");
  std::vector<std::string> names;
  for (const auto& f : figures(analysis)) {
    io::write_text_file(dir / f.file, f.svg);
    names.push_back(f.file);
  }
  io::write_text_file(dir / "tables.txt", text_tables(analysis));
  names.push_back("tables.txt");
  return names;
}

}  // namespace vergescope::report
