#include "vergescope/subjective.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <string>
#include <tuple>

#include "vergescope/error.hpp"

namespace vergescope::stats {

LengthUnit parse_length_unit(std::string_view text) {
  std::string t(text);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "m" || t == "meter" || t == "meters" || t == "metre" || t == "metres") return LengthUnit::Meters;
  if (t == "ft" || t == "foot" || t == "feet") return LengthUnit::Feet;
  if (t == "in" || t == "inch" || t == "inches") return LengthUnit::Inches;
  if (t == "cm" || t == "centimeter" || t == "centimeters") return LengthUnit::Centimeters;
  throw Error(ErrorCode::Parse, "unknown length unit '" + std::string(text) + "'");
}

std::string_view length_unit_name(LengthUnit u) noexcept {
  switch (u) {
    case LengthUnit::Meters: return "meters";
    case LengthUnit::Feet: return "feet";
    case LengthUnit::Inches: return "inches";
    case LengthUnit::Centimeters: return "cm";
  }
  return "?";
}

double unit_to_meters(double value, LengthUnit unit) {
  if (!(value > 0.0) || !std::isfinite(value)) throw Error(ErrorCode::Domain, "length must be positive and finite");
  switch (unit) {
    case LengthUnit::Meters: return value;
    case LengthUnit::Feet: return value * 0.3048;
    case LengthUnit::Inches: return value * 0.0254;
    case LengthUnit::Centimeters: return value / 100.0;
  }
  throw Error(ErrorCode::Parse, "unknown length unit");
}

std::string_view measure_name(Measure m) noexcept { return m == Measure::Gva ? "GVA" : "subjective"; }

std::vector<LogRatioRow> log_ratio_table(const std::vector<CellValue>& gva, const std::vector<CellValue>& subjective) {
  using Key = std::tuple<ParticipantId, double>;
  std::vector<LogRatioRow> rows;
  auto run = [&](const std::vector<CellValue>& cells, Measure measure) {
    std::map<Key, std::map<Environment, double>> grouped;
    for (const auto& c : cells) {
      if (!(c.value > 0.0) || !std::isfinite(c.value))
        throw Error(ErrorCode::Domain, "log ratio needs positive values (" + c.participant + ", " +
                                           std::string(environment_name(c.environment)) + ")");
      grouped[{c.participant, c.end_depth_m}][c.environment] = c.value;
    }
    for (const auto& [key, by_env] : grouped) {
      const auto real = by_env.find(Environment::Real);
      if (real == by_env.end())
        throw Error(ErrorCode::MissingBaseline, "no Real value for participant " + std::get<0>(key) + " at " +
                                                    std::to_string(std::get<1>(key)) + " m (" +
                                                    std::string(measure_name(measure)) + ")");
      for (const Environment env : {Environment::AR, Environment::VR}) {
        const auto it = by_env.find(env);
        if (it == by_env.end()) continue;
        rows.push_back({std::get<0>(key), std::get<1>(key), env, measure, std::log(it->second / real->second)});
      }
    }
  };
  run(gva, Measure::Gva);
  run(subjective, Measure::Subjective);
  std::sort(rows.begin(), rows.end(), [](const LogRatioRow& a, const LogRatioRow& b) {
    return std::tie(a.participant, a.end_depth_m, a.environment, a.measure) <
           std::tie(b.participant, b.end_depth_m, b.environment, b.measure);
  });
  return rows;
}

}  // namespace vergescope::stats
