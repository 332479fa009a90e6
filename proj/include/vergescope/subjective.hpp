#pragma once

// Subjective depth reports and the XR / Real log-ratio comparison.

#include <string_view>
#include <vector>

#include "vergescope/types.hpp"

namespace vergescope::stats {

enum class LengthUnit { Meters, Feet, Inches, Centimeters };

LengthUnit parse_length_unit(std::string_view text);
std::string_view length_unit_name(LengthUnit u) noexcept;

double unit_to_meters(double value, LengthUnit unit);

enum class Measure { Gva, Subjective };

std::string_view measure_name(Measure m) noexcept;

/// One value per (participant, environment, end depth), in diopters for
/// subjective reports and degrees for GVA.
struct CellValue {
  ParticipantId participant;
  Environment environment = Environment::Real;
  double end_depth_m = 0.0;
  double value = 0.0;
};

struct LogRatioRow {
  ParticipantId participant;
  double end_depth_m = 0.0;
  Environment environment = Environment::AR;  // AR or VR
  Measure measure = Measure::Gva;
  double log_ratio = 0.0;
};

/// ln(value_XR / value_Real) for every XR cell of both measures. Rows are
/// ordered by participant, depth, environment, then measure.
std::vector<LogRatioRow> log_ratio_table(const std::vector<CellValue>& gva, const std::vector<CellValue>& subjective);

}  // namespace vergescope::stats
