#include "vergescope/geometry.hpp"

#include <numbers>
#include <string>

#include "vergescope/error.hpp"

namespace vergescope {
namespace {

constexpr double kDegPerRad = 180.0 / std::numbers::pi;
constexpr double kRadPerDeg = std::numbers::pi / 180.0;

}  // namespace

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::DegenerateInput: return "degenerate_input";
    case ErrorCode::Domain: return "domain";
    case ErrorCode::RankDeficient: return "rank_deficient";
    case ErrorCode::SingularDesign: return "singular_design";
    case ErrorCode::Lookup: return "lookup";
    case ErrorCode::OutOfRange: return "out_of_calibration_range";
    case ErrorCode::InvalidModel: return "invalid_model";
    case ErrorCode::MissingLevel: return "missing_level";
    case ErrorCode::UnknownLevel: return "unknown_level";
    case ErrorCode::Nesting: return "nesting";
    case ErrorCode::UndefinedShare: return "undefined_share";
    case ErrorCode::UndefinedCorrelation: return "undefined_correlation";
    case ErrorCode::MissingBaseline: return "missing_baseline";
    case ErrorCode::Parse: return "parse";
    case ErrorCode::Io: return "io";
    case ErrorCode::Usage: return "usage";
  }
  return "unknown";
}

Vec3 normalized(Vec3 v) {
  if (!v.finite()) throw Error(ErrorCode::DegenerateInput, "non-finite vector");
  const double n = norm(v);
  if (!(n > 0.0)) throw Error(ErrorCode::DegenerateInput, "zero-length vector");
  return (1.0 / n) * v;
}

Vec3 rotate_yaw(Vec3 v, double yaw_deg) noexcept {
  const double c = std::cos(yaw_deg * kRadPerDeg);
  const double s = std::sin(yaw_deg * kRadPerDeg);
  return {c * v.x + s * v.z, v.y, -s * v.x + c * v.z};
}

GazeRay GazeRay::make(Vec3 origin, Vec3 direction) {
  if (!origin.finite()) throw Error(ErrorCode::DegenerateInput, "non-finite ray origin");
  return GazeRay{origin, normalized(direction)};
}

EyeConfig EyeConfig::symmetric(double ipd) {
  if (!(ipd >= 0.0) || !std::isfinite(ipd)) throw Error(ErrorCode::Domain, "ipd must be finite and >= 0");
  return EyeConfig{ipd, {-ipd / 2.0, 0.0, 0.0}, {ipd / 2.0, 0.0, 0.0}};
}

TargetSpec TargetSpec::midline(double depth_m) { return at_azimuth(depth_m, 0.0); }

TargetSpec TargetSpec::at_azimuth(double depth_m, double azimuth_deg) {
  const double d = to_diopters(depth_m);
  return TargetSpec{rotate_yaw(Vec3{0.0, 0.0, depth_m}, azimuth_deg), depth_m, d};
}

double vergence_angle(Vec3 left_dir, Vec3 right_dir, VergenceMode mode) {
  if (mode == VergenceMode::Horizontal) {
    left_dir.y = 0.0;
    right_dir.y = 0.0;
  }
  if (!left_dir.finite() || !right_dir.finite())
    throw Error(ErrorCode::DegenerateInput, "non-finite gaze direction");
  if (!(norm(left_dir) > 0.0) || !(norm(right_dir) > 0.0))
    throw Error(ErrorCode::DegenerateInput, "zero-length gaze direction");
  // atan2(|L x R|, L.R) is the arccosine of the normalized dot product, without
  // the loss of precision acos suffers near 0 degrees.
  return std::atan2(norm(cross(left_dir, right_dir)), dot(left_dir, right_dir)) * kDegPerRad;
}

double ideal_vergence(double depth_m, double ipd_m) {
  if (!(depth_m > 0.0) || !(ipd_m > 0.0))
    throw Error(ErrorCode::Domain, "ideal_vergence needs depth > 0 and ipd > 0");
  return 2.0 * std::atan(ipd_m / (2.0 * depth_m)) * kDegPerRad;
}

double to_diopters(double depth_m) {
  if (!(depth_m > 0.0) || !std::isfinite(depth_m))
    throw Error(ErrorCode::Domain, "depth must be positive, got " + std::to_string(depth_m));
  return 1.0 / depth_m;
}

std::pair<GazeRay, GazeRay> forward_gaze(const TargetSpec& target, const EyeConfig& eyes,
                                         double head_yaw_deg) {
  const Vec3 cyclopean = 0.5 * (eyes.left_center + eyes.right_center);
  const Vec3 left = cyclopean + rotate_yaw(eyes.left_center - cyclopean, head_yaw_deg);
  const Vec3 right = cyclopean + rotate_yaw(eyes.right_center - cyclopean, head_yaw_deg);
  const Vec3 to_left = target.position - left;
  const Vec3 to_right = target.position - right;
  if (!(norm(to_left) > 0.0) || !(norm(to_right) > 0.0))
    throw Error(ErrorCode::DegenerateInput, "target coincides with an eye center");
  return {GazeRay::make(left, to_left), GazeRay::make(right, to_right)};
}

std::vector<VelocityPoint> gva_velocity(std::span<const GvaPoint> series) {
  std::vector<VelocityPoint> out;
  out.reserve(series.size());
  bool any = false;
  for (std::size_t i = 0; i < series.size(); ++i) {
    double v = std::numeric_limits<double>::quiet_NaN();
    if (i > 0) {
      const double dt = series[i].t_s - series[i - 1].t_s;
      if (!(dt > 0.0)) throw Error(ErrorCode::Domain, "timestamps must be strictly increasing");
      if (std::isfinite(series[i].gva_deg) && std::isfinite(series[i - 1].gva_deg)) {
        v = (series[i].gva_deg - series[i - 1].gva_deg) / dt;
        any = true;
      }
    }
    out.push_back({series[i].t_s, v});
  }
  if (!any) out.clear();
  return out;
}

}  // namespace vergescope
