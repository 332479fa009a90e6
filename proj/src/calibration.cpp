#include "vergescope/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "vergescope/error.hpp"

namespace vergescope::calib {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

ParticipantModel fit_participant(const ParticipantId& id, std::span<const DepthGva> points,
                                 std::optional<Environment> environment) {
  const std::size_t n = points.size();
  if (n < 2) throw Error(ErrorCode::RankDeficient, "participant " + id + ": need at least two calibration points");
  double mx = 0.0;
  double my = 0.0;
  double dmin = points[0].diopters;
  double dmax = dmin;
  for (const auto& p : points) {
    if (!std::isfinite(p.diopters) || !std::isfinite(p.gva_deg))
      throw Error(ErrorCode::DegenerateInput, "participant " + id + ": non-finite calibration point");
    mx += p.diopters;
    my += p.gva_deg;
    dmin = std::min(dmin, p.diopters);
    dmax = std::max(dmax, p.diopters);
  }
  if (dmin == dmax)
    throw Error(ErrorCode::RankDeficient, "participant " + id + ": all calibration points share one depth");
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0;
  double sxy = 0.0;
  for (const auto& p : points) {
    sxx += (p.diopters - mx) * (p.diopters - mx);
    sxy += (p.diopters - mx) * (p.gva_deg - my);
  }
  ParticipantModel m;
  m.participant_id = id;
  m.environment = environment;
  m.slope_deg_per_diopter = sxy / sxx;
  m.intercept_deg = my - m.slope_deg_per_diopter * mx;
  m.n_points = n;
  m.calibrated_diopter_min = dmin;
  m.calibrated_diopter_max = dmax;
  if (!(m.slope_deg_per_diopter > 0.0) || !std::isfinite(m.slope_deg_per_diopter))
    throw Error(ErrorCode::InvalidModel,
                "participant " + id + ": fitted slope " + std::to_string(m.slope_deg_per_diopter) + " is not positive");
  double ss = 0.0;
  for (const auto& p : points) {
    const double e = p.gva_deg - (m.intercept_deg + m.slope_deg_per_diopter * p.diopters);
    ss += e * e;
  }
  m.residual_sd_deg = n > 2 ? std::sqrt(ss / static_cast<double>(n - 2)) : 0.0;
  return m;
}

GvaObservation normalize_gva(GvaObservation obs, const ParticipantModel& model) {
  if (obs.participant_id != model.participant_id)
    throw Error(ErrorCode::Lookup, "model for " + model.participant_id + " applied to " + obs.participant_id);
  obs.normalized_gva_deg = obs.gva_deg - model.intercept_deg;
  return obs;
}

const ParticipantModel& select_model(std::span<const ParticipantModel> models, const ParticipantId& id,
                                     std::optional<Environment> env) {
  const ParticipantModel* pooled = nullptr;
  for (const auto& m : models) {
    if (m.participant_id != id) continue;
    if (env && m.environment == env) return m;
    if (!m.environment && !pooled) pooled = &m;
  }
  if (pooled) return *pooled;
  throw Error(ErrorCode::Lookup, "no calibration model for participant " + id);
}

std::vector<GvaObservation> normalize_all(std::vector<GvaObservation> obs, std::span<const ParticipantModel> models) {
  for (auto& o : obs) {
    const ParticipantModel* pooled = nullptr;
    for (const auto& m : models)
      if (m.participant_id == o.participant_id && !m.environment) {
        pooled = &m;
        break;
      }
    if (!pooled) throw Error(ErrorCode::Lookup, "no pooled calibration model for participant " + o.participant_id);
    o = normalize_gva(std::move(o), *pooled);
  }
  return obs;
}

DepthEstimate estimate_depth(double gva_deg, const ParticipantModel& model) {
  if (!(model.slope_deg_per_diopter > 0.0))
    throw Error(ErrorCode::InvalidModel, "calibration slope must be positive");
  if (!std::isfinite(gva_deg)) throw Error(ErrorCode::DegenerateInput, "GVA is not finite");
  const double d = (gva_deg - model.intercept_deg) / model.slope_deg_per_diopter;
  if (!(d > 0.0))
    throw Error(ErrorCode::OutOfRange, "GVA " + std::to_string(gva_deg) + " maps to a non-positive diopter value");
  if (model.calibrated_diopter_min && model.calibrated_diopter_max) {
    const double limit = *model.calibrated_diopter_min + 2.0 * (*model.calibrated_diopter_max - *model.calibrated_diopter_min);
    if (d > limit)
      throw Error(ErrorCode::OutOfRange, "GVA " + std::to_string(gva_deg) + " maps to " + std::to_string(d) +
                                             " D, beyond the calibrated range");
  }
  return {d, 1.0 / d};
}

EnvironmentOffsets environment_offsets(std::span<const GvaObservation> obs) {
  std::vector<double> y;
  std::vector<double> d;
  std::vector<std::string> env;
  bool seen[3] = {false, false, false};
  for (const auto& o : obs) {
    y.push_back(o.normalized_gva_deg.value_or(o.gva_deg));
    d.push_back(o.end_depth_d);
    env.emplace_back(environment_name(o.environment));
    seen[static_cast<int>(o.environment)] = true;
  }
  for (auto e : kAllEnvironments)
    if (!seen[static_cast<int>(e)])
      throw Error(ErrorCode::MissingLevel, "environment " + std::string(environment_name(e)) + " has no observations");

  stats::DataTable t;
  t.add_numeric("GVA", y);
  t.add_numeric("EndDepth", d);
  t.add_categorical("Environment", env, {"Real", "AR", "VR"});
  EnvironmentOffsets out;
  out.fit = stats::ols_fit(t, stats::ModelFormula::parse("GVA ~ EndDepth + Environment"));
  const double a = out.fit.coefficient("(Intercept)");
  out.ar_minus_real = out.fit.coefficient("EnvironmentAR");
  out.vr_minus_real = out.fit.coefficient("EnvironmentVR");
  out.intercepts = {a, a + out.ar_minus_real, a + out.vr_minus_real};
  out.slope = out.fit.coefficient("EndDepth");
  return out;
}

StreamingEstimator::StreamingEstimator(ParticipantModel model, StreamConfig cfg)
    : model_(std::move(model)), cfg_(cfg) {
  if (!(model_.slope_deg_per_diopter > 0.0)) throw Error(ErrorCode::InvalidModel, "calibration slope must be positive");
}

StreamOutput StreamingEstimator::push(double t_s, const GazeRay& left, const GazeRay& right, double left_conf,
                                      double right_conf) {
  const bool present = left.direction.finite() && right.direction.finite() && norm(left.direction) > 0.0 &&
                       norm(right.direction) > 0.0;
  const double gva = present ? vergence_angle(left.direction, right.direction, cfg_.mode) : kNaN;
  const bool confident = std::min(left_conf, right_conf) >= cfg_.confidence_threshold;
  return accept(t_s, gva, present && confident);
}

StreamOutput StreamingEstimator::push_gva(double t_s, double gva_deg) {
  return accept(t_s, gva_deg, std::isfinite(gva_deg));
}

StreamOutput StreamingEstimator::accept(double t_s, double gva, bool usable) {
  if (last_t_ && !(t_s > *last_t_)) throw Error(ErrorCode::Domain, "stream timestamps must increase");
  if (usable && last_valid_gva_) {
    const double v = (gva - *last_valid_gva_) / (t_s - *last_t_);
    if (std::fabs(v) > cfg_.max_velocity_deg_s) usable = false;
  }
  last_t_ = t_s;
  last_valid_gva_ = usable ? std::optional<double>(gva) : std::nullopt;

  if (usable) window_.emplace_back(t_s, gva);
  while (!window_.empty() && window_.front().first <= t_s - cfg_.smoothing_window_s) window_.pop_front();

  StreamOutput out{t_s, usable ? gva : kNaN, kNaN};
  if (window_.empty()) return out;
  double sum = 0.0;
  for (const auto& [t, g] : window_) sum += g;
  try {
    out.depth_m = estimate_depth(sum / static_cast<double>(window_.size()), model_).meters;
  } catch (const Error&) {
    // out of the calibrated range: no estimate for this sample
  }
  return out;
}

}  // namespace vergescope::calib
