#pragma once

// Per-participant linear calibration in diopter space: gva = a + b * D.

#include <array>
#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "vergescope/geometry.hpp"
#include "vergescope/regression.hpp"
#include "vergescope/types.hpp"

namespace vergescope::calib {

struct DepthGva {
  double diopters = 0.0;
  double gva_deg = 0.0;
};

struct ParticipantModel {
  ParticipantId participant_id;
  std::optional<Environment> environment;  // set for per-environment fits
  double intercept_deg = 0.0;
  double slope_deg_per_diopter = 0.0;
  double residual_sd_deg = 0.0;
  std::size_t n_points = 0;
  // Diopter range seen during fitting; bounds the accepted extrapolation.
  std::optional<double> calibrated_diopter_min;
  std::optional<double> calibrated_diopter_max;
};

/// Least-squares line through (D, gva). Needs two distinct diopter values
/// (RankDeficient otherwise) and a positive slope (InvalidModel otherwise).
/// residual_sd uses n - 2 degrees of freedom; it is 0 for two points.
ParticipantModel fit_participant(const ParticipantId& id, std::span<const DepthGva> points,
                                 std::optional<Environment> environment = std::nullopt);

struct GvaObservation {
  ParticipantId participant_id;
  Environment environment = Environment::Real;
  double end_depth_d = 0.0;
  double gva_deg = 0.0;
  std::optional<double> normalized_gva_deg;
};

/// normalized = gva - a. Lookup error when the model belongs to someone else.
GvaObservation normalize_gva(GvaObservation obs, const ParticipantModel& model);

/// Normalizes every observation with its participant's pooled model.
std::vector<GvaObservation> normalize_all(std::vector<GvaObservation> obs, std::span<const ParticipantModel> models);

struct DepthEstimate {
  double diopters = 0.0;
  double meters = 0.0;
};

/// D = (gva - a) / b. OutOfRange when D <= 0 or, for models carrying a
/// calibrated range, when D exceeds min + 2 * (max - min).
DepthEstimate estimate_depth(double gva_deg, const ParticipantModel& model);

/// Picks the participant's model for `env`: a per-environment model when one
/// exists, the pooled model otherwise. Lookup error when neither exists.
const ParticipantModel& select_model(std::span<const ParticipantModel> models, const ParticipantId& id,
                                     std::optional<Environment> env = std::nullopt);

struct EnvironmentOffsets {
  std::array<double, 3> intercepts{};  // Real, AR, VR lines of the additive fit
  double ar_minus_real = 0.0;
  double vr_minus_real = 0.0;
  double slope = 0.0;
  stats::FitResult fit;
};

/// Fits normalized_gva ~ EndDepth + Environment (gva when not normalized).
/// MissingLevel when any of the three environments is absent.
EnvironmentOffsets environment_offsets(std::span<const GvaObservation> obs);

struct StreamConfig {
  double confidence_threshold = 0.75;
  double max_velocity_deg_s = 5000.0;
  double smoothing_window_s = 0.2;
  VergenceMode mode = VergenceMode::Full3D;
};

struct StreamOutput {
  double t_s = 0.0;
  double gva_deg = 0.0;   // NaN for rejected samples
  double depth_m = 0.0;   // NaN when no estimate is available
};

/// Causal estimator for live data: confidence and velocity filters only (the
/// SD filter needs the whole trial), then depth from the mean GVA of the
/// valid samples in the trailing smoothing window.
class StreamingEstimator {
public:
  StreamingEstimator(ParticipantModel model, StreamConfig cfg = {});

  StreamOutput push(double t_s, const GazeRay& left, const GazeRay& right, double left_conf, double right_conf);
  StreamOutput push_gva(double t_s, double gva_deg);

private:
  StreamOutput accept(double t_s, double gva, bool usable);

  ParticipantModel model_;
  StreamConfig cfg_;
  std::optional<double> last_t_;
  std::optional<double> last_valid_gva_;  // previous sample's GVA if it was valid
  std::deque<std::pair<double, double>> window_;  // (t, gva) of valid samples
};

}  // namespace vergescope::calib
