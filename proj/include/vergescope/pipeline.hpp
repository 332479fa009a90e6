#pragma once

// Gaze data cleaning cascade: confidence -> velocity -> SD outlier -> window,
// followed by trial, depth-pair, environment and participant validity gates.
//
// Filters never remove samples. An invalidated sample keeps its slot and
// records why it was dropped, so every exclusion can be attributed.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vergescope/geometry.hpp"
#include "vergescope/types.hpp"

namespace vergescope::pipeline {

enum class SampleStatus : std::uint8_t {
  Valid,
  Missing,        // no usable data from the tracker (NaN or zero vectors)
  LowConfidence,
  VelocitySpike,
  Outlier,
};

std::string_view status_name(SampleStatus s) noexcept;

struct BinocularSample {
  double t_s = 0.0;
  GazeRay left;
  GazeRay right;
  double left_conf = 1.0;
  double right_conf = 1.0;
  SampleStatus status = SampleStatus::Valid;

  bool valid() const noexcept { return status == SampleStatus::Valid; }
};

enum class TrialFlag : std::uint8_t {
  Ok,
  NoFixation,
  ShortTrial,
  NoValidSamples,
  InsufficientValid,  // valid fraction in the window not > 50%
};

std::string_view trial_flag_name(TrialFlag f) noexcept;

struct TrialRecord {
  ParticipantId participant_id;
  Environment environment = Environment::Real;
  int trial_id = 0;
  double start_depth_m = 0.0;
  double end_depth_m = 0.0;
  double stimulus_onset_s = 0.0;
  std::optional<double> response_s;
  std::optional<double> fixation_onset_s;
  LandoltDirection landolt_dir = LandoltDirection::Right;
  LandoltDirection landolt_response = LandoltDirection::Right;
  bool landolt_correct = true;
  std::vector<BinocularSample> samples;

  /// Per-sample GVA in degrees, NaN for missing samples. Filled by compute_gva.
  std::vector<double> gva;
  TrialFlag flag = TrialFlag::Ok;
};

/// Marks samples with non-finite or zero-length directions as Missing and
/// fills trial.gva through the active kernel table.
void compute_gva(TrialRecord& trial, VergenceMode mode = VergenceMode::Full3D);

/// Invalidates samples where either eye's confidence is below `threshold`.
TrialRecord confidence_filter(TrialRecord trial, double threshold = 0.75);

/// Invalidates samples whose GVA velocity magnitude exceeds `max_deg_per_s`.
/// The velocity of sample i is (g[i] - g[i-1]) / dt and is only evaluated when
/// both samples are still valid; the scan runs forward in time, so a sample
/// following a freshly removed spike is not judged against the spike.
TrialRecord velocity_filter(TrialRecord trial, double max_deg_per_s = 5000.0);

/// Single-pass SD filter over the trial's currently valid samples:
/// |gva - mean| >= k_sd * SD is invalidated. SD is the sample SD (n - 1).
/// Fewer than two valid samples, or SD == 0, leaves the trial unchanged.
TrialRecord outlier_filter(TrialRecord trial, double k_sd = 2.5);

struct FixationConfig {
  double dispersion_deg = 1.5;
  double min_duration_s = 0.100;
  double min_latency_s = 0.250;
};

/// I-DT over the cyclopean gaze direction (azimuth/elevation of L + R).
/// Returns the onset of the first fixation starting at or after
/// stimulus_onset + min_latency and before the response; nullopt otherwise.
std::optional<double> detect_fixation_onset(const TrialRecord& trial, const FixationConfig& cfg = {});

struct Window {
  double t0 = 0.0;
  double t1 = 0.0;
};

struct WindowConfig {
  double start_after_fixation_s = 1.0;
  double end_after_fixation_s = 2.0;
};

/// [fixation + 1 s, fixation + 2 s). nullopt when the fixation is unknown or
/// the window runs past the last sample.
std::optional<Window> analysis_window(const TrialRecord& trial, const WindowConfig& cfg = {});

struct WindowMean {
  double mean_gva_deg = 0.0;  // NaN when no valid sample falls in the window
  double valid_fraction = 0.0;
  std::size_t n_slots = 0;
  std::size_t n_valid = 0;
};

WindowMean trial_mean_gva(const TrialRecord& trial, const Window& window);

/// Strictly more than half of the window's samples valid.
constexpr bool trial_validity(double valid_fraction) noexcept { return valid_fraction > 0.5; }

struct PipelineConfig {
  double confidence_threshold = 0.75;
  double max_velocity_deg_s = 5000.0;
  double outlier_k_sd = 2.5;
  VergenceMode vergence_mode = VergenceMode::Full3D;
  FixationConfig fixation;
  WindowConfig window;
};

struct StatusCounts {
  std::size_t valid = 0;
  std::size_t missing = 0;
  std::size_t low_confidence = 0;
  std::size_t velocity_spike = 0;
  std::size_t outlier = 0;

  std::size_t total() const noexcept { return valid + missing + low_confidence + velocity_spike + outlier; }
  std::size_t excluded() const noexcept { return total() - valid; }
  void add(SampleStatus s) noexcept;
  StatusCounts& operator+=(const StatusCounts& o) noexcept;
};

struct TrialOutcome {
  ParticipantId participant_id;
  Environment environment = Environment::Real;
  int trial_id = 0;
  double start_depth_m = 0.0;
  double end_depth_m = 0.0;
  std::optional<double> fixation_onset_s;
  std::optional<Window> window;
  double mean_gva_deg = 0.0;
  double valid_fraction = 0.0;
  bool valid = false;
  TrialFlag flag = TrialFlag::Ok;
  bool landolt_correct = true;
  bool landolt_timeout = false;
  StatusCounts counts;
};

/// Runs the full cascade on one trial. `trial` is updated in place so callers
/// can inspect per-sample statuses afterwards.
TrialOutcome process_trial(TrialRecord& trial, const PipelineConfig& cfg = {});

/// Processes trials on up to `threads` workers (0 = hardware concurrency).
/// Output order and content do not depend on the worker count.
std::vector<TrialOutcome> process_trials(std::vector<TrialRecord>& trials, const PipelineConfig& cfg = {},
                                         unsigned threads = 0);

struct ValidityGates {
  int min_valid_trials_per_pair = 3;
  int min_valid_pairs_per_environment = 6;
  int required_valid_environments = 3;
};

struct PairKey {
  ParticipantId participant_id;
  Environment environment;
  double start_depth_m;
  double end_depth_m;
  auto operator<=>(const PairKey&) const = default;
};

struct PairVerdict {
  PairKey key;
  int valid_trials = 0;
  int total_trials = 0;
  bool valid = false;
};

struct EnvironmentVerdict {
  ParticipantId participant_id;
  Environment environment;
  int valid_pairs = 0;
  int total_pairs = 0;
  bool valid = false;
  StatusCounts counts;
};

struct ParticipantVerdict {
  ParticipantId participant_id;
  int valid_environments = 0;
  bool valid = false;
};

struct EnvironmentSummary {
  Environment environment;
  int participants = 0;
  double excluded_percent_mean = 0.0;  // mean over participants
  double excluded_percent_min = 0.0;
  double excluded_percent_max = 0.0;
  int valid_trials = 0;
  int total_trials = 0;
};

struct ValidityReport {
  StatusCounts totals;
  std::vector<PairVerdict> pairs;
  std::vector<EnvironmentVerdict> environments;
  std::vector<ParticipantVerdict> participants;
  std::vector<EnvironmentSummary> per_environment;
  std::vector<ParticipantId> retained_participants;
  int landolt_correct = 0;
  int landolt_total = 0;

  double landolt_accuracy() const noexcept {
    return landolt_total > 0 ? static_cast<double>(landolt_correct) / landolt_total : 0.0;
  }
  bool pair_valid(const PairKey& key) const;
  bool participant_retained(const ParticipantId& id) const;
};

/// Applies the three hierarchical gates to per-trial outcomes.
ValidityReport cascade_validity(const std::vector<TrialOutcome>& outcomes, const ValidityGates& gates = {});

/// True for trials that survive every gate: valid trial, valid depth pair,
/// retained participant.
bool retained(const TrialOutcome& outcome, const ValidityReport& report);

}  // namespace vergescope::pipeline
