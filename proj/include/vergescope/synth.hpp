#pragma once

// Ground-truth simulator for the vergence experiment: trial sequences,
// binocular sample streams with tagged artifacts, and verbal depth reports.

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "vergescope/pipeline.hpp"
#include "vergescope/subjective.hpp"
#include "vergescope/types.hpp"

namespace vergescope::synth {

struct ExperimentDesign {
  std::vector<double> depths_m{0.25, 0.75, 1.5, 4.0};
  // Head-frame azimuth of each depth's target (deg, + = right); the head is
  // turned to face the end target, the eyes make up the rest.
  std::vector<double> target_azimuth_deg{25.0, -7.60, 5.71, 0.0};
  int repetitions = 6;
  int participants = 13;
  double sample_rate_hz = 200.0;
  double response_window_s = 3.0;
  double iti_min_s = 3.0;
  double iti_max_s = 6.0;
  double pre_stimulus_s = 1.0;  // recorded fixation on the previous target
  int subjective_repetitions = 3;

  /// All ordered pairs of distinct depths.
  std::vector<std::pair<double, double>> depth_pairs() const;
  void validate() const;
};

enum class SlopeModel {
  Population,  // slope drawn from N(slope_mean, slope_sd); eyes at the matching effective separation
  Geometric,   // slope follows from an IPD drawn from N(ipd_mean, ipd_sd)
};

struct NoiseModel {
  std::optional<double> intercept_bias_deg;  // fixed bias for every participant
  double intercept_mean_deg = 17.5;          // target mean of the fitted intercept
  double intercept_sd_deg = 8.6;
  SlopeModel slope_model = SlopeModel::Population;
  double slope_mean = 1.7;
  double slope_sd = 0.37;
  double ipd_mean_m = 0.0648;
  double ipd_sd_m = 0.0035;
  double sample_noise_sd_deg = 0.6;    // white noise on the vergence angle
  double direction_noise_sd_deg = 0.02;
  double dropout_rate = 0.14;          // expected fraction of samples
  double dropout_burst_mean = 8.0;     // samples per burst
  double spike_rate = 0.003;
  double spike_deg = 30.0;
  double outlier_rate = 0.002;
  double outlier_deg = 20.0;
  double settle_min_s = 0.2;
  double settle_max_s = 0.3;
  double latency_min_s = 0.22;
  double latency_max_s = 0.28;
  double vergence_horizon_s = 1.0;     // transition is exactly complete after this

  /// Everything zero: exact geometry plus bias and offsets.
  static NoiseModel noiseless();
  void validate() const;
};

struct EnvironmentEffect {
  std::array<double, 3> offsets_deg{0.0, -0.8, -1.3};  // Real, AR, VR
};

struct SubjectiveModel {
  std::array<double, 3> factors{1.0, 1.17, 1.377};  // multiply true diopters
  double participant_log_sd = 0.10;
  double report_log_sd = 0.05;
};

struct CohortConfig {
  ExperimentDesign design;
  NoiseModel noise;
  EnvironmentEffect environment;
  SubjectiveModel subjective;
  double landolt_accuracy = 0.98;
  double timeout_rate = 0.0;
};

struct SequencedTrial {
  int trial_id = 0;
  Environment environment = Environment::Real;
  double start_depth_m = 0.0;
  double end_depth_m = 0.0;
};

/// One environment block: every ordered pair `repetitions` times, chained so
/// each trial starts where the previous one ended. Random first start depth.
std::vector<SequencedTrial> generate_sequence(const ExperimentDesign& design, Environment env, std::mt19937_64& rng);
std::vector<SequencedTrial> generate_sequence(const ExperimentDesign& design, Environment env, std::uint64_t seed);

struct Physiology {
  ParticipantId id;
  double ipd_m = 0.0648;
  double intercept_bias_deg = 0.0;
  double settle_time_s = 0.25;
  double subjective_scale = 1.0;
  stats::LengthUnit report_unit = stats::LengthUnit::Meters;
  std::array<Environment, 3> environment_order{Environment::Real, Environment::AR, Environment::VR};
};

/// Least-squares line of ideal vergence against diopters over the design depths.
std::pair<double, double> ideal_line(const ExperimentDesign& design, double ipd_m);

enum class ArtifactKind { Dropout, Spike, Outlier };

std::string_view artifact_name(ArtifactKind k) noexcept;

struct ArtifactTag {
  ParticipantId participant_id;
  Environment environment = Environment::Real;
  int trial_id = 0;
  std::size_t sample_index = 0;
  double t_s = 0.0;
  ArtifactKind kind = ArtifactKind::Dropout;
};

struct TrialTruth {
  double saccade_start_s = 0.0;
  double landing_s = 0.0;
  double steady_gva_deg = 0.0;  // noiseless end-depth vergence
  double start_gva_deg = 0.0;
};

struct SimulatedTrial {
  pipeline::TrialRecord record;
  TrialTruth truth;
  std::vector<ArtifactTag> artifacts;
};

/// `first_sample_index` places the trial on the session's sample grid.
SimulatedTrial simulate_trial(const SequencedTrial& spec, const Physiology& who, const CohortConfig& cfg,
                              std::int64_t first_sample_index, std::uint64_t seed);

struct SubjectiveReport {
  ParticipantId participant_id;
  Environment environment = Environment::Real;
  double depth_m = 0.0;
  double value = 0.0;
  stats::LengthUnit unit = stats::LengthUnit::Meters;
  int repetition = 1;
};

struct ParticipantTruth {
  Physiology physiology;
  double slope_implied = 0.0;      // pooled fit slope in the noiseless limit
  double intercept_implied = 0.0;  // pooled fit intercept in the noiseless limit
};

struct Cohort {
  CohortConfig config;
  std::uint64_t seed = 0;
  std::vector<ParticipantTruth> participants;
  std::vector<SimulatedTrial> trials;  // participant-major, presentation order
  std::vector<SubjectiveReport> subjective;

  std::size_t artifact_count() const;
};

/// Per-participant seeds are derived from `seed`, so the output does not
/// depend on `threads`.
Cohort simulate_cohort(const CohortConfig& cfg, std::uint64_t seed, unsigned threads = 0);

/// splitmix64 step, exposed for seed derivation in tests and tools.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

}  // namespace vergescope::synth
