#pragma once

// File formats: gaze CSV (bulk samples), JSON for everything structured.

#include <array>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "vergescope/calibration.hpp"
#include "vergescope/pipeline.hpp"
#include "vergescope/subjective.hpp"
#include "vergescope/synth.hpp"

namespace vergescope::io {

using Json = nlohmann::ordered_json;

/// Shortest text that parses back to the same double; "nan" for NaN.
std::string format_double(double x);
/// x rounded to `digits` significant digits (reports use 9).
double round_sig(double x, int digits = 9);

/// Strict field parse: the whole field must be a number. "nan"/"NaN" allowed.
double parse_double(std::string_view field, std::string_view what, std::size_t line);

// ---- gaze CSV -------------------------------------------------------------

inline constexpr std::array<std::string_view, 15> kGazeColumns{
    "t_s",  "l_conf", "r_conf", "l_ox", "l_oy", "l_oz", "l_dx", "l_dy",
    "l_dz", "r_ox",   "r_oy",   "r_oz", "r_dx", "r_dy", "r_dz"};

std::string gaze_header();
std::string gaze_row(const pipeline::BinocularSample& s);
/// One data row; errors carry `line_no`.
pipeline::BinocularSample parse_gaze_row(std::string_view line, std::size_t line_no);

void write_gaze_csv(std::ostream& out, std::span<const pipeline::BinocularSample> samples);
/// Header must match exactly; time must be non-decreasing; confidences in [0, 1].
std::vector<pipeline::BinocularSample> read_gaze_csv(std::istream& in, std::string_view source = "<input>");
std::vector<pipeline::BinocularSample> read_gaze_csv_file(const std::filesystem::path& path);
void write_gaze_csv_file(const std::filesystem::path& path, std::span<const pipeline::BinocularSample> samples);

// ---- trial manifests ------------------------------------------------------

struct ManifestTrial {
  int trial_id = 0;
  double start_depth_m = 0.0;
  double end_depth_m = 0.0;
  double stimulus_onset_s = 0.0;
  std::optional<double> response_s;
  LandoltDirection landolt_dir = LandoltDirection::Right;
  LandoltDirection landolt_response = LandoltDirection::Right;
  std::string gaze_file;  // relative to the manifest's directory
};

struct TrialManifest {
  ParticipantId participant_id;
  Environment environment = Environment::Real;
  std::vector<double> depths_m;
  std::vector<ManifestTrial> trials;

  /// Depths must come from depths_m; with `check_chaining`, each trial must
  /// start where the previous one ended.
  void validate(bool check_chaining = false) const;
};

Json manifest_to_json(const TrialManifest& m);
TrialManifest manifest_from_json(const Json& j);

// ---- subjective reports ---------------------------------------------------

struct SubjectiveRow {
  ParticipantId participant_id;
  Environment environment = Environment::Real;
  double depth_m = 0.0;  // true target depth
  double report_value = 0.0;
  stats::LengthUnit unit = stats::LengthUnit::Meters;
  int repetition = 1;
};

void write_subjective_csv(std::ostream& out, std::span<const SubjectiveRow> rows);
std::vector<SubjectiveRow> read_subjective_csv(std::istream& in, std::string_view source = "<input>");

// ---- per-trial GVA table --------------------------------------------------

struct GvaTableRow {
  ParticipantId participant_id;
  Environment environment = Environment::Real;
  int trial_id = 0;
  double start_depth_m = 0.0;
  double end_depth_m = 0.0;
  std::optional<double> fixation_onset_s;
  std::optional<double> window_t0_s;
  std::optional<double> window_t1_s;
  double mean_gva_deg = 0.0;  // NaN when nothing valid in the window
  double valid_fraction = 0.0;
  bool trial_valid = false;
  bool retained = false;  // passed every validity gate
  pipeline::TrialFlag flag = pipeline::TrialFlag::Ok;
  bool landolt_correct = false;
  bool landolt_timeout = false;
  pipeline::StatusCounts counts;
};

std::vector<GvaTableRow> gva_table(const std::vector<pipeline::TrialOutcome>& outcomes,
                                   const pipeline::ValidityReport& report);
void write_gva_table(std::ostream& out, std::span<const GvaTableRow> rows);
std::vector<GvaTableRow> read_gva_table(std::istream& in, std::string_view source = "<input>");

pipeline::TrialFlag parse_trial_flag(std::string_view text);

// ---- structured JSON ------------------------------------------------------

Json validity_to_json(const pipeline::ValidityReport& report);

Json model_to_json(const calib::ParticipantModel& m);
calib::ParticipantModel model_from_json(const Json& j);
Json models_to_json(std::span<const calib::ParticipantModel> models);
/// Accepts {"models": [...]}, a bare array, or a single model object.
std::vector<calib::ParticipantModel> models_from_json(const Json& j);

Json config_to_json(const synth::CohortConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
synth::CohortConfig config_from_json(const Json& j);

/// Ground truth of a simulated cohort: physiology, offsets, factors, artifacts.
Json ledger_to_json(const synth::Cohort& cohort);

Json read_json_file(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline.
void write_json_file(const std::filesystem::path& path, const Json& j);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

// ---- dataset directories --------------------------------------------------

// <dir>/dataset.json           index of manifests
// <dir>/design.json            cohort configuration that produced it
// <dir>/ledger.json            ground truth
// <dir>/subjective.csv
// <dir>/manifests/<pid>_<env>.json
// <dir>/gaze/<pid>_<env>_t<id>.csv

void write_dataset(const synth::Cohort& cohort, const std::filesystem::path& dir, unsigned threads = 0);

struct Dataset {
  std::vector<pipeline::TrialRecord> trials;
  std::vector<SubjectiveRow> subjective;  // empty when the file is absent
};

Dataset read_dataset(const std::filesystem::path& dir, unsigned threads = 0);

}  // namespace vergescope::io
