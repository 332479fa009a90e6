#pragma once

// Study-level analyses over the per-trial GVA table: cell averaging,
// per-participant calibration, the model-comparison tables, stability,
// subjective-vs-GVA log ratios and correlations.

#include <optional>
#include <string>
#include <vector>

#include "vergescope/calibration.hpp"
#include "vergescope/io.hpp"
#include "vergescope/regression.hpp"
#include "vergescope/subjective.hpp"

namespace vergescope::analysis {

/// Mean over retained trials of one (participant, environment, end depth).
struct Cell {
  ParticipantId participant;
  Environment environment = Environment::Real;
  double end_depth_m = 0.0;
  double gva_deg = 0.0;
  double norm_gva_deg = 0.0;  // gva - participant intercept; NaN until normalized
  int n_trials = 0;
};

/// Same, split by the depth the eyes came from.
struct PairCell {
  ParticipantId participant;
  Environment environment = Environment::Real;
  double start_depth_m = 0.0;
  double end_depth_m = 0.0;
  double gva_deg = 0.0;
  double norm_gva_deg = 0.0;
  int n_trials = 0;
};

std::vector<Cell> end_depth_cells(const std::vector<io::GvaTableRow>& rows);
std::vector<PairCell> pair_cells(const std::vector<io::GvaTableRow>& rows);

/// Pooled line per participant over its cells, plus one line per
/// (participant, environment) when `per_environment`. Participants whose
/// cells cannot support a line are skipped.
std::vector<calib::ParticipantModel> fit_models(const std::vector<Cell>& cells, bool per_environment = true);

/// Fills norm_gva_deg from each participant's pooled intercept.
void normalize(std::vector<Cell>& cells, const std::vector<calib::ParticipantModel>& models);
void normalize(std::vector<PairCell>& cells, const std::vector<calib::ParticipantModel>& models);

struct ShareResult {
  std::string label;
  std::string definition;
  std::optional<double> fraction;  // absent when undefined for this table
};

struct StepSummary {
  std::string current;
  std::optional<std::string> dropped;
  std::vector<stats::StepCandidate> candidates;
};

/// One model-comparison table: complete model(s), fitted model, next reduced model.
struct ComparisonTable {
  std::string name;
  std::size_t n = 0;
  std::vector<stats::ModelRow> rows;
  std::string fitted_tag = "fm";
  stats::FitResult fitted;
  std::vector<ShareResult> shares;
  std::vector<StepSummary> trace;
};

/// Comparison rows like fill_comparisons, but a row identical in df to the one
/// above (fitted == complete) gets F = 0, p = 1 instead of an error.
void fill_rows(std::vector<stats::ModelRow>& rows);

struct ParticipantSummary {
  double intercept_mean = 0.0;
  double intercept_sd = 0.0;
  double slope_mean = 0.0;
  double slope_sd = 0.0;
  double r2_intercepts = 0.0;  // GVA ~ Participant
  double r2_lines = 0.0;       // GVA ~ Participant * EndDepth
  int participants = 0;
};

struct LogRatioMean {
  Environment environment = Environment::AR;
  stats::Measure measure = stats::Measure::Gva;
  double mean = 0.0;
  double ratio = 0.0;  // e^mean
  int n = 0;
};

struct CorrelationRow {
  Environment environment = Environment::Real;
  stats::Correlation correlation;
};

struct AnalysisOptions {
  bool normalized = false;
  bool stability = false;
  bool log_ratio = false;
  bool log_ratio_normalized_gva = false;
  stats::StepwiseOptions stepwise;
};

struct AnalysisReport {
  AnalysisOptions options;
  std::size_t trials_total = 0;
  std::size_t trials_retained = 0;
  std::vector<Cell> cells;
  std::vector<PairCell> pairs;
  std::vector<calib::ParticipantModel> models;
  ParticipantSummary participants;
  std::vector<ComparisonTable> tables;
  std::optional<calib::EnvironmentOffsets> offsets;
  std::vector<stats::LogRatioRow> log_ratios;
  std::vector<LogRatioMean> log_ratio_means;
  std::vector<CorrelationRow> correlations;

  const ComparisonTable& table(const std::string& name) const;
};

/// Subjective reports averaged to diopters per (participant, environment, depth).
std::vector<stats::CellValue> subjective_cells(const std::vector<io::SubjectiveRow>& rows);

ComparisonTable end_depth_table(const std::vector<Cell>& cells, bool normalized, const stats::StepwiseOptions& opt = {});
ComparisonTable stability_table(const std::vector<PairCell>& cells, bool normalized,
                                const stats::StepwiseOptions& opt = {});
ComparisonTable log_ratio_analysis(const std::vector<stats::LogRatioRow>& rows, const stats::StepwiseOptions& opt = {});

/// Runs everything the options ask for. `models` may be empty, in which case
/// pooled and per-environment models are fitted from the cells.
AnalysisReport run_analysis(const std::vector<io::GvaTableRow>& rows, std::vector<calib::ParticipantModel> models,
                            const std::vector<io::SubjectiveRow>& subjective, const AnalysisOptions& options);

/// Report JSON; every float is rounded to 9 significant digits.
io::Json report_to_json(const AnalysisReport& report);

}  // namespace vergescope::analysis
