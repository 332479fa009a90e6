#pragma once

// Multiple linear regression with treatment-coded factors, R-style formulas,
// nested-model F tests and backward stepwise refinement.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace vergescope::stats {

struct Categorical {
  std::vector<std::string> levels;  // levels[0] is the reference
  std::vector<int> codes;           // index into levels, one per row
};

using Column = std::variant<std::vector<double>, Categorical>;

class DataTable {
public:
  void add_numeric(const std::string& name, std::vector<double> values);

  /// `level_order` fixes the level sequence (and thus the reference level);
  /// levels absent from `values` are dropped. Values not listed are an
  /// UnknownLevel error. An empty order means first-appearance order.
  void add_categorical(const std::string& name, const std::vector<std::string>& values,
                       const std::vector<std::string>& level_order = {});

  std::size_t rows() const noexcept { return rows_; }
  bool has(const std::string& name) const { return columns_.count(name) > 0; }
  const Column& column(const std::string& name) const;
  const std::vector<double>& numeric(const std::string& name) const;

private:
  void check_rows(std::size_t n, const std::string& name);

  std::size_t rows_ = 0;
  bool empty_ = true;
  std::map<std::string, Column> columns_;
};

/// A term is a set of variable names; a single name is a main effect.
using Term = std::vector<std::string>;

struct ModelFormula {
  std::string response;
  std::vector<std::string> variables;  // display order
  std::vector<Term> terms;             // canonical: by order, then variable order

  /// Accepts "y ~ 1", "y ~ a + b", "y ~ a * b", "y ~ a + b + a:b" and mixes.
  static ModelFormula parse(std::string_view text);

  /// Compact R notation: full factorial groups print as "a * b".
  std::string to_string() const;

  bool has_term(const Term& t) const;
  bool is_subset_of(const ModelFormula& other) const;
  bool satisfies_marginality() const;

  /// Terms that can be removed without breaking marginality.
  std::vector<Term> droppable_terms() const;
  ModelFormula without(const Term& t) const;
  ModelFormula without_variable(const std::string& name) const;

  bool operator==(const ModelFormula& o) const;
};

std::string term_name(const Term& t);

struct DesignMatrix {
  std::size_t n = 0;
  std::size_t p = 0;
  std::vector<double> data;  // column-major, n * p
  std::vector<std::string> names;

  double at(std::size_t row, std::size_t col) const { return data[col * n + row]; }
};

DesignMatrix build_design_matrix(const DataTable& table, const ModelFormula& formula);

struct FitResult {
  ModelFormula formula;
  std::vector<std::string> coefficient_names;
  std::vector<double> coefficients;
  double r_squared = 0.0;
  int residual_df = 0;
  std::size_t n = 0;
  double rss = 0.0;
  double tss = 0.0;

  /// n ln(RSS / n) + 2 k, as used by backward AIC selection.
  double aic() const;
  double coefficient(const std::string& name) const;
};

/// Least squares through Householder QR. Throws SingularDesign when the design
/// is rank deficient or has no residual degrees of freedom.
FitResult ols_fit(const DataTable& table, const ModelFormula& formula);

struct ModelComparison {
  FitResult smaller;
  FitResult larger;
  FitResult complete;
  int delta_df = 0;
  double f_stat = 0.0;
  double p_value = 1.0;
};

/// F = ((R2_large - R2_small) / ddf) / ((1 - R2_complete) / df_complete).
/// A negative R2 difference (possible only through rounding) is clamped to 0.
double f_statistic(double r2_smaller, double r2_larger, int delta_df, double r2_complete, int df_complete);
double f_p_value(double f, int delta_df, int df_complete);

ModelComparison nested_f_test(const FitResult& smaller, const FitResult& larger, const FitResult& complete);

/// "<0.001" floor, otherwise three decimals.
std::string format_p(double p);

/// "<0.001", "<0.01", "<0.05" or "n.s.".
std::string significance_class(double p);

enum class StepCriterion { FTest, Aic };

struct StepwiseOptions {
  StepCriterion criterion = StepCriterion::FTest;
  double alpha = 0.05;
};

struct StepCandidate {
  Term term;
  FitResult fit;
  double f_step = 0.0;     // against the current model
  double p_step = 1.0;
  double f_cumulative = 0.0;  // against the complete model
  double p_cumulative = 1.0;
  double aic = 0.0;
  bool eligible = false;
};

struct Step {
  ModelFormula current;
  double current_aic = 0.0;
  std::vector<StepCandidate> candidates;
  std::optional<std::size_t> chosen;
};

struct StepwiseResult {
  FitResult complete;
  FitResult selected;
  std::vector<Step> trace;
};

/// Backward elimination from `complete`. Under the F criterion a term is
/// dropped only when neither the step test nor the cumulative test against the
/// complete model is significant; the least harmful (largest step p) goes
/// first. Under AIC the lowest-AIC removal is taken while it lowers AIC.
StepwiseResult stepwise_refine(const DataTable& table, const ModelFormula& complete,
                               const StepwiseOptions& options = {});

struct ReducedModel {
  std::string removed_variable;
  FitResult fit;
  ModelComparison comparison;
};

/// Removes one whole variable (every term mentioning it) from `fitted`,
/// choosing the removal that costs the least fit. nullopt for intercept-only.
std::optional<ReducedModel> next_reduced_model(const DataTable& table, const FitResult& fitted,
                                               const FitResult& complete);

/// One line of a model-comparison table.
struct ModelRow {
  std::string tag;
  std::string formula;
  double r_squared = 0.0;
  int residual_df = 0;
  std::optional<int> delta_df;  // residual_df(this) - residual_df(line above), positive
  std::optional<double> f;
  std::optional<double> p;
};

ModelRow model_row(const std::string& tag, const FitResult& fit);

/// Fills delta_df / f / p of every row after the first by comparing it with
/// the row above; rows[0] supplies the error variance.
void fill_comparisons(std::vector<ModelRow>& rows);

struct ShareSpec {
  std::string label;
  std::string numerator;   // tag
  std::string subtract;    // tag, empty for none
  std::string denominator; // tag
};

struct Share {
  std::string label;
  std::string definition;  // e.g. "(cm-fm)/cm"
  double fraction = 0.0;
};

/// share = (R2[numerator] - R2[subtract]) / R2[denominator].
std::vector<Share> variance_attribution(const std::vector<ModelRow>& rows, const std::vector<ShareSpec>& specs);

struct Correlation {
  double r = 0.0;
  double r_squared = 0.0;
  std::size_t n = 0;
};

Correlation pearson_r(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace vergescope::stats
