#include "vergescope/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

#include "vergescope/error.hpp"

namespace vergescope::analysis {
namespace {

using stats::DataTable;
using stats::FitResult;
using stats::ModelFormula;
using stats::ModelRow;

const std::vector<std::string> kEnvLevels{"Real", "AR", "VR"};

std::string env_label(Environment e) { return std::string(environment_name(e)); }

// Categorical label for a depth; ordered by diopters so the far target is the reference.
std::string depth_label(double depth_m) { return io::format_double(depth_m) + "m"; }

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? std::nan("") : s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::vector<ShareResult> shares(const std::vector<ModelRow>& rows, const std::vector<stats::ShareSpec>& specs) {
  std::vector<ShareResult> out;
  for (const auto& s : specs) {
    ShareResult r;
    r.label = s.label;
    r.definition = s.subtract.empty() ? s.numerator + "/" + s.denominator
                                      : "(" + s.numerator + "-" + s.subtract + ")/" + s.denominator;
    try {
      r.fraction = stats::variance_attribution(rows, {s}).front().fraction;
    } catch (const Error&) {
      // tag missing (no reduced model) or zero denominator: leave undefined
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<StepSummary> summarize(const stats::StepwiseResult& sr) {
  std::vector<StepSummary> out;
  for (const auto& step : sr.trace) {
    StepSummary s;
    s.current = step.current.to_string();
    if (step.chosen) s.dropped = stats::term_name(step.candidates[*step.chosen].term);
    s.candidates = step.candidates;
    out.push_back(std::move(s));
  }
  return out;
}

// complete -> stepwise fitted -> next reduced model, optional extra complete rows in between
ComparisonTable build_table(const std::string& name, const DataTable& table, const ModelFormula& complete,
                            const std::vector<std::pair<std::string, ModelFormula>>& extra_complete,
                            const std::string& complete_tag, const stats::StepwiseOptions& opt,
                            const std::vector<stats::ShareSpec>& specs) {
  ComparisonTable t;
  t.name = name;
  t.n = table.rows();
  const auto sr = stats::stepwise_refine(table, complete, opt);
  t.rows.push_back(stats::model_row(complete_tag, sr.complete));
  for (const auto& [tag, f] : extra_complete) t.rows.push_back(stats::model_row(tag, stats::ols_fit(table, f)));
  t.rows.push_back(stats::model_row("fm", sr.selected));
  if (const auto rm = stats::next_reduced_model(table, sr.selected, sr.complete))
    t.rows.push_back(stats::model_row("rm", rm->fit));
  fill_rows(t.rows);
  t.fitted = sr.selected;
  t.shares = shares(t.rows, specs);
  t.trace = summarize(sr);
  return t;
}

template <class C>
void normalize_impl(std::vector<C>& cells, const std::vector<calib::ParticipantModel>& models) {
  std::map<ParticipantId, double> intercept;
  for (const auto& m : models)
    if (!m.environment) intercept[m.participant_id] = m.intercept_deg;
  for (auto& c : cells) {
    const auto it = intercept.find(c.participant);
    c.norm_gva_deg = it == intercept.end() ? std::nan("") : c.gva_deg - it->second;
  }
}

io::Json num(double x) { return std::isfinite(x) ? io::Json(io::round_sig(x)) : io::Json(nullptr); }
io::Json opt_num(const std::optional<double>& x) { return x ? num(*x) : io::Json(nullptr); }

io::Json candidate_json(const stats::StepCandidate& c) {
  return {{"term", stats::term_name(c.term)},
          {"f_step", num(c.f_step)},
          {"p_step", num(c.p_step)},
          {"f_cumulative", num(c.f_cumulative)},
          {"p_cumulative", num(c.p_cumulative)},
          {"aic", num(c.aic)},
          {"eligible", c.eligible}};
}

io::Json table_json(const ComparisonTable& t) {
  io::Json rows = io::Json::array();
  for (const auto& r : t.rows)
    rows.push_back({{"model_tag", r.tag},
                    {"formula", r.formula},
                    {"r_squared", num(r.r_squared)},
                    {"res_df", r.residual_df},
                    {"delta_df", r.delta_df ? io::Json(-*r.delta_df) : io::Json(nullptr)},
                    {"f", opt_num(r.f)},
                    {"p", opt_num(r.p)},
                    {"p_text", r.p ? io::Json(stats::format_p(*r.p)) : io::Json(nullptr)},
                    {"significance", r.p ? io::Json(stats::significance_class(*r.p)) : io::Json(nullptr)}});
  io::Json shares = io::Json::array();
  for (const auto& s : t.shares)
    shares.push_back({{"label", s.label}, {"definition", s.definition}, {"fraction", opt_num(s.fraction)}});
  io::Json coefs = io::Json::object();
  for (std::size_t i = 0; i < t.fitted.coefficient_names.size(); ++i)
    coefs[t.fitted.coefficient_names[i]] = num(t.fitted.coefficients[i]);
  io::Json trace = io::Json::array();
  for (const auto& s : t.trace) {
    io::Json cands = io::Json::array();
    for (const auto& c : s.candidates) cands.push_back(candidate_json(c));
    trace.push_back({{"current", s.current},
                     {"dropped", s.dropped ? io::Json(*s.dropped) : io::Json(nullptr)},
                     {"candidates", cands}});
  }
  return {{"name", t.name},
          {"n", t.n},
          {"fitted_tag", t.fitted_tag},
          {"fitted_formula", t.fitted.formula.to_string()},
          {"rows", rows},
          {"shares", shares},
          {"coefficients", coefs},
          {"trace", trace}};
}

}  // namespace

void fill_rows(std::vector<ModelRow>& rows) {
  if (rows.empty()) return;
  const ModelRow& ref = rows.front();
  for (std::size_t i = 1; i < rows.size(); ++i) {
    ModelRow& r = rows[i];
    const int ddf = r.residual_df - rows[i - 1].residual_df;
    r.delta_df = ddf;
    if (ddf <= 0) {
      r.f = 0.0;
      r.p = 1.0;
      continue;
    }
    r.f = stats::f_statistic(r.r_squared, rows[i - 1].r_squared, ddf, ref.r_squared, ref.residual_df);
    r.p = stats::f_p_value(*r.f, ddf, ref.residual_df);
  }
}

std::vector<Cell> end_depth_cells(const std::vector<io::GvaTableRow>& rows) {
  std::map<std::tuple<ParticipantId, int, double>, std::vector<double>> groups;
  for (const auto& r : rows)
    if (r.retained && std::isfinite(r.mean_gva_deg))
      groups[{r.participant_id, static_cast<int>(r.environment), r.end_depth_m}].push_back(r.mean_gva_deg);
  std::vector<Cell> out;
  for (const auto& [key, v] : groups)
    out.push_back({std::get<0>(key), static_cast<Environment>(std::get<1>(key)), std::get<2>(key), mean_of(v),
                   std::nan(""), static_cast<int>(v.size())});
  return out;
}

std::vector<PairCell> pair_cells(const std::vector<io::GvaTableRow>& rows) {
  std::map<std::tuple<ParticipantId, int, double, double>, std::vector<double>> groups;
  for (const auto& r : rows)
    if (r.retained && std::isfinite(r.mean_gva_deg))
      groups[{r.participant_id, static_cast<int>(r.environment), r.end_depth_m, r.start_depth_m}].push_back(
          r.mean_gva_deg);
  std::vector<PairCell> out;
  for (const auto& [key, v] : groups)
    out.push_back({std::get<0>(key), static_cast<Environment>(std::get<1>(key)), std::get<3>(key), std::get<2>(key),
                   mean_of(v), std::nan(""), static_cast<int>(v.size())});
  return out;
}

std::vector<calib::ParticipantModel> fit_models(const std::vector<Cell>& cells, bool per_environment) {
  std::map<ParticipantId, std::vector<calib::DepthGva>> pooled;
  std::map<std::pair<ParticipantId, int>, std::vector<calib::DepthGva>> split;
  for (const auto& c : cells) {
    pooled[c.participant].push_back({1.0 / c.end_depth_m, c.gva_deg});
    split[{c.participant, static_cast<int>(c.environment)}].push_back({1.0 / c.end_depth_m, c.gva_deg});
  }
  std::vector<calib::ParticipantModel> out;
  for (const auto& [id, pts] : pooled) {
    try {
      out.push_back(calib::fit_participant(id, pts));
    } catch (const Error&) {
      continue;  // not enough distinct depths, or a non-positive slope
    }
    if (!per_environment) continue;
    for (const Environment env : kAllEnvironments) {
      const auto it = split.find({id, static_cast<int>(env)});
      if (it == split.end()) continue;
      try {
        out.push_back(calib::fit_participant(id, it->second, env));
      } catch (const Error&) {
      }
    }
  }
  return out;
}

void normalize(std::vector<Cell>& cells, const std::vector<calib::ParticipantModel>& models) {
  normalize_impl(cells, models);
}
void normalize(std::vector<PairCell>& cells, const std::vector<calib::ParticipantModel>& models) {
  normalize_impl(cells, models);
}

std::vector<stats::CellValue> subjective_cells(const std::vector<io::SubjectiveRow>& rows) {
  // reports are averaged in diopters, after conversion to meters
  std::map<std::tuple<ParticipantId, int, double>, std::vector<double>> groups;
  for (const auto& r : rows)
    groups[{r.participant_id, static_cast<int>(r.environment), r.depth_m}].push_back(
        1.0 / stats::unit_to_meters(r.report_value, r.unit));
  std::vector<stats::CellValue> out;
  for (const auto& [key, v] : groups)
    out.push_back({std::get<0>(key), static_cast<Environment>(std::get<1>(key)), std::get<2>(key), mean_of(v)});
  return out;
}

ComparisonTable end_depth_table(const std::vector<Cell>& cells, bool normalized, const stats::StepwiseOptions& opt) {
  const std::string response = normalized ? "NormGVA" : "GVA";
  std::vector<double> y, d;
  std::vector<std::string> env;
  for (const auto& c : cells) {
    const double v = normalized ? c.norm_gva_deg : c.gva_deg;
    if (!std::isfinite(v)) continue;
    y.push_back(v);
    d.push_back(1.0 / c.end_depth_m);
    env.push_back(env_label(c.environment));
  }
  DataTable table;
  table.add_numeric(response, y);
  table.add_numeric("EndDepth", d);
  table.add_categorical("Environment", env, kEnvLevels);
  const auto complete = ModelFormula::parse(response + " ~ EndDepth * Environment");
  // each table keeps its own footer definitions
  const std::vector<stats::ShareSpec> specs =
      normalized ? std::vector<stats::ShareSpec>{{"EndDepth", "rm", "", "fm"}, {"Environment", "fm", "rm", "fm"}}
                 : std::vector<stats::ShareSpec>{{"EndDepth", "fm", "", "cm"}, {"Environment", "cm", "fm", "cm"}};
  return build_table(normalized ? "end_depth_normalized" : "end_depth", table, complete, {}, "cm", opt, specs);
}

ComparisonTable stability_table(const std::vector<PairCell>& cells, bool normalized, const stats::StepwiseOptions& opt) {
  const std::string response = normalized ? "NormGVA" : "GVA";
  std::vector<double> y, sw;
  std::vector<std::string> end, env;
  std::set<double> depths;
  for (const auto& c : cells) {
    const double v = normalized ? c.norm_gva_deg : c.gva_deg;
    if (!std::isfinite(v)) continue;
    y.push_back(v);
    sw.push_back(1.0 / c.start_depth_m);
    end.push_back(depth_label(c.end_depth_m));
    env.push_back(env_label(c.environment));
    depths.insert(c.end_depth_m);
  }
  std::vector<std::string> depth_levels;
  for (auto it = depths.rbegin(); it != depths.rend(); ++it) depth_levels.push_back(depth_label(*it));
  DataTable table;
  table.add_numeric(response, y);
  table.add_numeric("SwitchDepth", sw);
  table.add_categorical("EndDepth", end, depth_levels);
  table.add_categorical("Environment", env, kEnvLevels);
  const auto cm1 = ModelFormula::parse(response + " ~ SwitchDepth * EndDepth * Environment");
  const auto cm2 = cm1.without_variable("SwitchDepth");
  std::vector<stats::ShareSpec> specs{{"SwitchDepth", "cm1", "cm2", "cm1"}};
  if (normalized) {
    specs.insert(specs.begin(), {{"EndDepth", "rm", "", "cm1"}, {"Environment", "cm2", "rm", "cm2"}});
  }
  return build_table(normalized ? "stability_normalized" : "stability", table, cm1, {{"cm2", cm2}}, "cm1", opt, specs);
}

ComparisonTable log_ratio_analysis(const std::vector<stats::LogRatioRow>& rows, const stats::StepwiseOptions& opt) {
  std::vector<double> y, d;
  std::vector<std::string> env, measure;
  for (const auto& r : rows) {
    y.push_back(r.log_ratio);
    d.push_back(1.0 / r.end_depth_m);
    env.push_back(env_label(r.environment));
    measure.push_back(std::string(stats::measure_name(r.measure)));
  }
  DataTable table;
  table.add_numeric("LogRatio", y);
  table.add_numeric("EndDepth", d);
  table.add_categorical("Environment", env, {"AR", "VR"});
  table.add_categorical("Measure", measure, {"GVA", "subjective"});
  const auto complete = ModelFormula::parse("LogRatio ~ EndDepth * Environment * Measure");
  const std::vector<stats::ShareSpec> specs{
      {"Environment", "fm", "rm", "fm"}, {"Measure", "rm", "", "cm"}, {"EndDepth", "cm", "fm", "cm"}};
  return build_table("log_ratio", table, complete, {}, "cm", opt, specs);
}

const ComparisonTable& AnalysisReport::table(const std::string& name) const {
  for (const auto& t : tables)
    if (t.name == name) return t;
  throw Error(ErrorCode::Lookup, "no analysis table '" + name + "'");
}

AnalysisReport run_analysis(const std::vector<io::GvaTableRow>& rows, std::vector<calib::ParticipantModel> models,
                            const std::vector<io::SubjectiveRow>& subjective, const AnalysisOptions& options) {
  AnalysisReport rep;
  rep.options = options;
  rep.trials_total = rows.size();
  for (const auto& r : rows) rep.trials_retained += r.retained ? 1 : 0;
  rep.cells = end_depth_cells(rows);
  if (rep.cells.empty()) throw Error(ErrorCode::Domain, "no retained trials to analyze");
  rep.models = models.empty() ? fit_models(rep.cells) : std::move(models);
  normalize(rep.cells, rep.models);

  // per-participant lines (pooled)
  {
    std::vector<double> a, b;
    for (const auto& m : rep.models)
      if (!m.environment) {
        a.push_back(m.intercept_deg);
        b.push_back(m.slope_deg_per_diopter);
      }
    auto& p = rep.participants;
    p.participants = static_cast<int>(a.size());
    p.intercept_mean = mean_of(a);
    p.intercept_sd = sd_of(a);
    p.slope_mean = mean_of(b);
    p.slope_sd = sd_of(b);
    std::vector<double> y, d;
    std::vector<std::string> who;
    for (const auto& c : rep.cells) {
      y.push_back(c.gva_deg);
      d.push_back(1.0 / c.end_depth_m);
      who.push_back(c.participant);
    }
    DataTable t;
    t.add_numeric("GVA", y);
    t.add_numeric("EndDepth", d);
    t.add_categorical("Participant", who);
    try {
      p.r2_intercepts = stats::ols_fit(t, ModelFormula::parse("GVA ~ Participant")).r_squared;
      p.r2_lines = stats::ols_fit(t, ModelFormula::parse("GVA ~ Participant * EndDepth")).r_squared;
    } catch (const Error&) {
      p.r2_intercepts = p.r2_lines = std::nan("");
    }
  }

  rep.tables.push_back(end_depth_table(rep.cells, false, options.stepwise));
  if (options.normalized) {
    rep.tables.push_back(end_depth_table(rep.cells, true, options.stepwise));
    std::vector<calib::GvaObservation> obs;
    for (const auto& c : rep.cells)
      if (std::isfinite(c.norm_gva_deg))
        obs.push_back({c.participant, c.environment, 1.0 / c.end_depth_m, c.gva_deg, c.norm_gva_deg});
    rep.offsets = calib::environment_offsets(obs);
  }
  if (options.stability) {
    rep.pairs = pair_cells(rows);
    normalize(rep.pairs, rep.models);
    rep.tables.push_back(stability_table(rep.pairs, true, options.stepwise));
    rep.tables.push_back(stability_table(rep.pairs, false, options.stepwise));
  }
  if (options.log_ratio) {
    if (subjective.empty()) throw Error(ErrorCode::Usage, "log-ratio analysis needs subjective reports");
    std::set<ParticipantId> analyzed;
    std::vector<stats::CellValue> gva;
    for (const auto& c : rep.cells) {
      const double v = options.log_ratio_normalized_gva ? c.norm_gva_deg : c.gva_deg;
      if (!std::isfinite(v)) continue;
      gva.push_back({c.participant, c.environment, c.end_depth_m, v});
      analyzed.insert(c.participant);
    }
    std::vector<stats::CellValue> subj;
    for (auto& s : subjective_cells(subjective))
      if (analyzed.count(s.participant)) subj.push_back(std::move(s));
    rep.log_ratios = stats::log_ratio_table(gva, subj);
    rep.tables.push_back(log_ratio_analysis(rep.log_ratios, options.stepwise));
    for (const Environment env : {Environment::AR, Environment::VR})
      for (const auto m : {stats::Measure::Gva, stats::Measure::Subjective}) {
        std::vector<double> v;
        for (const auto& r : rep.log_ratios)
          if (r.environment == env && r.measure == m) v.push_back(r.log_ratio);
        const double mean = mean_of(v);
        rep.log_ratio_means.push_back({env, m, mean, std::exp(mean), static_cast<int>(v.size())});
      }

    // subjective diopters against normalized GVA, per environment
    std::map<std::tuple<ParticipantId, int, double>, double> subj_by;
    for (const auto& s : subj) subj_by[{s.participant, static_cast<int>(s.environment), s.end_depth_m}] = s.value;
    for (const Environment env : kAllEnvironments) {
      std::vector<double> x, y;
      for (const auto& c : rep.cells) {
        if (c.environment != env || !std::isfinite(c.norm_gva_deg)) continue;
        const auto it = subj_by.find({c.participant, static_cast<int>(env), c.end_depth_m});
        if (it == subj_by.end()) continue;
        x.push_back(it->second);
        y.push_back(c.norm_gva_deg);
      }
      rep.correlations.push_back({env, stats::pearson_r(x, y)});
    }
  }
  return rep;
}

io::Json report_to_json(const AnalysisReport& rep) {
  using io::Json;
  Json cells = Json::array();
  for (const auto& c : rep.cells)
    cells.push_back({{"participant_id", c.participant},
                     {"environment", environment_name(c.environment)},
                     {"end_depth_m", num(c.end_depth_m)},
                     {"gva_deg", num(c.gva_deg)},
                     {"norm_gva_deg", num(c.norm_gva_deg)},
                     {"n_trials", c.n_trials}});
  Json pairs = Json::array();
  for (const auto& c : rep.pairs)
    pairs.push_back({{"participant_id", c.participant},
                     {"environment", environment_name(c.environment)},
                     {"start_depth_m", num(c.start_depth_m)},
                     {"end_depth_m", num(c.end_depth_m)},
                     {"gva_deg", num(c.gva_deg)},
                     {"norm_gva_deg", num(c.norm_gva_deg)},
                     {"n_trials", c.n_trials}});
  Json models = Json::array();
  for (const auto& m : rep.models) {
    Json j = io::model_to_json(m);
    for (const char* k : {"intercept_deg", "slope_deg_per_diopter", "residual_sd_deg", "calibrated_diopter_min",
                          "calibrated_diopter_max"})
      if (j[k].is_number()) j[k] = num(j[k].get<double>());
    models.push_back(j);
  }
  const auto& p = rep.participants;
  Json tables = Json::array();
  for (const auto& t : rep.tables) tables.push_back(table_json(t));

  Json out{{"trials", {{"total", rep.trials_total}, {"retained", rep.trials_retained}}},
           {"options",
            {{"normalized", rep.options.normalized},
             {"stability", rep.options.stability},
             {"log_ratio", rep.options.log_ratio},
             {"log_ratio_gva", rep.options.log_ratio_normalized_gva ? "normalized" : "raw"},
             {"criterion", rep.options.stepwise.criterion == stats::StepCriterion::Aic ? "aic" : "f"},
             {"alpha", num(rep.options.stepwise.alpha)}}},
           {"participants",
            {{"count", p.participants},
             {"intercept_mean_deg", num(p.intercept_mean)},
             {"intercept_sd_deg", num(p.intercept_sd)},
             {"slope_mean", num(p.slope_mean)},
             {"slope_sd", num(p.slope_sd)},
             {"r2_participant", num(p.r2_intercepts)},
             {"r2_participant_lines", num(p.r2_lines)}}},
           {"tables", tables}};
  if (rep.offsets) {
    const auto& o = *rep.offsets;
    out["environment_offsets"] = {{"intercepts", {{"Real", num(o.intercepts[0])}, {"AR", num(o.intercepts[1])}, {"VR", num(o.intercepts[2])}}},
                                  {"ar_minus_real", num(o.ar_minus_real)},
                                  {"vr_minus_real", num(o.vr_minus_real)},
                                  {"slope", num(o.slope)}};
  }
  if (rep.options.log_ratio) {
    Json means = Json::array();
    for (const auto& m : rep.log_ratio_means)
      means.push_back({{"environment", environment_name(m.environment)},
                       {"measure", stats::measure_name(m.measure)},
                       {"mean", num(m.mean)},
                       {"ratio", num(m.ratio)},
                       {"n", m.n}});
    out["log_ratio_means"] = means;
    Json corr = Json::array();
    for (const auto& c : rep.correlations)
      corr.push_back({{"environment", environment_name(c.environment)},
                      {"r", num(c.correlation.r)},
                      {"r_squared", num(c.correlation.r_squared)},
                      {"n", c.correlation.n}});
    out["correlations"] = corr;
    Json lr = Json::array();
    for (const auto& r : rep.log_ratios)
      lr.push_back({{"participant_id", r.participant},
                    {"end_depth_m", num(r.end_depth_m)},
                    {"environment", environment_name(r.environment)},
                    {"measure", stats::measure_name(r.measure)},
                    {"log_ratio", num(r.log_ratio)}});
    out["log_ratios"] = lr;
  }
  out["models"] = models;
  out["cells"] = cells;
  if (!rep.pairs.empty()) out["pair_cells"] = pairs;
  return out;
}

}  // namespace vergescope::analysis
