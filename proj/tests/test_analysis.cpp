#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "doctest.h"
#include "vergescope/analysis.hpp"
#include "vergescope/error.hpp"

using namespace vergescope;
using namespace vergescope::analysis;

namespace {

struct Chain {
  synth::Cohort cohort;
  std::vector<io::GvaTableRow> rows;
  std::vector<io::SubjectiveRow> subjective;
};

Chain run_chain(const synth::CohortConfig& cfg, std::uint64_t seed) {
  Chain c;
  c.cohort = synth::simulate_cohort(cfg, seed, 1);
  std::vector<pipeline::TrialRecord> recs;
  for (const auto& t : c.cohort.trials) recs.push_back(t.record);
  const auto out = pipeline::process_trials(recs, {}, 1);
  const auto rep = pipeline::cascade_validity(out);
  c.rows = io::gva_table(out, rep);
  for (const auto& r : c.cohort.subjective)
    c.subjective.push_back({r.participant_id, r.environment, r.depth_m, r.value, r.unit, r.repetition});
  return c;
}

synth::CohortConfig exact_config() {
  synth::CohortConfig cfg;
  cfg.noise = synth::NoiseModel::noiseless();
  cfg.subjective.participant_log_sd = 0.0;
  cfg.subjective.report_log_sd = 0.0;
  cfg.timeout_rate = 0.0;
  return cfg;
}

const Chain& exact_chain() {
  static const Chain c = run_chain(exact_config(), 21);
  return c;
}

const Chain& noisy_chain() {
  static const Chain c = run_chain(synth::CohortConfig{}, 3);
  return c;
}

io::GvaTableRow row(const std::string& p, Environment e, double start, double end, double gva, bool retained = true) {
  io::GvaTableRow r;
  r.participant_id = p;
  r.environment = e;
  r.start_depth_m = start;
  r.end_depth_m = end;
  r.mean_gva_deg = gva;
  r.retained = retained;
  r.trial_valid = retained;
  return r;
}

AnalysisOptions all_options() {
  AnalysisOptions o;
  o.normalized = o.stability = o.log_ratio = true;
  return o;
}

}  // namespace

TEST_CASE("cells average retained finite trials only") {
  std::vector<io::GvaTableRow> rows{
      row("A", Environment::Real, 4.0, 0.25, 10.0), row("A", Environment::Real, 1.5, 0.25, 12.0),
      row("A", Environment::Real, 0.75, 0.25, 100.0, false), row("A", Environment::Real, 0.75, 0.25, std::nan("")),
      row("A", Environment::AR, 0.25, 4.0, 3.0)};
  const auto cells = end_depth_cells(rows);
  REQUIRE(cells.size() == 2);
  const auto& real = cells[0].environment == Environment::Real ? cells[0] : cells[1];
  CHECK(real.gva_deg == 11.0);
  CHECK(real.n_trials == 2);
  CHECK(std::isnan(real.norm_gva_deg));
  const auto pairs = pair_cells(rows);
  CHECK(pairs.size() == 3);
}

TEST_CASE("models are fitted from cell means and normalize by the pooled intercept") {
  std::vector<io::GvaTableRow> rows;
  // A: GVA = 10 + 2 D in Real, +1 in AR
  for (double d : {0.25, 0.75, 1.5, 4.0}) {
    rows.push_back(row("A", Environment::Real, 1.0, d, 10.0 + 2.0 / d));
    rows.push_back(row("A", Environment::AR, 1.0, d, 11.0 + 2.0 / d));
  }
  auto cells = end_depth_cells(rows);
  const auto models = fit_models(cells);
  REQUIRE(models.size() == 3);
  const auto& pooled = calib::select_model(models, "A", std::nullopt);
  CHECK(pooled.intercept_deg == doctest::Approx(10.5).epsilon(1e-12));
  CHECK(pooled.slope_deg_per_diopter == doctest::Approx(2.0).epsilon(1e-12));
  const auto& ar = calib::select_model(models, "A", Environment::AR);
  CHECK(ar.intercept_deg == doctest::Approx(11.0).epsilon(1e-12));
  normalize(cells, models);
  for (const auto& c : cells) CHECK(c.norm_gva_deg == doctest::Approx(c.gva_deg - 10.5).epsilon(1e-12));
  CHECK(fit_models(cells, false).size() == 1);
}

TEST_CASE("comparison rows tolerate a fitted model equal to the complete one") {
  std::vector<stats::ModelRow> rows(2);
  rows[0].tag = "cm";
  rows[0].r_squared = 0.8;
  rows[0].residual_df = 150;
  rows[1].tag = "fm";
  rows[1].r_squared = 0.8;
  rows[1].residual_df = 150;
  fill_rows(rows);
  CHECK(rows[1].f.value() == 0.0);
  CHECK(rows[1].p.value() == 1.0);
  CHECK(rows[1].delta_df.value() == 0);
}

TEST_CASE("zero-noise chain reproduces the configured parameters") {
  const auto& ch = exact_chain();
  const auto rep = run_analysis(ch.rows, {}, ch.subjective, all_options());
  CHECK(rep.trials_retained == rep.trials_total);

  // pooled line per participant equals the implied line
  for (const auto& p : ch.cohort.participants) {
    const auto& m = calib::select_model(rep.models, p.physiology.id, std::nullopt);
    CHECK(std::abs(m.intercept_deg - p.intercept_implied) < 1e-9);
    CHECK(std::abs(m.slope_deg_per_diopter - p.slope_implied) < 1e-9);
  }

  REQUIRE(rep.offsets.has_value());
  CHECK(std::abs(rep.offsets->ar_minus_real - (-0.8)) < 1e-9);
  CHECK(std::abs(rep.offsets->vr_minus_real - (-1.3)) < 1e-9);

  // subjective factors come back exactly as log ratios
  for (const auto& m : rep.log_ratio_means) {
    if (m.measure != stats::Measure::Subjective) continue;
    const double want = std::log(m.environment == Environment::AR ? 1.17 : 1.377);
    CHECK(std::abs(m.mean - want) < 1e-9);
  }

  // start depth has no effect once settled
  const auto& st = rep.table("stability_normalized");
  const auto it = std::find_if(st.shares.begin(), st.shares.end(), [](auto& s) { return s.label == "SwitchDepth"; });
  REQUIRE(it != st.shares.end());
  CHECK(std::abs(it->fraction.value()) < 1e-9);
  CHECK(st.fitted.formula.to_string().find("SwitchDepth") == std::string::npos);
}

TEST_CASE("normalized table is invariant to per-participant intercept shifts") {
  const auto& ch = exact_chain();
  auto shifted = ch.rows;
  std::map<std::string, double> shift;
  double k = 0.0;
  for (const auto& p : ch.cohort.participants) shift[p.physiology.id] = (k += 3.7);
  for (auto& r : shifted) r.mean_gva_deg += shift[r.participant_id];
  AnalysisOptions o;
  o.normalized = true;
  const auto a = run_analysis(ch.rows, {}, {}, o).table("end_depth_normalized");
  const auto b = run_analysis(shifted, {}, {}, o).table("end_depth_normalized");
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].formula == b.rows[i].formula);
    CHECK(a.rows[i].r_squared == doctest::Approx(b.rows[i].r_squared).epsilon(1e-9));
  }
}

TEST_CASE("table shapes on the default cohort") {
  const auto& ch = noisy_chain();
  const auto rep = run_analysis(ch.rows, {}, ch.subjective, all_options());

  const auto& raw = rep.table("end_depth");
  CHECK(raw.n == 156);
  REQUIRE(raw.rows.size() == 3);
  CHECK(raw.rows[0].tag == "cm");
  CHECK(raw.rows[0].residual_df == 150);
  CHECK(raw.rows[1].tag == "fm");
  CHECK(raw.rows[1].formula == "GVA ~ EndDepth");
  CHECK(raw.rows[1].residual_df == 154);
  CHECK(raw.rows[2].tag == "rm");
  CHECK(raw.rows[2].residual_df == 155);
  REQUIRE(raw.shares.size() == 2);
  CHECK(raw.shares[0].definition == "fm/cm");
  CHECK(raw.shares[1].definition == "(cm-fm)/cm");
  CHECK(raw.shares[0].fraction.value() + raw.shares[1].fraction.value() == doctest::Approx(1.0));

  const auto& norm = rep.table("end_depth_normalized");
  CHECK(norm.rows[1].formula == "NormGVA ~ EndDepth + Environment");
  CHECK(norm.rows[1].residual_df == 152);
  CHECK(norm.shares[0].definition == "rm/fm");
  CHECK(norm.shares[1].definition == "(fm-rm)/fm");
  CHECK(norm.rows[1].r_squared > raw.rows[1].r_squared);

  const auto& stab = rep.table("stability_normalized");
  CHECK(stab.rows[0].tag == "cm1");
  CHECK(stab.rows[1].tag == "cm2");
  CHECK(stab.rows[0].residual_df + 24 == static_cast<int>(stab.n));
  CHECK(stab.shares.size() == 3);
  const auto& stab_raw = rep.table("stability");
  CHECK(stab_raw.shares.size() == 1);
  CHECK(stab_raw.shares[0].label == "SwitchDepth");

  CHECK(rep.log_ratios.size() == 208);
  const auto& lr = rep.table("log_ratio");
  CHECK(lr.n == 208);
  CHECK(lr.rows[0].residual_df == 200);
  for (const auto& m : rep.log_ratio_means) {
    if (m.measure == stats::Measure::Subjective && m.environment == Environment::AR)
      CHECK(m.mean == doctest::Approx(0.16).epsilon(0.2));
    CHECK(m.ratio == doctest::Approx(std::exp(m.mean)));
    CHECK(m.n == 52);
  }
  CHECK(rep.correlations.size() == 3);
  for (const auto& c : rep.correlations) CHECK(c.correlation.n == 52);
  CHECK(rep.participants.participants == 13);
  CHECK(rep.participants.r2_lines > rep.participants.r2_intercepts);
}

TEST_CASE("report JSON is deterministic and rounded") {
  const auto& ch = noisy_chain();
  const auto a = report_to_json(run_analysis(ch.rows, {}, ch.subjective, all_options())).dump();
  const auto b = report_to_json(run_analysis(ch.rows, {}, ch.subjective, all_options())).dump();
  CHECK(a == b);
  const auto j = io::Json::parse(a);
  const double r2 = j.at("tables").at(0).at("rows").at(0).at("r_squared").get<double>();
  CHECK(r2 == io::round_sig(r2, 9));
  CHECK(j.at("tables").at(0).at("rows").at(1).at("delta_df").get<int>() < 0);
}

TEST_CASE("analysis input errors") {
  CHECK_THROWS_AS(run_analysis({}, {}, {}, {}), Error);
  const auto& ch = exact_chain();
  AnalysisOptions o;
  o.log_ratio = true;
  CHECK_THROWS_AS(run_analysis(ch.rows, {}, {}, o), Error);
  CHECK_THROWS_AS(run_analysis(ch.rows, {}, {}, {}).table("nope"), Error);
}
