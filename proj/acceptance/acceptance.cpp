// Acceptance run: one PASS/FAIL line per criterion.
//
// Exit status is nonzero when a criterion fails, unless it is one of the
// known limitations listed in kKnownLimitations (those still print FAIL).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "vergescope/analysis.hpp"
#include "vergescope/error.hpp"
#include "vergescope/geometry.hpp"

#ifndef VERGESCOPE_CLI
#error "VERGESCOPE_CLI must point at the vergescope binary"
#endif

using namespace vergescope;
namespace fs = std::filesystem;

namespace {

// r = .624 squares to 38.9%, not the printed 39.0%; a linear line in
// diopters cannot invert the arctan geometry to 0.1% at the far depths.
const std::set<int> kKnownLimitations{4, 8};

struct Verdict {
  bool pass = true;
  std::ostringstream detail;
  std::string failures;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      failures += " [" + what + "]";
    }
  }
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

double round_to(double v, int decimals) {
  const double s = std::pow(10.0, decimals);
  return std::round(v * s) / s;
}

// ---------------------------------------------------------------- 1

Verdict geometry_oracle() {
  Verdict v;
  const auto t0 = Clock::now();
  const double ipd = 0.0648;
  const std::pair<double, double> printed[] = {{0.25, 14.768}, {0.75, 4.948}, {1.5, 2.475}, {4.0, 0.928}};
  double worst = 0.0;
  for (const auto& [depth, want] : printed) {
    // rays from each eye centre to a midline target; angle via atan2(|l x r|, l.r)
    const double lx = ipd / 2, lz = depth, rx = -ipd / 2, rz = depth;
    const double cross = std::abs(lx * rz - lz * rx), dot = lx * rx + lz * rz;
    const double brute = std::atan2(cross, dot) * 180.0 / std::numbers::pi;
    const double got = ideal_vergence(depth, ipd);
    worst = std::max(worst, std::abs(got - brute));
    v.require(std::abs(got - brute) < 1e-6, "oracle mismatch at " + fmt("%g m", depth));
    // the listed values carry 3 decimals but are not all correctly rounded
    v.require(std::abs(got - want) < 1e-3, fmt("%g m", depth) + " gives " + fmt("%.4f", got));
  }
  const double dt = seconds_since(t0);
  v.require(dt < 1.0, "runtime");
  v.detail << "ideal";
  for (const auto& [depth, want] : printed) v.detail << " " << fmt("%.4f", ideal_vergence(depth, ipd));
  v.detail << "; max |ideal - brute| = " << fmt("%.1e", worst) << " deg, " << fmt("%.4f s", dt);
  return v;
}

// ---------------------------------------------------------------- 2, 3

struct FCase {
  double rs, rl;
  int ddf;
  double rc;
  int dfc;
  double printed_f;
  const char* printed_class;
};

Verdict f_tables() {
  Verdict v;
  const auto t0 = Clock::now();
  const FCase cases[] = {
      {0.0, 0.0839, 1, 0.0876, 150, 13.8, "<0.001"},   {0.0839, 0.0876, 4, 0.0876, 150, 0.2, "n.s."},
      {0.6513, 0.6772, 2, 0.6797, 150, 6.1, "<0.01"},  {0.6772, 0.6797, 2, 0.6797, 150, 0.6, "n.s."},
      {0.5828, 0.6066, 2, 0.6188, 441, 13.8, "<0.001"}, {0.6066, 0.6135, 6, 0.6188, 441, 1.3, "n.s."},
      {0.6135, 0.6188, 12, 0.6188, 441, 0.5, "n.s."},  {0.1736, 0.2000, 2, 0.2010, 200, 3.3, "<0.05"},
      {0.2000, 0.2010, 4, 0.2010, 200, 0.1, "n.s."},
  };
  double worst = 0.0;
  for (const auto& c : cases) {
    const double f = stats::f_statistic(c.rs, c.rl, c.ddf, c.rc, c.dfc);
    const auto cls = stats::significance_class(stats::f_p_value(f, c.ddf, c.dfc));
    worst = std::max(worst, std::abs(f - c.printed_f));
    v.require(std::abs(f - c.printed_f) <= 0.1, "F " + fmt("%.2f", f) + " vs " + fmt("%.1f", c.printed_f));
    v.require(cls == c.printed_class, "class " + cls + " vs " + c.printed_class);
  }
  const double dt = seconds_since(t0);
  v.require(dt < 1.0, "runtime");
  v.detail << std::size(cases) << " comparisons, max |F - printed| = " << fmt("%.3f", worst) << ", "
           << fmt("%.4f s", dt);
  return v;
}

Verdict footers() {
  Verdict v;
  using stats::ModelRow;
  auto rows = [](std::vector<std::pair<const char*, std::pair<double, int>>> spec) {
    std::vector<ModelRow> out;
    for (const auto& [tag, rd] : spec) out.push_back({tag, "", rd.first, rd.second, {}, {}, {}});
    return out;
  };
  struct Footer {
    std::vector<ModelRow> rows;
    std::vector<stats::ShareSpec> specs;
    std::vector<double> printed;
  };
  const std::vector<Footer> figs{
      {rows({{"cm", {0.0876, 150}}, {"fm", {0.0839, 154}}, {"rm", {0.0, 155}}}),
       {{"EndDepth", "fm", "", "cm"}, {"Environment", "cm", "fm", "cm"}},
       {95.8, 4.2}},
      {rows({{"cm", {0.6797, 150}}, {"fm", {0.6772, 152}}, {"rm", {0.6513, 154}}}),
       {{"EndDepth", "rm", "", "fm"}, {"Environment", "fm", "rm", "fm"}},
       {96.2, 3.8}},
      {rows({{"cm1", {0.6188, 441}}, {"cm2", {0.6135, 453}}, {"fm", {0.6066, 459}}, {"rm", {0.5828, 461}}}),
       {{"EndDepth", "rm", "", "cm1"}, {"Environment", "cm2", "rm", "cm2"}, {"SwitchDepth", "cm1", "cm2", "cm1"}},
       {94.2, 5.0, 0.9}},
      {rows({{"cm", {0.2010, 200}}, {"fm", {0.2000, 204}}, {"rm", {0.1736, 206}}}),
       {{"Measure", "rm", "", "cm"}, {"Environment", "fm", "rm", "fm"}, {"EndDepth", "cm", "fm", "cm"}},
       {86.4, 13.2, 0.5}},
  };
  std::string got;
  for (const auto& f : figs) {
    const auto shares = stats::variance_attribution(f.rows, f.specs);
    for (std::size_t i = 0; i < shares.size(); ++i) {
      const double pct = round_to(100.0 * shares[i].fraction, 1);
      got += (got.empty() ? "" : " ") + fmt("%.1f", pct);
      v.require(pct == f.printed[i], shares[i].label + " " + fmt("%.1f", pct) + " vs " + fmt("%.1f", f.printed[i]));
    }
    got += " |";
  }
  got.pop_back();
  v.detail << got;
  return v;
}

// ---------------------------------------------------------------- 4

Verdict log_ratio_arithmetic() {
  Verdict v;
  // compared at the precision each value is printed with
  struct Exp {
    double x, printed;
    int decimals;
  };
  for (const auto& e : {Exp{0.16, 1.17, 2}, Exp{0.32, 1.377, 3}, Exp{-0.03, 0.9704, 4}, Exp{-0.05, 0.9512, 4}}) {
    const double got = round_to(std::exp(e.x), e.decimals);
    v.detail << "e^" << e.x << "=" << fmt("%.4f", std::exp(e.x)) << "  ";
    v.require(got == e.printed, "e^" + fmt("%g", e.x) + " = " + fmt("%.4f", std::exp(e.x)));
  }
  for (const auto& [r, printed] : {std::pair{0.624, 39.0}, std::pair{0.762, 58.1}, std::pair{0.506, 25.6}}) {
    const double pct = round_to(100.0 * r * r, 1);
    v.detail << fmt("%.3f", r) << "->" << fmt("%.1f%%", pct) << "  ";
    v.require(pct == printed, fmt("%.3f", r) + " squares to " + fmt("%.2f%%", 100.0 * r * r) + ", printed " +
                                  fmt("%.1f%%", printed));
  }
  return v;
}

// ---------------------------------------------------------------- 5, 6, 8

struct SeedRun {
  std::uint64_t seed = 0;
  std::size_t trials = 0;
  double seconds = 0.0;
  analysis::AnalysisReport report;
};

std::vector<io::GvaTableRow> pipeline_rows(const synth::Cohort& cohort) {
  std::vector<pipeline::TrialRecord> recs;
  recs.reserve(cohort.trials.size());
  for (const auto& t : cohort.trials) recs.push_back(t.record);
  const auto out = pipeline::process_trials(recs);
  return io::gva_table(out, pipeline::cascade_validity(out));
}

const std::vector<SeedRun>& seed_runs() {
  static const std::vector<SeedRun> runs = [] {
    std::vector<SeedRun> v;
    analysis::AnalysisOptions opt;
    opt.normalized = opt.stability = true;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const auto t0 = Clock::now();
      const auto cohort = synth::simulate_cohort(synth::CohortConfig{}, seed);
      SeedRun r;
      r.seed = seed;
      r.trials = cohort.trials.size();
      r.report = analysis::run_analysis(pipeline_rows(cohort), {}, {}, opt);
      r.seconds = seconds_since(t0);
      v.push_back(std::move(r));
    }
    return v;
  }();
  return runs;
}

Verdict synthetic_replication() {
  Verdict v;
  const auto& runs = seed_runs();
  const std::map<std::string, std::string> expected{{"end_depth", "GVA ~ EndDepth"},
                                                    {"end_depth_normalized", "NormGVA ~ EndDepth + Environment"},
                                                    {"stability", "GVA ~ EndDepth"},
                                                    {"stability_normalized", "NormGVA ~ EndDepth + Environment"}};
  std::map<std::string, int> hits;
  double ar = 0.0, vr = 0.0, slowest = 0.0;
  for (const auto& r : runs) {
    v.require(r.trials == 2808, "seed " + std::to_string(r.seed) + " has " + std::to_string(r.trials) + " trials");
    slowest = std::max(slowest, r.seconds);
    for (const auto& [name, formula] : expected) {
      const auto got = r.report.table(name).fitted.formula.to_string();
      if (got == formula) {
        ++hits[name];
      } else {
        v.require(false, "seed " + std::to_string(r.seed) + " " + name + " selected " + got);
      }
    }
    ar += r.report.offsets->ar_minus_real;
    vr += r.report.offsets->vr_minus_real;
  }
  ar /= static_cast<double>(runs.size());
  vr /= static_cast<double>(runs.size());
  v.require(std::abs(ar + 0.8) <= 0.3, "AR offset " + fmt("%.3f", ar));
  v.require(std::abs(vr + 1.3) <= 0.3, "VR offset " + fmt("%.3f", vr));
  v.require(slowest < 60.0, "runtime");
  v.detail << runs.size() << " seeds; selected as expected: raw " << hits["end_depth"] << "/20, normalized "
           << hits["end_depth_normalized"] << "/20, stability raw " << hits["stability"] << "/20, stability normalized "
           << hits["stability_normalized"] << "/20; mean offsets AR " << fmt("%.3f", ar) << " VR " << fmt("%.3f", vr)
           << "; slowest cohort " << fmt("%.2f s", slowest);
  return v;
}

Verdict vergence_stability() {
  Verdict v;
  double worst = 0.0;
  int retained = 0;
  for (const auto& r : seed_runs())
    for (const char* name : {"stability_normalized", "stability"}) {
      const auto& t = r.report.table(name);
      for (const auto& s : t.shares)
        if (s.label == "SwitchDepth" && s.fraction) worst = std::max(worst, *s.fraction);
      if (t.fitted.formula.to_string().find("SwitchDepth") != std::string::npos) ++retained;
    }
  v.require(worst < 0.02, "share " + fmt("%.2f%%", 100 * worst));
  v.require(retained == 0, std::to_string(retained) + " fits kept SwitchDepth");
  v.detail << "max SwitchDepth share " << fmt("%.3f%%", 100 * worst) << " over 20 seeds x 2 tables, retained "
           << retained << " times";
  return v;
}

Verdict calibration_round_trip() {
  Verdict v;
  // noiseless: line recovery and inversion at the four depths
  synth::CohortConfig cfg;
  cfg.noise = synth::NoiseModel::noiseless();
  double worst_line = 0.0;
  std::map<double, double> worst_depth;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto cohort = synth::simulate_cohort(cfg, seed);
    auto cells = analysis::end_depth_cells(pipeline_rows(cohort));
    for (const auto& p : cohort.participants) {
      std::vector<calib::DepthGva> pts;
      for (const auto& c : cells)
        if (c.participant == p.physiology.id) pts.push_back({1.0 / c.end_depth_m, c.gva_deg});
      const auto m = calib::fit_participant(p.physiology.id, pts);
      worst_line = std::max({worst_line, std::abs(m.intercept_deg - p.intercept_implied),
                             std::abs(m.slope_deg_per_diopter - p.slope_implied)});
    }
    const auto models = analysis::fit_models(cells);
    for (const auto& c : cells) {
      const auto& m = calib::select_model(models, c.participant, c.environment);
      const double rel = std::abs(calib::estimate_depth(c.gva_deg, m).meters / c.end_depth_m - 1.0);
      worst_depth[c.end_depth_m] = std::max(worst_depth[c.end_depth_m], rel);
    }
  }
  v.require(worst_line < 1e-9, "line recovery " + fmt("%.1e", worst_line));
  for (const auto& [d, e] : worst_depth) v.require(e < 1e-3, fmt("%g m", d) + " off by " + fmt("%.3f%%", 100 * e));

  // default noise: per-environment lines, cell means at the extreme depths
  double near = 0.0, far = 0.0;
  for (const auto& r : seed_runs())
    for (const auto& c : r.report.cells) {
      if (c.end_depth_m != 0.25 && c.end_depth_m != 4.0) continue;
      const auto& m = calib::select_model(r.report.models, c.participant, c.environment);
      double rel = INFINITY;
      try {
        rel = std::abs(calib::estimate_depth(c.gva_deg, m).meters / c.end_depth_m - 1.0);
      } catch (const Error&) {
      }
      (c.end_depth_m == 0.25 ? near : far) = std::max(c.end_depth_m == 0.25 ? near : far, rel);
    }
  v.require(near <= 0.02, "0.25 m noisy error " + fmt("%.2f%%", 100 * near));
  v.require(far <= 0.35, "4 m noisy error " + fmt("%.2f%%", 100 * far));
  v.detail << "noiseless line error " << fmt("%.1e", worst_line) << "; noiseless depth error";
  for (const auto& [d, e] : worst_depth) v.detail << " " << fmt("%g m", d) << " " << fmt("%.3f%%", 100 * e);
  v.detail << "; noisy envelope 0.25 m " << fmt("%.2f%%", 100 * near) << ", 4 m " << fmt("%.1f%%", 100 * far);
  return v;
}

// ---------------------------------------------------------------- 7

pipeline::TrialOutcome outcome(const std::string& p, Environment env, double s, double e, bool valid) {
  pipeline::TrialOutcome o;
  o.participant_id = p;
  o.environment = env;
  o.start_depth_m = s;
  o.end_depth_m = e;
  o.valid = valid;
  o.counts.valid = 1;
  return o;
}

// 12 pairs x 6 trials; the first `good_pairs` pairs get `good_trials` valid trials, the rest 2
void add_environment(std::vector<pipeline::TrialOutcome>& v, const std::string& p, Environment env, int good_pairs,
                     int good_trials) {
  int pair = 0;
  for (double s : {0.25, 0.75, 1.5, 4.0})
    for (double e : {0.25, 0.75, 1.5, 4.0}) {
      if (s == e) continue;
      const int good = pair < good_pairs ? good_trials : 2;
      for (int k = 0; k < 6; ++k) v.push_back(outcome(p, env, s, e, k < good));
      ++pair;
    }
}

Verdict filter_scoring() {
  Verdict v;
  synth::CohortConfig cfg;
  cfg.noise = synth::NoiseModel::noiseless();
  cfg.design.participants = 3;
  cfg.noise.dropout_rate = 0.14;
  cfg.noise.spike_rate = 0.01;
  cfg.noise.outlier_rate = 0.005;
  auto cohort = synth::simulate_cohort(cfg, 17);
  std::size_t tagged[3] = {0, 0, 0}, hits[3] = {0, 0, 0}, flagged[3] = {0, 0, 0};
  for (auto& t : cohort.trials) {
    pipeline::process_trial(t.record);
    std::map<std::size_t, int> truth;
    for (const auto& a : t.artifacts) truth[a.sample_index] = static_cast<int>(a.kind);
    for (std::size_t i = 0; i < t.record.samples.size(); ++i) {
      int got = -1;
      switch (t.record.samples[i].status) {
        case pipeline::SampleStatus::LowConfidence: got = 0; break;
        case pipeline::SampleStatus::VelocitySpike: got = 1; break;
        case pipeline::SampleStatus::Outlier: got = 2; break;
        default: break;
      }
      const auto it = truth.find(i);
      const int want = it == truth.end() ? -1 : it->second;
      if (want >= 0) ++tagged[want];
      if (got >= 0) ++flagged[got];
      if (want >= 0 && want == got) ++hits[want];
    }
  }
  const char* names[] = {"confidence", "velocity", "outlier"};
  for (int k = 0; k < 3; ++k) {
    const double precision = flagged[k] ? static_cast<double>(hits[k]) / flagged[k] : 0.0;
    const double recall = tagged[k] ? static_cast<double>(hits[k]) / tagged[k] : 0.0;
    v.require(precision == 1.0 && recall == 1.0, std::string(names[k]) + " P=" + fmt("%.4f", precision) +
                                                     " R=" + fmt("%.4f", recall));
    v.detail << names[k] << " " << hits[k] << "/" << tagged[k] << " ";
  }

  synth::CohortConfig clean;
  clean.noise = synth::NoiseModel::noiseless();
  clean.design.participants = 2;
  const auto quiet = synth::simulate_cohort(clean, 3);
  std::vector<pipeline::TrialRecord> recs;
  for (const auto& t : quiet.trials) recs.push_back(t.record);
  const auto rep = pipeline::cascade_validity(pipeline::process_trials(recs));
  v.require(rep.totals.excluded() == 0, std::to_string(rep.totals.excluded()) + " clean samples excluded");
  v.detail << "| clean samples excluded " << rep.totals.excluded();

  // gate edges: 3 of 6 trials, 6 of 12 pairs, 3 of 3 environments
  std::vector<pipeline::TrialOutcome> o;
  for (auto env : kAllEnvironments) add_environment(o, "edge", env, 6, 3);
  add_environment(o, "short_pairs", Environment::Real, 12, 6);
  add_environment(o, "short_pairs", Environment::AR, 12, 6);
  add_environment(o, "short_pairs", Environment::VR, 5, 6);
  add_environment(o, "two_envs", Environment::Real, 12, 6);
  add_environment(o, "two_envs", Environment::AR, 12, 6);
  const auto gates = pipeline::cascade_validity(o);
  bool pair_edges = gates.pair_valid({"edge", Environment::AR, 0.25, 0.75}) &&
                    !gates.pair_valid({"edge", Environment::AR, 4.0, 1.5});
  v.require(pair_edges, "pair gate");
  v.require(gates.participant_retained("edge"), "6/12 environment gate");
  v.require(!gates.participant_retained("short_pairs"), "5/12 environment gate");
  v.require(!gates.participant_retained("two_envs"), "participant gate");
  v.detail << " | gate edges " << (v.failures.find("gate") == std::string::npos ? "ok" : "broken");
  return v;
}

// ---------------------------------------------------------------- 9

// Independent treatment-coded design for y ~ a * g + b; columns named like the library's.
std::map<std::string, std::vector<double>> oracle_columns(const std::vector<double>& a, const std::vector<double>& b,
                                                          const std::vector<int>& g) {
  const std::size_t n = a.size();
  std::map<std::string, std::vector<double>> cols;
  cols["(Intercept)"] = std::vector<double>(n, 1.0);
  cols["a"] = a;
  cols["b"] = b;
  for (int lvl = 1; lvl <= 2; ++lvl) {
    const std::string name = "gL" + std::to_string(lvl);
    std::vector<double> d(n), ad(n);
    for (std::size_t i = 0; i < n; ++i) {
      d[i] = g[i] == lvl ? 1.0 : 0.0;
      ad[i] = d[i] * a[i];
    }
    cols[name] = d;
    cols["a:" + name] = ad;
  }
  return cols;
}

std::vector<double> solve_normal(const std::vector<std::vector<double>>& x, const std::vector<double>& y) {
  const std::size_t p = x.size(), n = y.size();
  std::vector<std::vector<double>> m(p, std::vector<double>(p + 1, 0.0));
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < p; ++j)
      for (std::size_t r = 0; r < n; ++r) m[i][j] += x[i][r] * x[j][r];
    for (std::size_t r = 0; r < n; ++r) m[i][p] += x[i][r] * y[r];
  }
  for (std::size_t c = 0; c < p; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < p; ++r)
      if (std::abs(m[r][c]) > std::abs(m[piv][c])) piv = r;
    std::swap(m[c], m[piv]);
    for (std::size_t r = 0; r < p; ++r) {
      if (r == c) continue;
      const double f = m[r][c] / m[c][c];
      for (std::size_t k = c; k <= p; ++k) m[r][k] -= f * m[c][k];
    }
  }
  std::vector<double> out(p);
  for (std::size_t i = 0; i < p; ++i) out[i] = m[i][p] / m[i][i];
  return out;
}

Verdict statistics_core() {
  Verdict v;
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> size(15, 40), level(0, 2);
  const std::vector<std::string> levels{"L0", "L1", "L2"};

  auto random_table = [&](int n, std::vector<double>& a, std::vector<double>& b, std::vector<int>& codes) {
    a.resize(n);
    b.resize(n);
    codes.resize(n);
    std::vector<double> y(n);
    std::vector<std::string> gs(n);
    const double ca = g(rng), cb = g(rng), cg1 = g(rng), cg2 = g(rng), cag = g(rng);
    for (int i = 0; i < n; ++i) {
      a[i] = g(rng);
      b[i] = g(rng);
      codes[i] = i < 3 ? i : level(rng);  // every level present
      gs[i] = levels[codes[i]];
      y[i] = 1.0 + ca * a[i] + cb * b[i] + (codes[i] == 1 ? cg1 + cag * a[i] : 0.0) + (codes[i] == 2 ? cg2 : 0.0) +
             g(rng);
    }
    stats::DataTable t;
    t.add_numeric("a", a);
    t.add_numeric("b", b);
    t.add_categorical("g", gs, levels);
    t.add_numeric("y", y);
    return std::make_pair(t, y);
  };

  // OLS against the normal equations
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    std::vector<double> a, b;
    std::vector<int> codes;
    auto [table, y] = random_table(size(rng), a, b, codes);
    const auto fit = stats::ols_fit(table, stats::ModelFormula::parse("y ~ a * g + b"));
    const auto cols = oracle_columns(a, b, codes);
    std::vector<std::vector<double>> x;
    for (const auto& name : fit.coefficient_names) x.push_back(cols.at(name));
    const auto ref = solve_normal(x, y);
    for (std::size_t i = 0; i < ref.size(); ++i)
      worst = std::max(worst, std::abs(fit.coefficients[i] - ref[i]) / std::max(1.0, std::abs(ref[i])));
  }
  v.require(worst < 1e-8, "OLS differs by " + fmt("%.1e", worst));

  // R2 monotone along random nested chains
  int pairs = 0, violations = 0;
  while (pairs < 1000) {
    std::vector<double> a, b;
    std::vector<int> codes;
    auto [table, y] = random_table(size(rng) + 10, a, b, codes);
    std::vector<stats::FitResult> chain{stats::ols_fit(table, stats::ModelFormula::parse("y ~ a * b * g"))};
    while (true) {
      const auto drop = chain.back().formula.droppable_terms();
      if (drop.empty()) break;
      std::uniform_int_distribution<std::size_t> pick(0, drop.size() - 1);
      chain.push_back(stats::ols_fit(table, chain.back().formula.without(drop[pick(rng)])));
    }
    for (std::size_t i = 0; i + 1 < chain.size() && pairs < 1000; ++i)
      for (std::size_t j = i + 1; j < chain.size() && pairs < 1000; ++j, ++pairs)
        if (chain[j].r_squared > chain[i].r_squared + 1e-12) ++violations;
  }
  v.require(violations == 0, std::to_string(violations) + " R2 monotonicity violations");

  // stepwise keeps marginality on random lattices
  const char* completes[] = {"y ~ a * b * g", "y ~ a * g + b", "y ~ a * b + g", "y ~ a + b * g", "y ~ a + b + g"};
  int runs = 0, broken = 0;
  for (int k = 0; k < 60; ++k) {
    std::vector<double> a, b;
    std::vector<int> codes;
    auto [table, y] = random_table(size(rng) + 20, a, b, codes);
    for (auto crit : {stats::StepCriterion::FTest, stats::StepCriterion::Aic}) {
      const auto r = stats::stepwise_refine(table, stats::ModelFormula::parse(completes[k % 5]), {crit, 0.05});
      ++runs;
      bool ok = r.selected.formula.satisfies_marginality();
      for (const auto& step : r.trace) ok = ok && step.current.satisfies_marginality();
      broken += ok ? 0 : 1;
    }
  }
  v.require(broken == 0, std::to_string(broken) + " stepwise runs broke marginality");
  v.detail << "OLS max rel diff " << fmt("%.1e", worst) << " over 100 fits; " << pairs << " nested pairs, "
           << violations << " violations; " << runs << " stepwise runs, " << broken << " marginality breaks";
  return v;
}

// ---------------------------------------------------------------- 10

int run(const std::string& args) {
  const std::string cmd = std::string("\"") + VERGESCOPE_CLI + "\" " + args + " > /dev/null 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

Verdict determinism() {
  Verdict v;
  const fs::path root = fs::temp_directory_path() / ("vergescope_acceptance_" + std::to_string(std::random_device{}()));
  fs::create_directories(root);
  synth::CohortConfig cfg;
  cfg.design.participants = 4;
  cfg.design.repetitions = 3;
  io::write_json_file(root / "design.json", io::config_to_json(cfg));
  auto q = [](const fs::path& p) { return "\"" + p.string() + "\""; };

  const char* outputs[] = {"ds/ledger.json",        "ds/dataset.json",      "ds/subjective.csv", "pp/gva_table.csv",
                           "pp/validity.json",      "models.json",          "analysis.json",     "rep/tables.txt",
                           "rep/gva_by_depth.svg",  "rep/log_ratio.svg"};
  int failures = 0;
  for (const char* threads : {"1", "2"}) {
    const fs::path d = root / (std::string("run") + threads);
    const std::string t = std::string("--threads ") + threads + " ";
    failures += run(t + "simulate --design " + q(root / "design.json") + " --seed 99 --out " + q(d / "ds")) != 0;
    failures += run(t + "preprocess --in " + q(d / "ds") + " --out " + q(d / "pp")) != 0;
    failures += run(t + "fit --gva-table " + q(d / "pp/gva_table.csv") + " --out " + q(d / "models.json")) != 0;
    failures += run(t + "analyze --gva-table " + q(d / "pp/gva_table.csv") + " --models " + q(d / "models.json") +
                    " --normalized --stability --logratio --subjective " + q(d / "pp/subjective.csv") + " --out " +
                    q(d / "analysis.json")) != 0;
    failures += run(t + "report --analysis " + q(d / "analysis.json") + " --out " + q(d / "rep")) != 0;
  }
  v.require(failures == 0, std::to_string(failures) + " CLI steps failed");
  int compared = 0, differ = 0;
  if (failures == 0) {
    for (const char* f : outputs) {
      ++compared;
      if (io::read_text_file(root / "run1" / f) != io::read_text_file(root / "run2" / f)) {
        ++differ;
        v.require(false, std::string(f) + " differs");
      }
    }
    std::size_t gaze = 0;
    for (const auto& e : fs::directory_iterator(root / "run1/ds/gaze")) {
      ++gaze;
      if (io::read_text_file(e.path()) != io::read_text_file(root / "run2/ds/gaze" / e.path().filename())) ++differ;
    }
    compared += static_cast<int>(gaze);
    v.require(differ == 0, std::to_string(differ) + " files differ");
  }
  fs::remove_all(root);
  v.detail << "two seeded CLI chains (threads 1 vs 2), " << compared << " files compared, " << differ << " differ";
  return v;
}

}  // namespace

int main() {
  const std::vector<std::pair<int, std::function<Verdict()>>> criteria{
      {1, geometry_oracle},       {2, f_tables},          {3, footers},        {4, log_ratio_arithmetic},
      {5, synthetic_replication}, {6, vergence_stability}, {7, filter_scoring}, {8, calibration_round_trip},
      {9, statistics_core},       {10, determinism}};
  int unexpected = 0;
  for (const auto& [id, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << "threw: " << e.what();
    }
    const bool known = !v.pass && kKnownLimitations.count(id);
    if (!v.pass && !known) ++unexpected;
    std::printf("criterion %d: %s  %s%s%s\n", id, v.pass ? "PASS" : "FAIL", v.detail.str().c_str(),
                v.failures.c_str(), known ? "  (known limitation)" : "");
    std::fflush(stdout);
  }
  return unexpected == 0 ? 0 : 1;
}
