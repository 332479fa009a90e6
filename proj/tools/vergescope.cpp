// vergescope command-line front end.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "vergescope/analysis.hpp"
#include "vergescope/error.hpp"
#include "vergescope/io.hpp"
#include "vergescope/report.hpp"

using namespace vergescope;
namespace fs = std::filesystem;

namespace {

struct Args {
  unsigned threads = 0;

  std::string design;
  std::optional<std::uint64_t> seed;
  std::string out;

  std::string in;
  pipeline::PipelineConfig pipe;

  std::string gva_table;
  bool pooled_only = false;

  std::string models;
  std::string subjective;
  bool normalized = false;
  bool stability = false;
  bool logratio = false;
  std::string logratio_gva = "raw";
  std::string criterion = "f";
  double alpha = 0.05;

  std::string model;
  std::string participant;
  std::string environment;
  bool stream = false;
  calib::StreamConfig stream_cfg;

  std::string analysis;
};

void emit(const io::Json& j, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << j.dump(2) << "\n";
  } else {
    io::write_json_file(out, j);
  }
}

std::uint64_t resolve_seed(const Args& a) {
  if (const char* env = std::getenv("VERGESCOPE_SEED"); env && *env) {
    std::uint64_t v = 0;
    const char* end = env + std::strlen(env);
    const auto [p, ec] = std::from_chars(env, end, v);
    if (ec != std::errc() || p != end) throw Error(ErrorCode::Usage, std::string("VERGESCOPE_SEED is not a u64: ") + env);
    return v;
  }
  if (!a.seed) throw Error(ErrorCode::Usage, "--seed is required (or set VERGESCOPE_SEED)");
  return *a.seed;
}

std::vector<io::GvaTableRow> load_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  return io::read_gva_table(in, path);
}

void cmd_simulate(const Args& a) {
  synth::CohortConfig cfg;
  if (!a.design.empty()) cfg = io::config_from_json(io::read_json_file(a.design));
  const std::uint64_t seed = resolve_seed(a);
  const auto cohort = synth::simulate_cohort(cfg, seed, a.threads);
  io::write_dataset(cohort, a.out, a.threads);
  std::cout << io::Json{{"dataset", a.out},
                        {"seed", seed},
                        {"participants", cohort.participants.size()},
                        {"trials", cohort.trials.size()},
                        {"subjective_reports", cohort.subjective.size()},
                        {"artifacts", cohort.artifact_count()}}
                   .dump()
            << "\n";
}

void cmd_preprocess(const Args& a) {
  auto ds = io::read_dataset(a.in, a.threads);
  const auto outcomes = pipeline::process_trials(ds.trials, a.pipe, a.threads);
  const auto report = pipeline::cascade_validity(outcomes);
  const auto rows = io::gva_table(outcomes, report);
  const fs::path out(a.out);
  fs::create_directories(out);
  std::ostringstream csv;
  io::write_gva_table(csv, rows);
  io::write_text_file(out / "gva_table.csv", csv.str());
  io::write_json_file(out / "validity.json", io::validity_to_json(report));
  if (!ds.subjective.empty()) {
    std::ostringstream s;
    io::write_subjective_csv(s, ds.subjective);
    io::write_text_file(out / "subjective.csv", s.str());
  }
}

void cmd_fit(const Args& a) {
  const auto cells = analysis::end_depth_cells(load_table(a.gva_table));
  if (cells.empty()) throw Error(ErrorCode::Domain, "no retained trials in " + a.gva_table);
  const auto models = analysis::fit_models(cells, !a.pooled_only);
  emit(io::models_to_json(models), a.out);
}

void cmd_analyze(const Args& a) {
  analysis::AnalysisOptions opt;
  opt.normalized = a.normalized;
  opt.stability = a.stability;
  opt.log_ratio = a.logratio;
  opt.log_ratio_normalized_gva = a.logratio_gva == "normalized";
  opt.stepwise.criterion = a.criterion == "aic" ? stats::StepCriterion::Aic : stats::StepCriterion::FTest;
  opt.stepwise.alpha = a.alpha;
  std::vector<calib::ParticipantModel> models;
  if (!a.models.empty()) models = io::models_from_json(io::read_json_file(a.models));
  std::vector<io::SubjectiveRow> subj;
  if (!a.subjective.empty()) {
    std::ifstream in(a.subjective);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + a.subjective);
    subj = io::read_subjective_csv(in, a.subjective);
  }
  if (a.logratio && subj.empty()) throw Error(ErrorCode::Usage, "--logratio needs --subjective <csv>");
  const auto rep = analysis::run_analysis(load_table(a.gva_table), std::move(models), subj, opt);
  emit(analysis::report_to_json(rep), a.out);
}

calib::ParticipantModel pick_model(const Args& a) {
  const auto models = io::models_from_json(io::read_json_file(a.model));
  if (models.empty()) throw Error(ErrorCode::InvalidModel, a.model + " holds no models");
  std::optional<Environment> env;
  if (!a.environment.empty()) env = parse_environment(a.environment);
  if (!a.participant.empty()) return calib::select_model(models, a.participant, env);
  if (models.size() == 1) return models.front();
  const auto& id = models.front().participant_id;
  for (const auto& m : models)
    if (m.participant_id != id) throw Error(ErrorCode::Usage, "several participants in " + a.model + "; pass --participant");
  return calib::select_model(models, id, env);
}

std::string csv_num(double x) { return std::isfinite(x) ? io::format_double(io::round_sig(x)) : "nan"; }

// Reads "t_s,gva_deg" pairs or full 15-column gaze rows. Header and blank
// lines are skipped.
void cmd_estimate(const Args& a) {
  const auto model = pick_model(a);
  calib::StreamingEstimator stream(model, a.stream_cfg);
  std::cout << "t_s,gva_deg,depth_m\n";
  std::string line;
  std::size_t line_no = 0;
  std::optional<double> last_t;
  while (std::getline(std::cin, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (line.rfind("t_s", 0) == 0) continue;
    const auto fields = std::count(line.begin(), line.end(), ',') + 1;
    double t = 0.0, gva = std::nan("");
    pipeline::BinocularSample s;
    if (fields == 2) {
      const auto comma = line.find(',');
      t = io::parse_double(line.substr(0, comma), "t_s", line_no);
      gva = io::parse_double(line.substr(comma + 1), "gva_deg", line_no);
    } else if (fields == static_cast<long>(io::kGazeColumns.size())) {
      s = io::parse_gaze_row(line, line_no);
      t = s.t_s;
    } else {
      throw Error(ErrorCode::Parse, "stdin line " + std::to_string(line_no) + ": expected 2 or " +
                                        std::to_string(io::kGazeColumns.size()) + " fields");
    }
    if (!std::isfinite(t)) throw Error(ErrorCode::Parse, "stdin line " + std::to_string(line_no) + ": t_s is not finite");
    if (last_t && t < *last_t) throw Error(ErrorCode::Parse, "stdin line " + std::to_string(line_no) + ": t_s decreases");
    last_t = t;

    calib::StreamOutput o;
    if (a.stream) {
      o = fields == 2 ? stream.push_gva(t, gva) : stream.push(t, s.left, s.right, s.left_conf, s.right_conf);
    } else {
      if (fields != 2) {
        const bool confident = s.left_conf >= a.stream_cfg.confidence_threshold &&
                                s.right_conf >= a.stream_cfg.confidence_threshold;
        gva = std::nan("");
        if (confident) {
          try {
            gva = vergence_angle(s.left.direction, s.right.direction, a.stream_cfg.mode);
          } catch (const Error&) {
            // missing direction: leave the sample empty
          }
        }
      }
      o.t_s = t;
      o.gva_deg = gva;
      o.depth_m = std::nan("");
      if (std::isfinite(gva)) {
        try {
          o.depth_m = calib::estimate_depth(gva, model).meters;
        } catch (const Error& e) {
          if (e.code() != ErrorCode::OutOfRange) throw;
        }
      }
    }
    std::cout << csv_num(o.t_s) << ',' << csv_num(o.gva_deg) << ',' << csv_num(o.depth_m) << '\n';
  }
}

void cmd_report(const Args& a) {
  const auto names = report::write_report(io::read_json_file(a.analysis), a.out);
  for (const auto& n : names) std::cout << (fs::path(a.out) / n).string() << "\n";
}

void fail(std::string_view code, const std::string& message) {
  std::cerr << io::Json{{"error", {{"code", code}, {"message", message}}}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaze vergence angle toolkit: simulate, preprocess, calibrate, analyze"};
  app.require_subcommand(1);
  Args a;
  app.add_option("--threads", a.threads, "Worker cap (0 = all cores); results do not depend on it");

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset with a ground-truth ledger");
  sim->add_option("--design", a.design, "Cohort configuration JSON (defaults when omitted)")->check(CLI::ExistingFile);
  sim->add_option("--seed", a.seed, "RNG seed; VERGESCOPE_SEED overrides it");
  sim->add_option("--out", a.out, "Dataset directory")->required();

  auto* pre = app.add_subcommand("preprocess", "Filter samples, find fixations, apply validity gates");
  pre->add_option("--in", a.in, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  pre->add_option("--confidence", a.pipe.confidence_threshold, "Minimum confidence for both eyes")
      ->check(CLI::Range(0.0, 1.0));
  pre->add_option("--max-velocity", a.pipe.max_velocity_deg_s, "Velocity limit in deg/s")
      ->check(CLI::PositiveNumber);
  pre->add_option("--sd-k", a.pipe.outlier_k_sd, "Outlier cut in standard deviations")->check(CLI::PositiveNumber);
  pre->add_option("--out", a.out, "Output directory (gva_table.csv, validity.json)")->required();

  auto* fit = app.add_subcommand("fit", "Fit per-participant GVA = a + b*D lines");
  fit->add_option("--gva-table", a.gva_table, "Per-trial GVA table")->required()->check(CLI::ExistingFile);
  fit->add_flag("--pooled-only", a.pooled_only, "Skip the per-environment fits");
  fit->add_option("--out", a.out, "Models JSON (stdout when omitted)");

  auto* ana = app.add_subcommand("analyze", "Model-comparison tables and summaries");
  ana->add_option("--gva-table", a.gva_table, "Per-trial GVA table")->required()->check(CLI::ExistingFile);
  ana->add_option("--models", a.models, "Models JSON (fitted from the table when omitted)")->check(CLI::ExistingFile);
  ana->add_flag("--normalized", a.normalized, "Add the normalized-GVA table and environment offsets");
  ana->add_flag("--stability", a.stability, "Add the switching-depth tables");
  ana->add_flag("--logratio", a.logratio, "Add the XR/Real log-ratio analysis");
  ana->add_option("--subjective", a.subjective, "Subjective reports CSV")->check(CLI::ExistingFile);
  ana->add_option("--logratio-gva", a.logratio_gva, "GVA used in log ratios")
      ->check(CLI::IsMember({"raw", "normalized"}));
  ana->add_option("--criterion", a.criterion, "Stepwise criterion")->check(CLI::IsMember({"f", "aic"}));
  ana->add_option("--alpha", a.alpha, "F-test level")->check(CLI::Range(0.0, 1.0));
  ana->add_option("--out", a.out, "Report JSON (stdout when omitted)");

  auto* est = app.add_subcommand("estimate", "Depth from GVA lines on stdin");
  est->add_option("--model", a.model, "Models JSON")->required()->check(CLI::ExistingFile);
  est->add_option("--participant", a.participant, "Participant to pick from a multi-model file");
  est->add_option("--environment", a.environment, "Prefer this environment's model")
      ->check(CLI::IsMember({"Real", "AR", "VR"}));
  est->add_flag("--stream", a.stream, "Causal filtering and trailing-window smoothing");
  est->add_option("--confidence", a.stream_cfg.confidence_threshold, "Minimum confidence")->check(CLI::Range(0.0, 1.0));
  est->add_option("--max-velocity", a.stream_cfg.max_velocity_deg_s, "Velocity limit in deg/s (stream)")
      ->check(CLI::PositiveNumber);
  est->add_option("--window", a.stream_cfg.smoothing_window_s, "Smoothing window in seconds (stream)")
      ->check(CLI::NonNegativeNumber);

  auto* rep = app.add_subcommand("report", "SVG figures and text tables from an analysis JSON");
  rep->add_option("--analysis", a.analysis, "Report JSON from analyze")->required()->check(CLI::ExistingFile);
  rep->add_option("--out", a.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    fail("usage", e.what());
    return 2;
  }

  try {
    if (*sim) cmd_simulate(a);
    else if (*pre) cmd_preprocess(a);
    else if (*fit) cmd_fit(a);
    else if (*ana) cmd_analyze(a);
    else if (*est) cmd_estimate(a);
    else if (*rep) cmd_report(a);
  } catch (const Error& e) {
    fail(error_code_name(e.code()), e.what());
    return e.code() == ErrorCode::Usage ? 2 : 1;
  } catch (const io::Json::exception& e) {
    fail("parse", e.what());
    return 1;
  } catch (const fs::filesystem_error& e) {
    fail("io", e.what());
    return 1;
  } catch (const std::exception& e) {
    fail("internal", e.what());
    return 1;
  }
  return 0;
}
