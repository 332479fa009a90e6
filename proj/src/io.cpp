#include "vergescope/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "vergescope/error.hpp"
#include "vergescope/parallel.hpp"

namespace vergescope::io {
namespace fs = std::filesystem;
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

[[noreturn]] void parse_error(std::string_view source, std::size_t line, const std::string& what) {
  throw Error(ErrorCode::Parse, std::string(source) + ":" + std::to_string(line) + ": " + what);
}

std::string where(std::string_view source, std::size_t line) {
  return std::string(source) + ":" + std::to_string(line);
}

long parse_int(std::string_view field, std::string_view what, std::size_t line) {
  long v = 0;
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (field.empty() || ec != std::errc() || ptr != end)
    throw Error(ErrorCode::Parse, "line " + std::to_string(line) + ": " + std::string(what) + " is not an integer: '" +
                                      std::string(field) + "'");
  return v;
}

bool parse_bool(std::string_view field, std::string_view what, std::size_t line) {
  if (field == "1" || field == "true") return true;
  if (field == "0" || field == "false") return false;
  throw Error(ErrorCode::Parse,
              "line " + std::to_string(line) + ": " + std::string(what) + " is not a boolean: '" + std::string(field) + "'");
}

std::optional<double> parse_optional(std::string_view field, std::string_view what, std::size_t line) {
  if (field.empty()) return std::nullopt;
  return parse_double(field, what, line);
}

std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

void check_id(const ParticipantId& id) {
  if (id.empty() || id.find_first_of(",\n\r\"/\\") != std::string::npos)
    throw Error(ErrorCode::Parse, "participant id '" + id + "' must be non-empty without commas, quotes or slashes");
}

Json num(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }
Json num9(double x) { return std::isfinite(x) ? Json(round_sig(x)) : Json(nullptr); }
Json opt_num(const std::optional<double>& v) { return v ? num(*v) : Json(nullptr); }

double get_double(const Json& j, const char* key) {
  if (!j.contains(key)) throw Error(ErrorCode::Parse, std::string("missing key '") + key + "'");
  const auto& v = j.at(key);
  if (v.is_null()) return std::nan("");
  if (!v.is_number()) throw Error(ErrorCode::Parse, std::string("key '") + key + "' must be a number");
  return v.get<double>();
}

std::optional<double> get_opt(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return get_double(j, key);
}

std::string get_string(const Json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_string()) throw Error(ErrorCode::Parse, std::string("missing string '") + key + "'");
  return j.at(key).get<std::string>();
}

Json counts_json(const pipeline::StatusCounts& c) {
  return Json{{"total", c.total()},
              {"valid", c.valid},
              {"missing", c.missing},
              {"low_confidence", c.low_confidence},
              {"velocity_spike", c.velocity_spike},
              {"outlier", c.outlier},
              {"excluded_percent", num9(c.total() ? 100.0 * static_cast<double>(c.excluded()) / static_cast<double>(c.total()) : 0.0)}};
}

std::string file_stem(const ParticipantId& id, Environment env) { return id + "_" + std::string(environment_name(env)); }

}  // namespace

// ---- numbers ---------------------------------------------------------------

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  (void)ec;
  return std::string(buf, ptr);
}

double round_sig(double x, int digits) {
  if (!std::isfinite(x) || x == 0.0) return x;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return std::strtod(buf, nullptr);
}

double parse_double(std::string_view field, std::string_view what, std::size_t line) {
  double v = 0.0;
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, v, std::chars_format::general);
  if (field.empty() || ec != std::errc() || ptr != end)
    throw Error(ErrorCode::Parse, "line " + std::to_string(line) + ": " + std::string(what) + " is not a number: '" +
                                      std::string(field) + "'");
  return v;
}

// ---- gaze CSV ----------------------------------------------------------------

std::string gaze_header() {
  std::string h;
  for (auto c : kGazeColumns) {
    if (!h.empty()) h += ',';
    h += c;
  }
  return h;
}

std::string gaze_row(const pipeline::BinocularSample& s) {
  const double v[15] = {s.t_s,
                        s.left_conf,
                        s.right_conf,
                        s.left.origin.x,
                        s.left.origin.y,
                        s.left.origin.z,
                        s.left.direction.x,
                        s.left.direction.y,
                        s.left.direction.z,
                        s.right.origin.x,
                        s.right.origin.y,
                        s.right.origin.z,
                        s.right.direction.x,
                        s.right.direction.y,
                        s.right.direction.z};
  std::string row;
  row.reserve(256);
  for (int i = 0; i < 15; ++i) {
    if (i) row += ',';
    row += format_double(v[i]);
  }
  return row;
}

pipeline::BinocularSample parse_gaze_row(std::string_view line, std::size_t line_no) {
  const auto f = split(line);
  if (f.size() != kGazeColumns.size())
    throw Error(ErrorCode::Parse, "line " + std::to_string(line_no) + ": expected 15 fields, got " + std::to_string(f.size()));
  double v[15];
  for (std::size_t i = 0; i < 15; ++i) v[i] = parse_double(f[i], kGazeColumns[i], line_no);
  if (!std::isfinite(v[0])) throw Error(ErrorCode::Parse, "line " + std::to_string(line_no) + ": t_s must be finite");
  for (int i : {1, 2})
    if (!(v[i] >= 0.0 && v[i] <= 1.0))
      throw Error(ErrorCode::Parse, "line " + std::to_string(line_no) + ": " + std::string(kGazeColumns[i]) + " = " +
                                        std::string(f[i]) + " outside [0, 1]");
  pipeline::BinocularSample s;
  s.t_s = v[0];
  s.left_conf = v[1];
  s.right_conf = v[2];
  // raw vectors are kept as recorded; NaN or zero directions become Missing later
  s.left.origin = {v[3], v[4], v[5]};
  s.left.direction = {v[6], v[7], v[8]};
  s.right.origin = {v[9], v[10], v[11]};
  s.right.direction = {v[12], v[13], v[14]};
  return s;
}

void write_gaze_csv(std::ostream& out, std::span<const pipeline::BinocularSample> samples) {
  out << gaze_header() << '\n';
  for (const auto& s : samples) out << gaze_row(s) << '\n';
}

std::vector<pipeline::BinocularSample> read_gaze_csv(std::istream& in, std::string_view source) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) parse_error(source, 1, "missing header");
  std::string_view header = trim(line);
  if (header.starts_with("\xEF\xBB\xBF")) header.remove_prefix(3);
  if (header != gaze_header()) parse_error(source, 1, "bad header, expected '" + gaze_header() + "'");

  std::vector<pipeline::BinocularSample> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(parse_gaze_row(line, line_no));
    } catch (const Error& e) {
      throw Error(e.code(), std::string(source) + ": " + e.what());
    }
    if (out.size() > 1 && out.back().t_s < out[out.size() - 2].t_s)
      parse_error(source, line_no, "t_s decreases (" + format_double(out.back().t_s) + " after " +
                                       format_double(out[out.size() - 2].t_s) + ")");
  }
  return out;
}

std::vector<pipeline::BinocularSample> read_gaze_csv_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return read_gaze_csv(in, path.string());
}

void write_gaze_csv_file(const fs::path& path, std::span<const pipeline::BinocularSample> samples) {
  std::ostringstream out;
  write_gaze_csv(out, samples);
  write_text_file(path, out.str());
}

// ---- manifests ---------------------------------------------------------------

void TrialManifest::validate(bool check_chaining) const {
  check_id(participant_id);
  auto known = [&](double d) { return std::find(depths_m.begin(), depths_m.end(), d) != depths_m.end(); };
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto& t = trials[i];
    if (!known(t.start_depth_m) || !known(t.end_depth_m))
      throw Error(ErrorCode::Parse, "trial " + std::to_string(t.trial_id) + " uses a depth outside the declared set");
    if (check_chaining && i > 0 && t.start_depth_m != trials[i - 1].end_depth_m)
      throw Error(ErrorCode::Parse, "trial " + std::to_string(t.trial_id) + " does not start at the previous end depth");
    if (t.gaze_file.empty()) throw Error(ErrorCode::Parse, "trial " + std::to_string(t.trial_id) + " has no gaze file");
  }
}

Json manifest_to_json(const TrialManifest& m) {
  Json trials = Json::array();
  for (const auto& t : m.trials)
    trials.push_back({{"trial_id", t.trial_id},
                      {"start_depth_m", t.start_depth_m},
                      {"end_depth_m", t.end_depth_m},
                      {"stimulus_onset_s", t.stimulus_onset_s},
                      {"response_s", opt_num(t.response_s)},
                      {"landolt_dir", landolt_name(t.landolt_dir)},
                      {"landolt_response", landolt_name(t.landolt_response)},
                      {"gaze_file", t.gaze_file}});
  return Json{{"participant_id", m.participant_id},
              {"environment", environment_name(m.environment)},
              {"depths_m", m.depths_m},
              {"trials", trials}};
}

TrialManifest manifest_from_json(const Json& j) {
  try {
    TrialManifest m;
    m.participant_id = get_string(j, "participant_id");
    m.environment = parse_environment(get_string(j, "environment"));
    m.depths_m = j.at("depths_m").get<std::vector<double>>();
    for (const auto& t : j.at("trials")) {
      ManifestTrial mt;
      mt.trial_id = t.at("trial_id").get<int>();
      mt.start_depth_m = get_double(t, "start_depth_m");
      mt.end_depth_m = get_double(t, "end_depth_m");
      mt.stimulus_onset_s = get_double(t, "stimulus_onset_s");
      mt.response_s = get_opt(t, "response_s");
      mt.landolt_dir = parse_landolt(get_string(t, "landolt_dir"));
      mt.landolt_response = parse_landolt(get_string(t, "landolt_response"));
      mt.gaze_file = get_string(t, "gaze_file");
      m.trials.push_back(std::move(mt));
    }
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("manifest: ") + e.what());
  }
}

// ---- subjective CSV ------------------------------------------------------------

namespace {
constexpr std::string_view kSubjectiveHeader = "participant_id,environment,depth_m,report_value,unit,repetition";
constexpr std::string_view kGvaHeader =
    "participant_id,environment,trial_id,start_depth_m,end_depth_m,fixation_onset_s,window_t0_s,window_t1_s,"
    "mean_gva_deg,valid_fraction,trial_valid,retained,flag,landolt_correct,landolt_timeout,n_valid,n_missing,"
    "n_low_confidence,n_velocity_spike,n_outlier";

void expect_header(std::istream& in, std::string_view expected, std::string_view source) {
  std::string line;
  if (!std::getline(in, line)) parse_error(source, 1, "missing header");
  if (trim(line) != expected) parse_error(source, 1, "bad header, expected '" + std::string(expected) + "'");
}
}  // namespace

void write_subjective_csv(std::ostream& out, std::span<const SubjectiveRow> rows) {
  out << kSubjectiveHeader << '\n';
  for (const auto& r : rows) {
    check_id(r.participant_id);
    out << r.participant_id << ',' << environment_name(r.environment) << ',' << format_double(r.depth_m) << ','
        << format_double(r.report_value) << ',' << stats::length_unit_name(r.unit) << ',' << r.repetition << '\n';
  }
}

std::vector<SubjectiveRow> read_subjective_csv(std::istream& in, std::string_view source) {
  expect_header(in, kSubjectiveHeader, source);
  std::vector<SubjectiveRow> out;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto f = split(line);
      if (f.size() != 6) parse_error(source, line_no, "expected 6 fields, got " + std::to_string(f.size()));
      SubjectiveRow r;
      r.participant_id = std::string(f[0]);
      check_id(r.participant_id);
      r.environment = parse_environment(f[1]);
      r.depth_m = parse_double(f[2], "depth_m", line_no);
      r.report_value = parse_double(f[3], "report_value", line_no);
      r.unit = stats::parse_length_unit(f[4]);
      r.repetition = static_cast<int>(parse_int(f[5], "repetition", line_no));
      if (!(r.depth_m > 0.0)) parse_error(source, line_no, "depth_m must be > 0");
      if (!(r.report_value > 0.0) || !std::isfinite(r.report_value)) parse_error(source, line_no, "report_value must be > 0");
      if (r.repetition < 1 || r.repetition > 3) parse_error(source, line_no, "repetition must be 1, 2 or 3");
      out.push_back(std::move(r));
    } catch (const Error& e) {
      const std::string msg = e.what();
      if (msg.starts_with(std::string(source) + ":")) throw;
      throw Error(e.code(), where(source, line_no) + ": " + msg);
    }
  }
  return out;
}

// ---- GVA table ---------------------------------------------------------------

pipeline::TrialFlag parse_trial_flag(std::string_view text) {
  using pipeline::TrialFlag;
  for (auto f : {TrialFlag::Ok, TrialFlag::NoFixation, TrialFlag::ShortTrial, TrialFlag::NoValidSamples,
                 TrialFlag::InsufficientValid})
    if (pipeline::trial_flag_name(f) == text) return f;
  throw Error(ErrorCode::Parse, "unknown trial flag '" + std::string(text) + "'");
}

std::vector<GvaTableRow> gva_table(const std::vector<pipeline::TrialOutcome>& outcomes,
                                   const pipeline::ValidityReport& report) {
  std::vector<GvaTableRow> rows;
  rows.reserve(outcomes.size());
  for (const auto& o : outcomes) {
    GvaTableRow r;
    r.participant_id = o.participant_id;
    r.environment = o.environment;
    r.trial_id = o.trial_id;
    r.start_depth_m = o.start_depth_m;
    r.end_depth_m = o.end_depth_m;
    r.fixation_onset_s = o.fixation_onset_s;
    if (o.window) {
      r.window_t0_s = o.window->t0;
      r.window_t1_s = o.window->t1;
    }
    r.mean_gva_deg = o.mean_gva_deg;
    r.valid_fraction = o.valid_fraction;
    r.trial_valid = o.valid;
    r.retained = pipeline::retained(o, report);
    r.flag = o.flag;
    r.landolt_correct = o.landolt_correct;
    r.landolt_timeout = o.landolt_timeout;
    r.counts = o.counts;
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_gva_table(std::ostream& out, std::span<const GvaTableRow> rows) {
  out << kGvaHeader << '\n';
  for (const auto& r : rows) {
    check_id(r.participant_id);
    out << r.participant_id << ',' << environment_name(r.environment) << ',' << r.trial_id << ','
        << format_double(r.start_depth_m) << ',' << format_double(r.end_depth_m) << ',' << opt(r.fixation_onset_s) << ','
        << opt(r.window_t0_s) << ',' << opt(r.window_t1_s) << ',' << format_double(r.mean_gva_deg) << ','
        << format_double(r.valid_fraction) << ',' << int(r.trial_valid) << ',' << int(r.retained) << ','
        << pipeline::trial_flag_name(r.flag) << ',' << int(r.landolt_correct) << ',' << int(r.landolt_timeout) << ','
        << r.counts.valid << ',' << r.counts.missing << ',' << r.counts.low_confidence << ',' << r.counts.velocity_spike
        << ',' << r.counts.outlier << '\n';
  }
}

std::vector<GvaTableRow> read_gva_table(std::istream& in, std::string_view source) {
  expect_header(in, kGvaHeader, source);
  std::vector<GvaTableRow> out;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto f = split(line);
      if (f.size() != 20) parse_error(source, line_no, "expected 20 fields, got " + std::to_string(f.size()));
      GvaTableRow r;
      r.participant_id = std::string(f[0]);
      check_id(r.participant_id);
      r.environment = parse_environment(f[1]);
      r.trial_id = static_cast<int>(parse_int(f[2], "trial_id", line_no));
      r.start_depth_m = parse_double(f[3], "start_depth_m", line_no);
      r.end_depth_m = parse_double(f[4], "end_depth_m", line_no);
      r.fixation_onset_s = parse_optional(f[5], "fixation_onset_s", line_no);
      r.window_t0_s = parse_optional(f[6], "window_t0_s", line_no);
      r.window_t1_s = parse_optional(f[7], "window_t1_s", line_no);
      r.mean_gva_deg = parse_double(f[8], "mean_gva_deg", line_no);
      r.valid_fraction = parse_double(f[9], "valid_fraction", line_no);
      r.trial_valid = parse_bool(f[10], "trial_valid", line_no);
      r.retained = parse_bool(f[11], "retained", line_no);
      r.flag = parse_trial_flag(f[12]);
      r.landolt_correct = parse_bool(f[13], "landolt_correct", line_no);
      r.landolt_timeout = parse_bool(f[14], "landolt_timeout", line_no);
      r.counts.valid = static_cast<std::size_t>(parse_int(f[15], "n_valid", line_no));
      r.counts.missing = static_cast<std::size_t>(parse_int(f[16], "n_missing", line_no));
      r.counts.low_confidence = static_cast<std::size_t>(parse_int(f[17], "n_low_confidence", line_no));
      r.counts.velocity_spike = static_cast<std::size_t>(parse_int(f[18], "n_velocity_spike", line_no));
      r.counts.outlier = static_cast<std::size_t>(parse_int(f[19], "n_outlier", line_no));
      if (!(r.start_depth_m > 0.0) || !(r.end_depth_m > 0.0)) parse_error(source, line_no, "depths must be > 0");
      out.push_back(std::move(r));
    } catch (const Error& e) {
      const std::string msg = e.what();
      if (msg.starts_with(std::string(source) + ":")) throw;
      throw Error(e.code(), where(source, line_no) + ": " + msg);
    }
  }
  return out;
}

// ---- JSON --------------------------------------------------------------------

Json validity_to_json(const pipeline::ValidityReport& r) {
  Json per_env = Json::array();
  for (const auto& e : r.per_environment)
    per_env.push_back({{"environment", environment_name(e.environment)},
                       {"participants", e.participants},
                       {"excluded_percent_mean", num9(e.excluded_percent_mean)},
                       {"excluded_percent_min", num9(e.excluded_percent_min)},
                       {"excluded_percent_max", num9(e.excluded_percent_max)},
                       {"valid_trials", e.valid_trials},
                       {"total_trials", e.total_trials}});
  Json participants = Json::array();
  for (const auto& p : r.participants)
    participants.push_back(
        {{"participant_id", p.participant_id}, {"valid_environments", p.valid_environments}, {"retained", p.valid}});
  Json envs = Json::array();
  for (const auto& e : r.environments)
    envs.push_back({{"participant_id", e.participant_id},
                    {"environment", environment_name(e.environment)},
                    {"valid_pairs", e.valid_pairs},
                    {"total_pairs", e.total_pairs},
                    {"valid", e.valid},
                    {"samples", counts_json(e.counts)}});
  Json pairs = Json::array();
  for (const auto& p : r.pairs)
    pairs.push_back({{"participant_id", p.key.participant_id},
                     {"environment", environment_name(p.key.environment)},
                     {"start_depth_m", p.key.start_depth_m},
                     {"end_depth_m", p.key.end_depth_m},
                     {"valid_trials", p.valid_trials},
                     {"total_trials", p.total_trials},
                     {"valid", p.valid}});
  return Json{{"samples", counts_json(r.totals)},
              {"per_environment", per_env},
              {"landolt", {{"correct", r.landolt_correct},
                           {"total", r.landolt_total},
                           {"accuracy", num9(r.landolt_accuracy())}}},
              {"retained_participants", r.retained_participants},
              {"participants", participants},
              {"environments", envs},
              {"pairs", pairs}};
}

Json model_to_json(const calib::ParticipantModel& m) {
  Json j{{"participant_id", m.participant_id}};
  j["environment"] = m.environment ? Json(environment_name(*m.environment)) : Json(nullptr);
  j["intercept_deg"] = m.intercept_deg;
  j["slope_deg_per_diopter"] = m.slope_deg_per_diopter;
  j["residual_sd_deg"] = m.residual_sd_deg;
  j["n_points"] = m.n_points;
  j["calibrated_diopter_min"] = opt_num(m.calibrated_diopter_min);
  j["calibrated_diopter_max"] = opt_num(m.calibrated_diopter_max);
  return j;
}

calib::ParticipantModel model_from_json(const Json& j) {
  try {
    calib::ParticipantModel m;
    m.participant_id = get_string(j, "participant_id");
    if (j.contains("environment") && !j.at("environment").is_null())
      m.environment = parse_environment(j.at("environment").get<std::string>());
    m.intercept_deg = get_double(j, "intercept_deg");
    m.slope_deg_per_diopter = get_double(j, "slope_deg_per_diopter");
    m.residual_sd_deg = j.contains("residual_sd_deg") ? get_double(j, "residual_sd_deg") : 0.0;
    m.n_points = j.contains("n_points") ? j.at("n_points").get<std::size_t>() : 0;
    m.calibrated_diopter_min = get_opt(j, "calibrated_diopter_min");
    m.calibrated_diopter_max = get_opt(j, "calibrated_diopter_max");
    if (!std::isfinite(m.intercept_deg) || !std::isfinite(m.slope_deg_per_diopter))
      throw Error(ErrorCode::InvalidModel, "model coefficients must be finite");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("model: ") + e.what());
  }
}

Json models_to_json(std::span<const calib::ParticipantModel> models) {
  Json arr = Json::array();
  for (const auto& m : models) arr.push_back(model_to_json(m));
  return Json{{"models", arr}};
}

std::vector<calib::ParticipantModel> models_from_json(const Json& j) {
  std::vector<calib::ParticipantModel> out;
  const Json* arr = nullptr;
  if (j.is_object() && j.contains("models")) arr = &j.at("models");
  else if (j.is_array()) arr = &j;
  if (!arr) {
    out.push_back(model_from_json(j));
    return out;
  }
  for (const auto& m : *arr) out.push_back(model_from_json(m));
  return out;
}

Json config_to_json(const synth::CohortConfig& c) {
  const auto& d = c.design;
  const auto& n = c.noise;
  Json noise{{"intercept_bias_deg", n.intercept_bias_deg ? Json(*n.intercept_bias_deg) : Json(nullptr)},
             {"intercept_mean_deg", n.intercept_mean_deg},
             {"intercept_sd_deg", n.intercept_sd_deg},
             {"slope_model", n.slope_model == synth::SlopeModel::Population ? "population" : "geometric"},
             {"slope_mean", n.slope_mean},
             {"slope_sd", n.slope_sd},
             {"ipd_mean_m", n.ipd_mean_m},
             {"ipd_sd_m", n.ipd_sd_m},
             {"sample_noise_sd_deg", n.sample_noise_sd_deg},
             {"direction_noise_sd_deg", n.direction_noise_sd_deg},
             {"dropout_rate", n.dropout_rate},
             {"dropout_burst_mean", n.dropout_burst_mean},
             {"spike_rate", n.spike_rate},
             {"spike_deg", n.spike_deg},
             {"outlier_rate", n.outlier_rate},
             {"outlier_deg", n.outlier_deg},
             {"settle_min_s", n.settle_min_s},
             {"settle_max_s", n.settle_max_s},
             {"latency_min_s", n.latency_min_s},
             {"latency_max_s", n.latency_max_s},
             {"vergence_horizon_s", n.vergence_horizon_s}};
  return Json{{"design",
               {{"depths_m", d.depths_m},
                {"target_azimuth_deg", d.target_azimuth_deg},
                {"repetitions", d.repetitions},
                {"participants", d.participants},
                {"sample_rate_hz", d.sample_rate_hz},
                {"response_window_s", d.response_window_s},
                {"iti_min_s", d.iti_min_s},
                {"iti_max_s", d.iti_max_s},
                {"pre_stimulus_s", d.pre_stimulus_s},
                {"subjective_repetitions", d.subjective_repetitions}}},
              {"noise", noise},
              {"environment", {{"offsets_deg", c.environment.offsets_deg}}},
              {"subjective",
               {{"factors", c.subjective.factors},
                {"participant_log_sd", c.subjective.participant_log_sd},
                {"report_log_sd", c.subjective.report_log_sd}}},
              {"landolt_accuracy", c.landolt_accuracy},
              {"timeout_rate", c.timeout_rate}};
}

namespace {

// Assigns j[key] to `out` when present; remembers which keys were consumed.
class Reader {
public:
  Reader(const Json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j.is_object()) throw Error(ErrorCode::Parse, "config section '" + section_ + "' must be an object");
  }
  template <class T>
  void read(const char* key, T& out) {
    seen_.push_back(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorCode::Parse, "config key '" + section_ + "." + key + "' has the wrong type");
    }
  }
  const Json* child(const char* key) {
    seen_.push_back(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (std::find(seen_.begin(), seen_.end(), k) == seen_.end())
        throw Error(ErrorCode::Parse, "unknown config key '" + section_ + (section_.empty() ? "" : ".") + k + "'");
  }

private:
  const Json& j_;
  std::string section_;
  std::vector<std::string> seen_;
};

}  // namespace

synth::CohortConfig config_from_json(const Json& j) {
  synth::CohortConfig c;
  Reader top(j, "");
  if (const Json* d = top.child("design")) {
    Reader r(*d, "design");
    r.read("depths_m", c.design.depths_m);
    r.read("target_azimuth_deg", c.design.target_azimuth_deg);
    r.read("repetitions", c.design.repetitions);
    r.read("participants", c.design.participants);
    r.read("sample_rate_hz", c.design.sample_rate_hz);
    r.read("response_window_s", c.design.response_window_s);
    r.read("iti_min_s", c.design.iti_min_s);
    r.read("iti_max_s", c.design.iti_max_s);
    r.read("pre_stimulus_s", c.design.pre_stimulus_s);
    r.read("subjective_repetitions", c.design.subjective_repetitions);
    r.finish();
  }
  if (const Json* n = top.child("noise")) {
    Reader r(*n, "noise");
    auto& m = c.noise;
    if (const Json* b = r.child("intercept_bias_deg"); b && !b->is_null()) {
      if (!b->is_number()) throw Error(ErrorCode::Parse, "config key 'noise.intercept_bias_deg' has the wrong type");
      m.intercept_bias_deg = b->get<double>();
    }
    r.read("intercept_mean_deg", m.intercept_mean_deg);
    r.read("intercept_sd_deg", m.intercept_sd_deg);
    std::string slope_model = m.slope_model == synth::SlopeModel::Population ? "population" : "geometric";
    r.read("slope_model", slope_model);
    if (slope_model == "population") m.slope_model = synth::SlopeModel::Population;
    else if (slope_model == "geometric") m.slope_model = synth::SlopeModel::Geometric;
    else throw Error(ErrorCode::Parse, "noise.slope_model must be 'population' or 'geometric'");
    r.read("slope_mean", m.slope_mean);
    r.read("slope_sd", m.slope_sd);
    r.read("ipd_mean_m", m.ipd_mean_m);
    r.read("ipd_sd_m", m.ipd_sd_m);
    r.read("sample_noise_sd_deg", m.sample_noise_sd_deg);
    r.read("direction_noise_sd_deg", m.direction_noise_sd_deg);
    r.read("dropout_rate", m.dropout_rate);
    r.read("dropout_burst_mean", m.dropout_burst_mean);
    r.read("spike_rate", m.spike_rate);
    r.read("spike_deg", m.spike_deg);
    r.read("outlier_rate", m.outlier_rate);
    r.read("outlier_deg", m.outlier_deg);
    r.read("settle_min_s", m.settle_min_s);
    r.read("settle_max_s", m.settle_max_s);
    r.read("latency_min_s", m.latency_min_s);
    r.read("latency_max_s", m.latency_max_s);
    r.read("vergence_horizon_s", m.vergence_horizon_s);
    r.finish();
  }
  if (const Json* e = top.child("environment")) {
    Reader r(*e, "environment");
    r.read("offsets_deg", c.environment.offsets_deg);
    r.finish();
  }
  if (const Json* s = top.child("subjective")) {
    Reader r(*s, "subjective");
    r.read("factors", c.subjective.factors);
    r.read("participant_log_sd", c.subjective.participant_log_sd);
    r.read("report_log_sd", c.subjective.report_log_sd);
    r.finish();
  }
  top.read("landolt_accuracy", c.landolt_accuracy);
  top.read("timeout_rate", c.timeout_rate);
  top.finish();
  if (c.environment.offsets_deg[0] != 0.0)
    throw Error(ErrorCode::InvalidModel, "the Real environment offset is 0 by convention");
  c.design.validate();
  c.noise.validate();
  return c;
}

Json ledger_to_json(const synth::Cohort& cohort) {
  const auto& cfg = cohort.config;
  Json participants = Json::object();
  for (const auto& p : cohort.participants) {
    const auto& ph = p.physiology;
    Json order = Json::array();
    for (auto e : ph.environment_order) order.push_back(environment_name(e));
    participants[ph.id] = {{"ipd_m", ph.ipd_m},
                           {"intercept_bias_deg", ph.intercept_bias_deg},
                           {"slope_implied", p.slope_implied},
                           {"intercept_implied", p.intercept_implied},
                           {"settle_time_s", ph.settle_time_s},
                           {"subjective_scale", ph.subjective_scale},
                           {"report_unit", stats::length_unit_name(ph.report_unit)},
                           {"environment_order", order}};
  }
  // runs of consecutive samples with the same kind keep the ledger compact
  Json artifacts = Json::array();
  Json trials = Json::array();
  for (const auto& t : cohort.trials) {
    trials.push_back({{"participant_id", t.record.participant_id},
                      {"environment", environment_name(t.record.environment)},
                      {"trial_id", t.record.trial_id},
                      {"saccade_start_s", t.truth.saccade_start_s},
                      {"landing_s", t.truth.landing_s},
                      {"start_gva_deg", t.truth.start_gva_deg},
                      {"steady_gva_deg", t.truth.steady_gva_deg}});
    const auto& a = t.artifacts;
    for (std::size_t i = 0; i < a.size();) {
      std::size_t k = i + 1;
      while (k < a.size() && a[k].kind == a[i].kind && a[k].sample_index == a[k - 1].sample_index + 1) ++k;
      artifacts.push_back({{"participant_id", a[i].participant_id},
                           {"environment", environment_name(a[i].environment)},
                           {"trial_id", a[i].trial_id},
                           {"kind", synth::artifact_name(a[i].kind)},
                           {"sample_index", a[i].sample_index},
                           {"count", k - i},
                           {"t_s", a[i].t_s}});
      i = k;
    }
  }
  Json offsets = Json::object();
  Json factors = Json::object();
  for (auto e : kAllEnvironments) {
    offsets[std::string(environment_name(e))] = cfg.environment.offsets_deg[static_cast<int>(e)];
    factors[std::string(environment_name(e))] = cfg.subjective.factors[static_cast<int>(e)];
  }
  return Json{{"seed", cohort.seed},
              {"env_offsets", offsets},
              {"subjective_factors", factors},
              {"participants", participants},
              {"trials", trials},
              {"artifacts", artifacts}};
}

// ---- files ---------------------------------------------------------------------

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

Json read_json_file(const fs::path& path) {
  const std::string text = read_text_file(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const Json& j) { write_text_file(path, j.dump(2) + "\n"); }

// ---- datasets ------------------------------------------------------------------

void write_dataset(const synth::Cohort& cohort, const fs::path& dir, unsigned threads) {
  fs::create_directories(dir / "manifests");
  fs::create_directories(dir / "gaze");

  std::map<std::pair<ParticipantId, int>, TrialManifest> manifests;
  std::vector<std::pair<ParticipantId, int>> order;
  std::vector<std::string> gaze_names(cohort.trials.size());
  for (std::size_t i = 0; i < cohort.trials.size(); ++i) {
    const auto& rec = cohort.trials[i].record;
    check_id(rec.participant_id);
    const auto key = std::make_pair(rec.participant_id, static_cast<int>(rec.environment));
    auto [it, fresh] = manifests.try_emplace(key);
    if (fresh) {
      it->second.participant_id = rec.participant_id;
      it->second.environment = rec.environment;
      it->second.depths_m = cohort.config.design.depths_m;
      order.push_back(key);
    }
    char name[32];
    std::snprintf(name, sizeof name, "_t%03d.csv", rec.trial_id);
    gaze_names[i] = "gaze/" + file_stem(rec.participant_id, rec.environment) + name;
    it->second.trials.push_back({rec.trial_id, rec.start_depth_m, rec.end_depth_m, rec.stimulus_onset_s, rec.response_s,
                                 rec.landolt_dir, rec.landolt_response, "../" + gaze_names[i]});
  }

  parallel_for(cohort.trials.size(), threads,
               [&](std::size_t i) { write_gaze_csv_file(dir / gaze_names[i], cohort.trials[i].record.samples); });

  Json index = Json::array();
  for (const auto& key : order) {
    const auto& m = manifests.at(key);
    const std::string rel = "manifests/" + file_stem(m.participant_id, m.environment) + ".json";
    write_json_file(dir / rel, manifest_to_json(m));
    index.push_back(rel);
  }

  std::vector<SubjectiveRow> subj;
  for (const auto& r : cohort.subjective)
    subj.push_back({r.participant_id, r.environment, r.depth_m, r.value, r.unit, r.repetition});
  std::ostringstream sc;
  write_subjective_csv(sc, subj);
  write_text_file(dir / "subjective.csv", sc.str());

  write_json_file(dir / "design.json", config_to_json(cohort.config));
  write_text_file(dir / "ledger.json", ledger_to_json(cohort).dump() + "\n");
  write_json_file(dir / "dataset.json",
                  Json{{"format", "vergescope-dataset"}, {"version", 1}, {"seed", cohort.seed},
                       {"manifests", index}, {"subjective", "subjective.csv"}});
}

Dataset read_dataset(const fs::path& dir, unsigned threads) {
  const Json index = read_json_file(dir / "dataset.json");
  if (!index.is_object() || index.value("format", "") != "vergescope-dataset")
    throw Error(ErrorCode::Parse, (dir / "dataset.json").string() + ": not a dataset index");

  struct Pending {
    fs::path gaze;
    pipeline::TrialRecord rec;
  };
  std::vector<Pending> pending;
  for (const auto& rel : index.at("manifests")) {
    const fs::path mpath = dir / rel.get<std::string>();
    TrialManifest m;
    try {
      m = manifest_from_json(read_json_file(mpath));
    } catch (const Error& e) {
      throw Error(e.code(), mpath.string() + ": " + e.what());
    }
    for (const auto& t : m.trials) {
      Pending p;
      p.gaze = mpath.parent_path() / t.gaze_file;
      auto& r = p.rec;
      r.participant_id = m.participant_id;
      r.environment = m.environment;
      r.trial_id = t.trial_id;
      r.start_depth_m = t.start_depth_m;
      r.end_depth_m = t.end_depth_m;
      r.stimulus_onset_s = t.stimulus_onset_s;
      r.response_s = t.response_s;
      r.landolt_dir = t.landolt_dir;
      r.landolt_response = t.landolt_response;
      r.landolt_correct = t.landolt_response != LandoltDirection::Timeout && t.landolt_response == t.landolt_dir;
      pending.push_back(std::move(p));
    }
  }

  parallel_for(pending.size(), threads, [&](std::size_t i) { pending[i].rec.samples = read_gaze_csv_file(pending[i].gaze); });

  Dataset ds;
  ds.trials.reserve(pending.size());
  for (auto& p : pending) ds.trials.push_back(std::move(p.rec));
  if (index.contains("subjective")) {
    const fs::path sp = dir / index.at("subjective").get<std::string>();
    if (fs::exists(sp)) {
      std::ifstream in(sp);
      ds.subjective = read_subjective_csv(in, sp.string());
    }
  }
  return ds;
}

}  // namespace vergescope::io
