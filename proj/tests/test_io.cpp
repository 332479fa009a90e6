#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>
#include <sstream>

#include "doctest.h"
#include "vergescope/error.hpp"
#include "vergescope/io.hpp"

using namespace vergescope;
using namespace vergescope::io;
namespace fs = std::filesystem;

namespace {

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

bool same_sample(const pipeline::BinocularSample& a, const pipeline::BinocularSample& b) {
  const double x[] = {a.t_s, a.left_conf, a.right_conf, a.left.origin.x, a.left.origin.y, a.left.origin.z,
                      a.left.direction.x, a.left.direction.y, a.left.direction.z, a.right.origin.x, a.right.origin.y,
                      a.right.origin.z, a.right.direction.x, a.right.direction.y, a.right.direction.z};
  const double y[] = {b.t_s, b.left_conf, b.right_conf, b.left.origin.x, b.left.origin.y, b.left.origin.z,
                      b.left.direction.x, b.left.direction.y, b.left.direction.z, b.right.origin.x, b.right.origin.y,
                      b.right.origin.z, b.right.direction.x, b.right.direction.y, b.right.direction.z};
  for (int i = 0; i < 15; ++i)
    if (!(same_bits(x[i], y[i]) || (std::isnan(x[i]) && std::isnan(y[i])))) return false;
  return true;
}

std::string message_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

synth::SimulatedTrial one_trial() {
  synth::CohortConfig cfg;
  synth::Physiology who;
  who.id = "P07";
  who.intercept_bias_deg = 3.0;
  return synth::simulate_trial({5, Environment::AR, 0.75, 4.0}, who, cfg, 1234, 99);
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("vergescope_io_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("shortest round-trip number formatting") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::uint64_t> bits;
  int checked = 0;
  while (checked < 20000) {
    const std::uint64_t b = bits(rng);
    double x;
    std::memcpy(&x, &b, sizeof x);
    if (!std::isfinite(x)) continue;
    const std::string s = format_double(x);
    CHECK(same_bits(parse_double(s, "x", 1), x));
    ++checked;
  }
  CHECK(format_double(0.25) == "0.25");
  CHECK(format_double(-0.0) == "-0");
  CHECK(format_double(std::nan("")) == "nan");
  CHECK(std::isnan(parse_double("NaN", "x", 1)));
  CHECK(round_sig(1.23456789012, 9) == 1.23456789);
  CHECK(round_sig(-0.000123456789012, 9) == -0.000123456789);
  CHECK(round_sig(0.0) == 0.0);
  CHECK_THROWS_AS(parse_double("1.5x", "x", 1), Error);
  CHECK_THROWS_AS(parse_double("", "x", 1), Error);
  CHECK_THROWS_AS(parse_double("1,5", "x", 1), Error);
}

TEST_CASE("gaze CSV round trip is lossless") {
  auto st = one_trial();
  auto& s = st.record.samples;
  s[3].left.direction = {std::nan(""), std::nan(""), std::nan("")};
  s[4].right.direction = {0.0, 0.0, 0.0};
  std::stringstream buf;
  write_gaze_csv(buf, s);
  const std::string first = buf.str();
  const auto back = read_gaze_csv(buf);
  REQUIRE(back.size() == s.size());
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(same_sample(back[i], s[i]));
  std::stringstream again;
  write_gaze_csv(again, back);
  CHECK(again.str() == first);

  auto rec = st.record;
  rec.samples = back;
  pipeline::compute_gva(rec);
  CHECK(rec.samples[3].status == pipeline::SampleStatus::Missing);
  CHECK(rec.samples[4].status == pipeline::SampleStatus::Missing);
}

TEST_CASE("gaze CSV strictness") {
  const std::string header = gaze_header() + "\n";
  const std::string good = "0.005,1,1,-0.03,0,0,0.1,0,1,0.03,0,0,-0.1,0,1\n";
  {
    std::istringstream in(header);
    CHECK(read_gaze_csv(in).empty());
  }
  {
    std::istringstream in("");
    CHECK_THROWS_AS(read_gaze_csv(in), Error);
  }
  {
    std::istringstream in("t,l_conf\n" + good);
    CHECK(message_of([&] { read_gaze_csv(in, "f.csv"); }).find("bad header") != std::string::npos);
  }
  {
    std::istringstream in(header + good + "0.010,1.2,1,-0.03,0,0,0.1,0,1,0.03,0,0,-0.1,0,1\n");
    const auto msg = message_of([&] { read_gaze_csv(in, "f.csv"); });
    CHECK(msg.find("line 3") != std::string::npos);
    CHECK(msg.find("l_conf") != std::string::npos);
  }
  {
    std::istringstream in(header + "0.010,1,1,-0.03,0,0,0.1,0,1,0.03,0,0,-0.1,0,1\n" + good);
    CHECK(message_of([&] { read_gaze_csv(in); }).find("decreases") != std::string::npos);
  }
  {
    std::istringstream in(header + "0.010,1,1,-0.03,0,0,0.1,0,1,0.03,0,0,-0.1,0\n");
    CHECK(message_of([&] { read_gaze_csv(in); }).find("expected 15 fields") != std::string::npos);
  }
  {
    std::istringstream in(header + "0.010,1,1,-0.03,0,0,abc,0,1,0.03,0,0,-0.1,0,1\n");
    CHECK(message_of([&] { read_gaze_csv(in); }).find("l_dx") != std::string::npos);
  }
  {
    std::istringstream in(header + "0.010,1,1,-0.03,0,0,nan,nan,nan,0.03,0,0,-0.1,0,1\r\n");
    const auto v = read_gaze_csv(in);
    REQUIRE(v.size() == 1);
    CHECK(std::isnan(v[0].left.direction.x));
  }
}

TEST_CASE("manifest round trip and validation") {
  TrialManifest m;
  m.participant_id = "P01";
  m.environment = Environment::VR;
  m.depths_m = {0.25, 0.75, 1.5, 4.0};
  m.trials.push_back({1, 4.0, 0.25, 1.0, 2.1, LandoltDirection::Top, LandoltDirection::Top, "g1.csv"});
  m.trials.push_back({2, 0.25, 1.5, 9.0, std::nullopt, LandoltDirection::Left, LandoltDirection::Timeout, "g2.csv"});
  const auto j = manifest_to_json(m);
  const auto back = manifest_from_json(Json::parse(j.dump()));
  CHECK(manifest_to_json(back).dump() == j.dump());
  CHECK_FALSE(back.trials[1].response_s.has_value());
  CHECK_NOTHROW(back.validate(true));

  auto broken = m;
  broken.trials[1].start_depth_m = 0.75;
  CHECK_NOTHROW(broken.validate(false));
  CHECK_THROWS_AS(broken.validate(true), Error);
  broken.trials[1].end_depth_m = 2.0;
  CHECK_THROWS_AS(broken.validate(false), Error);
}

TEST_CASE("subjective CSV") {
  std::vector<SubjectiveRow> rows{{"P01", Environment::Real, 0.25, 0.3, stats::LengthUnit::Meters, 1},
                                  {"P01", Environment::AR, 4.0, 10.5, stats::LengthUnit::Feet, 3},
                                  {"P02", Environment::VR, 1.5, 48.0, stats::LengthUnit::Inches, 2}};
  std::stringstream buf;
  write_subjective_csv(buf, rows);
  const auto back = read_subjective_csv(buf);
  REQUIRE(back.size() == 3);
  CHECK(back[1].unit == stats::LengthUnit::Feet);
  CHECK(back[1].report_value == 10.5);
  CHECK(back[2].environment == Environment::VR);

  const std::string head = "participant_id,environment,depth_m,report_value,unit,repetition\n";
  std::istringstream neg(head + "P01,Real,0.25,-1,m,1\n");
  CHECK(message_of([&] { read_subjective_csv(neg, "s.csv"); }).find("s.csv:2") != std::string::npos);
  std::istringstream rep(head + "P01,Real,0.25,1,m,4\n");
  CHECK_THROWS_AS(read_subjective_csv(rep), Error);
  std::istringstream unit(head + "P01,Real,0.25,1,furlong,1\n");
  CHECK_THROWS_AS(read_subjective_csv(unit), Error);
}

TEST_CASE("GVA table round trip") {
  GvaTableRow r;
  r.participant_id = "P03";
  r.environment = Environment::AR;
  r.trial_id = 17;
  r.start_depth_m = 0.75;
  r.end_depth_m = 1.5;
  r.fixation_onset_s = 12.345;
  r.window_t0_s = 13.345;
  r.window_t1_s = 14.345;
  r.mean_gva_deg = 19.123456789;
  r.valid_fraction = 0.985;
  r.trial_valid = true;
  r.retained = true;
  r.landolt_correct = true;
  r.counts.valid = 700;
  r.counts.low_confidence = 80;
  r.counts.outlier = 3;
  GvaTableRow bad = r;
  bad.trial_id = 18;
  bad.fixation_onset_s.reset();
  bad.window_t0_s.reset();
  bad.window_t1_s.reset();
  bad.mean_gva_deg = std::nan("");
  bad.flag = pipeline::TrialFlag::NoFixation;
  bad.trial_valid = bad.retained = false;
  const std::vector<GvaTableRow> rows{r, bad};
  std::stringstream buf;
  write_gva_table(buf, rows);
  const std::string text = buf.str();
  const auto back = read_gva_table(buf);
  REQUIRE(back.size() == 2);
  std::stringstream again;
  write_gva_table(again, back);
  CHECK(again.str() == text);
  CHECK(back[0].mean_gva_deg == r.mean_gva_deg);
  CHECK_FALSE(back[1].fixation_onset_s.has_value());
  CHECK(back[1].flag == pipeline::TrialFlag::NoFixation);
  CHECK(std::isnan(back[1].mean_gva_deg));

  std::vector<GvaTableRow> comma{r};
  comma[0].participant_id = "P,1";
  std::stringstream sink;
  CHECK_THROWS_AS(write_gva_table(sink, comma), Error);
}

TEST_CASE("model JSON") {
  calib::ParticipantModel m;
  m.participant_id = "P02";
  m.environment = Environment::VR;
  m.intercept_deg = 17.123456789123457;
  m.slope_deg_per_diopter = 1.7000000000000002;
  m.residual_sd_deg = 0.1;
  m.n_points = 4;
  m.calibrated_diopter_min = 0.25;
  m.calibrated_diopter_max = 4.0;
  const std::vector<calib::ParticipantModel> ms{m};
  const auto j = models_to_json(ms);
  const auto back = models_from_json(Json::parse(j.dump()));
  REQUIRE(back.size() == 1);
  CHECK(back[0].intercept_deg == m.intercept_deg);
  CHECK(back[0].slope_deg_per_diopter == m.slope_deg_per_diopter);
  CHECK(*back[0].environment == Environment::VR);
  CHECK(models_to_json(back).dump() == j.dump());

  const auto single = models_from_json(Json::parse(R"({"participant_id":"X","intercept_deg":17.5,"slope_deg_per_diopter":1.7})"));
  REQUIRE(single.size() == 1);
  CHECK_FALSE(single[0].environment.has_value());
  CHECK_FALSE(single[0].calibrated_diopter_min.has_value());
  CHECK_THROWS_AS(models_from_json(Json::parse(R"({"participant_id":"X"})")), Error);
}

TEST_CASE("cohort config JSON") {
  synth::CohortConfig c;
  c.design.participants = 4;
  c.noise.intercept_bias_deg = 2.5;
  c.noise.slope_model = synth::SlopeModel::Geometric;
  c.environment.offsets_deg = {0.0, -0.5, -1.0};
  const auto j = config_to_json(c);
  const auto back = config_from_json(Json::parse(j.dump()));
  CHECK(config_to_json(back).dump() == j.dump());

  const auto partial = config_from_json(Json::parse(R"({"design":{"participants":2},"noise":{"spike_rate":0}})"));
  CHECK(partial.design.participants == 2);
  CHECK(partial.design.repetitions == 6);
  CHECK(partial.noise.spike_rate == 0.0);
  CHECK(partial.noise.dropout_rate == synth::NoiseModel{}.dropout_rate);
  CHECK_THROWS_AS(config_from_json(Json::parse(R"({"design":{"participant":2}})")), Error);
  CHECK_THROWS_AS(config_from_json(Json::parse(R"({"noise":{"dropout_rate":2}})")), Error);
  CHECK_THROWS_AS(config_from_json(Json::parse(R"({"environment":{"offsets_deg":[1,0,0]}})")), Error);
  CHECK_THROWS_AS(config_from_json(Json::parse(R"({"design":{"repetitions":"six"}})")), Error);
}

TEST_CASE("dataset directory round trip") {
  synth::CohortConfig cfg;
  cfg.design.participants = 2;
  cfg.design.repetitions = 1;
  cfg.timeout_rate = 0.2;
  const auto cohort = synth::simulate_cohort(cfg, 5, 2);
  TempDir tmp;
  write_dataset(cohort, tmp.path, 2);
  const auto ds = read_dataset(tmp.path, 2);
  REQUIRE(ds.trials.size() == cohort.trials.size());
  bool identical = true;
  for (std::size_t i = 0; i < ds.trials.size(); ++i) {
    const auto& a = ds.trials[i];
    const auto& b = cohort.trials[i].record;
    identical = identical && a.participant_id == b.participant_id && a.environment == b.environment &&
                a.trial_id == b.trial_id && a.start_depth_m == b.start_depth_m && a.end_depth_m == b.end_depth_m &&
                a.stimulus_onset_s == b.stimulus_onset_s && a.response_s == b.response_s &&
                a.landolt_dir == b.landolt_dir && a.landolt_response == b.landolt_response &&
                a.landolt_correct == b.landolt_correct && a.samples.size() == b.samples.size();
    for (std::size_t k = 0; identical && k < a.samples.size(); ++k) identical = same_sample(a.samples[k], b.samples[k]);
  }
  CHECK(identical);
  CHECK(ds.subjective.size() == cohort.subjective.size());

  const auto ledger = read_json_file(tmp.path / "ledger.json");
  std::size_t tagged = 0;
  for (const auto& run : ledger.at("artifacts")) tagged += run.at("count").get<std::size_t>();
  CHECK(tagged == cohort.artifact_count());
  CHECK(ledger.at("participants").size() == 2);
  CHECK(ledger.at("env_offsets").at("VR").get<double>() == -1.3);

  const auto cfg_back = config_from_json(read_json_file(tmp.path / "design.json"));
  CHECK(cfg_back.design.participants == 2);

  CHECK_THROWS_AS(read_dataset(tmp.path / "missing"), Error);
}
