#include <cmath>
#include <cstring>
#include <tuple>
#include <numbers>
#include <random>
#include <vector>

#include "doctest.h"
#include "vergescope/geometry.hpp"
#include "vergescope/pipeline.hpp"

using namespace vergescope;
using namespace vergescope::pipeline;

namespace {

constexpr double kDt = 0.005;
constexpr double kRad = std::numbers::pi / 180.0;

// Sample with the given vergence (deg) and cyclopean azimuth (deg).
BinocularSample sample_at(double t, double gva, double azimuth = 0.0) {
  BinocularSample s;
  s.t_s = t;
  const double a = azimuth * kRad;
  const double h = 0.5 * gva * kRad;
  s.left = {{-0.0324, 0, 0}, {std::sin(a + h), 0.0, std::cos(a + h)}};
  s.right = {{0.0324, 0, 0}, {std::sin(a - h), 0.0, std::cos(a - h)}};
  return s;
}

TrialRecord trial_from(const std::vector<double>& gva, double onset = 0.0) {
  TrialRecord tr;
  tr.participant_id = "P01";
  tr.stimulus_onset_s = onset;
  for (std::size_t i = 0; i < gva.size(); ++i) tr.samples.push_back(sample_at(i * kDt, gva[i]));
  compute_gva(tr);
  return tr;
}

std::size_t count_status(const TrialRecord& t, SampleStatus s) {
  std::size_t n = 0;
  for (const auto& x : t.samples) n += x.status == s;
  return n;
}

std::vector<SampleStatus> statuses(const TrialRecord& t) {
  std::vector<SampleStatus> v;
  for (const auto& s : t.samples) v.push_back(s.status);
  return v;
}

}  // namespace

TEST_CASE("gva from constructed rays") {
  auto tr = trial_from({3.0, 5.0, 14.768747095756739});
  CHECK(tr.gva[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(tr.gva[1] == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(tr.gva[2] == doctest::Approx(14.768747095756739).epsilon(1e-12));

  tr.samples[1].left.direction = {NAN, 0, 1};
  compute_gva(tr);
  CHECK(tr.samples[1].status == SampleStatus::Missing);
  CHECK(std::isnan(tr.gva[1]));
}

TEST_CASE("confidence filter") {
  auto tr = trial_from(std::vector<double>(20, 4.0));
  CHECK(count_status(confidence_filter(tr), SampleStatus::LowConfidence) == 0);
  tr.samples[7].left_conf = 0.74;
  tr.samples[9].right_conf = 0.75;  // boundary stays valid
  const auto out = confidence_filter(tr);
  CHECK(count_status(out, SampleStatus::LowConfidence) == 1);
  CHECK(out.samples[7].status == SampleStatus::LowConfidence);
  CHECK(out.samples.size() == tr.samples.size());
  CHECK(statuses(confidence_filter(out)) == statuses(out));
}

TEST_CASE("confidence filter removes exactly the injected dropouts") {
  auto tr = trial_from(std::vector<double>(1000, 4.0));
  for (std::size_t i = 0; i < 1000; i += 10) tr.samples[i].left_conf = tr.samples[i].right_conf = 0.0;
  CHECK(count_status(confidence_filter(tr), SampleStatus::LowConfidence) == 100);
}

TEST_CASE("velocity filter") {
  std::vector<double> ramp;
  for (int i = 0; i < 200; ++i) ramp.push_back(2.0 + 50.0 * i * kDt);
  CHECK(count_status(velocity_filter(trial_from(ramp)), SampleStatus::VelocitySpike) == 0);

  std::vector<double> flat(200, 4.0);
  flat[50] += 30.0;   // 6000 deg/s in, 6000 deg/s out
  flat[120] += 30.0;
  const auto out = velocity_filter(trial_from(flat));
  CHECK(count_status(out, SampleStatus::VelocitySpike) == 2);
  CHECK(out.samples[50].status == SampleStatus::VelocitySpike);
  CHECK(out.samples[51].status == SampleStatus::Valid);
  CHECK(out.samples[120].status == SampleStatus::VelocitySpike);
  CHECK(statuses(velocity_filter(out)) == statuses(out));

  std::vector<double> edge(10, 4.0);
  edge[3] = 4.0 + 5000.0 * kDt * 0.999;  // just under 5000 deg/s
  CHECK(count_status(velocity_filter(trial_from(edge)), SampleStatus::VelocitySpike) == 0);
}

TEST_CASE("outlier filter") {
  std::vector<double> v(100, 10.0);
  v.push_back(50.0);
  auto out = outlier_filter(trial_from(v));
  CHECK(count_status(out, SampleStatus::Outlier) == 1);
  CHECK(out.samples.back().status == SampleStatus::Outlier);
  // oracle: mean/SD over 101 values
  double mean = (100 * 10.0 + 50.0) / 101.0;
  double ss = 100 * (10.0 - mean) * (10.0 - mean) + (50.0 - mean) * (50.0 - mean);
  CHECK(std::abs(50.0 - mean) >= 2.5 * std::sqrt(ss / 100.0));
  CHECK(statuses(outlier_filter(out)) == statuses(out));

  CHECK(count_status(outlier_filter(trial_from(std::vector<double>(50, 7.0))), SampleStatus::Outlier) == 0);
  CHECK(count_status(outlier_filter(trial_from({7.0})), SampleStatus::Outlier) == 0);
}

TEST_CASE("outlier filter on Gaussian data removes the 2.5 SD tails") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(8.0, 0.5);
  std::vector<double> v(10000);
  for (auto& x : v) x = g(rng);
  const auto out = outlier_filter(trial_from(v));
  const double pct = 100.0 * count_status(out, SampleStatus::Outlier) / 10000.0;
  CHECK(pct == doctest::Approx(1.2419).epsilon(0.3 / 1.2419));
}

TEST_CASE("filters only shrink the valid set") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(5.0, 1.0);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> v(600);
  for (auto& x : v) x = g(rng) + (u(rng) < 0.01 ? 40.0 : 0.0);
  auto tr = trial_from(v);
  for (auto& s : tr.samples) s.left_conf = u(rng);
  auto a = confidence_filter(tr);
  auto b = velocity_filter(a);
  auto c = outlier_filter(b);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!a.samples[i].valid()) CHECK(!b.samples[i].valid());
    if (!b.samples[i].valid()) CHECK(!c.samples[i].valid());
  }
  CHECK(c.samples.size() == v.size());
}

TEST_CASE("fixation onset") {
  SUBCASE("stable from stimulus onset") {
    auto tr = trial_from(std::vector<double>(400, 4.0), 0.5);
    const auto f = detect_fixation_onset(tr);
    REQUIRE(f);
    CHECK(*f == doctest::Approx(0.75));
  }
  SUBCASE("saccade landing 300 ms after onset") {
    TrialRecord tr;
    tr.stimulus_onset_s = 0.5;
    for (int i = 0; i < 600; ++i) {
      const double t = i * kDt;
      // 20 deg saccade between 0.75 s and 0.80 s
      double az = 20.0;
      if (t >= 0.80) az = 0.0;
      else if (t > 0.75) az = 20.0 * (0.80 - t) / 0.05;
      tr.samples.push_back(sample_at(t, 4.0, az));
    }
    compute_gva(tr);
    const auto f = detect_fixation_onset(tr);
    REQUIRE(f);
    CHECK(std::abs(*f - 0.80) <= kDt + 1e-9);
  }
  SUBCASE("continuous pursuit never fixates") {
    TrialRecord tr;
    for (int i = 0; i < 600; ++i) tr.samples.push_back(sample_at(i * kDt, 4.0, -30.0 + 20.0 * i * kDt));
    compute_gva(tr);
    CHECK_FALSE(detect_fixation_onset(tr));
  }
  SUBCASE("fixation must precede the response") {
    auto tr = trial_from(std::vector<double>(400, 4.0), 0.5);
    tr.response_s = 0.7;
    CHECK_FALSE(detect_fixation_onset(tr));
  }
}

TEST_CASE("analysis window") {
  auto tr = trial_from(std::vector<double>(600, 4.0));
  tr.fixation_onset_s = 0.40;
  auto w = analysis_window(tr);
  REQUIRE(w);
  CHECK(w->t0 == doctest::Approx(1.40));
  CHECK(w->t1 == doctest::Approx(2.40));
  tr.fixation_onset_s = 0.0;
  w = analysis_window(tr);
  REQUIRE(w);
  CHECK(w->t0 == 1.0);
  CHECK(w->t1 == 2.0);

  auto short_trial = trial_from(std::vector<double>(421, 4.0));  // ends at 2.1 s
  short_trial.fixation_onset_s = 1.2;
  CHECK_FALSE(analysis_window(short_trial));
}

TEST_CASE("window mean") {
  const auto eyes = EyeConfig::symmetric(0.0648);
  TrialRecord tr;
  for (int i = 0; i < 600; ++i) {
    BinocularSample s;
    s.t_s = i * kDt;
    std::tie(s.left, s.right) = forward_gaze(TargetSpec::midline(0.25), eyes);
    tr.samples.push_back(s);
  }
  compute_gva(tr);
  auto m = trial_mean_gva(tr, {1.0, 2.0});
  CHECK(m.n_slots == 200);
  CHECK(m.valid_fraction == 1.0);
  CHECK(std::abs(m.mean_gva_deg - 14.768747095756739) < 1e-6);

  auto half = trial_from(std::vector<double>(600, 10.0));
  for (int i = 200; i < 400; i += 2) half.samples[i].status = SampleStatus::LowConfidence;
  m = trial_mean_gva(half, {1.0, 2.0});
  CHECK(m.mean_gva_deg == doctest::Approx(10.0));
  CHECK(m.valid_fraction == 0.5);
  CHECK_FALSE(trial_validity(m.valid_fraction));

  std::mt19937_64 rng(21);
  std::normal_distribution<double> g(4.0, 0.5);
  std::vector<double> noisy(600);
  for (auto& x : noisy) x = g(rng);
  m = trial_mean_gva(trial_from(noisy), {1.0, 2.0});
  CHECK(std::abs(m.mean_gva_deg - 4.0) < 3.0 * 0.5 / std::sqrt(200.0));
}

TEST_CASE("trial validity boundary") {
  static_assert(trial_validity(0.51));
  static_assert(!trial_validity(0.50));
  static_assert(trial_validity(1.0));
  static_assert(!trial_validity(0.0));
}

TEST_CASE("process_trial flags") {
  auto tr = trial_from(std::vector<double>(800, 4.0), 0.5);
  auto o = process_trial(tr);
  CHECK(o.flag == TrialFlag::Ok);
  CHECK(o.valid);
  CHECK(o.mean_gva_deg == doctest::Approx(4.0));

  auto short_tr = trial_from(std::vector<double>(300, 4.0), 0.5);
  CHECK(process_trial(short_tr).flag == TrialFlag::ShortTrial);
}

namespace {

TrialOutcome outcome(const std::string& p, Environment env, double s, double e, bool valid) {
  TrialOutcome o;
  o.participant_id = p;
  o.environment = env;
  o.start_depth_m = s;
  o.end_depth_m = e;
  o.valid = valid;
  o.counts.valid = 10;
  return o;
}

const double kDepths[] = {0.25, 0.75, 1.5, 4.0};

// 12 pairs x 6 trials; `valid_trials(pair_index)` valid trials per pair.
void add_environment(std::vector<TrialOutcome>& v, const std::string& p, Environment env,
                     int valid_pairs, int valid_trials_in_good_pairs) {
  int pair = 0;
  for (double s : kDepths)
    for (double e : kDepths) {
      if (s == e) continue;
      const int good = pair < valid_pairs ? valid_trials_in_good_pairs : 2;
      for (int k = 0; k < 6; ++k) v.push_back(outcome(p, env, s, e, k < good));
      ++pair;
    }
}

}  // namespace

TEST_CASE("hierarchical validity gates") {
  std::vector<TrialOutcome> v;
  // P01: fully valid, pairs sit on the >= 3 boundary
  for (auto env : kAllEnvironments) add_environment(v, "P01", env, 12, 3);
  // P02: VR has only 5 valid pairs
  add_environment(v, "P02", Environment::Real, 12, 6);
  add_environment(v, "P02", Environment::AR, 6, 6);
  add_environment(v, "P02", Environment::VR, 5, 6);

  const auto r = cascade_validity(v);
  CHECK(r.pair_valid({"P01", Environment::AR, 0.25, 0.75}));
  CHECK(r.participant_retained("P01"));
  CHECK_FALSE(r.participant_retained("P02"));
  for (const auto& e : r.environments) {
    if (e.participant_id == "P02" && e.environment == Environment::VR) {
      CHECK(e.valid_pairs == 5);
      CHECK_FALSE(e.valid);
    }
    if (e.participant_id == "P02" && e.environment == Environment::AR) CHECK(e.valid);
  }
  REQUIRE(r.retained_participants.size() == 1);
  CHECK(r.totals.total() == v.size() * 10);

  std::size_t kept = 0;
  for (const auto& o : v) kept += retained(o, r);
  CHECK(kept == 3 * 12 * 3);

  const auto empty = cascade_validity({});
  CHECK(empty.participants.empty());
  CHECK(empty.retained_participants.empty());
}

TEST_CASE("landolt accuracy bookkeeping") {
  std::vector<TrialOutcome> v;
  for (int i = 0; i < 100; ++i) {
    auto o = outcome("P01", Environment::Real, 0.25, 0.75, true);
    o.landolt_correct = i % 50 != 0;
    v.push_back(o);
  }
  const auto r = cascade_validity(v);
  CHECK(r.landolt_total == 100);
  CHECK(r.landolt_correct == 98);
  CHECK(r.landolt_accuracy() == doctest::Approx(0.98));
}

TEST_CASE("process_trials is independent of the worker count") {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> g(0.0, 0.2);
  std::vector<TrialRecord> trials;
  for (int k = 0; k < 24; ++k) {
    std::vector<double> v(700);
    for (auto& x : v) x = 3.0 + k * 0.1 + g(rng);
    trials.push_back(trial_from(v, 0.5));
    trials.back().trial_id = k;
  }
  auto a = trials;
  auto b = trials;
  const auto oa = process_trials(a, {}, 1);
  const auto ob = process_trials(b, {}, 4);
  REQUIRE(oa.size() == ob.size());
  for (std::size_t i = 0; i < oa.size(); ++i) {
    CHECK(oa[i].trial_id == ob[i].trial_id);
    CHECK(std::memcmp(&oa[i].mean_gva_deg, &ob[i].mean_gva_deg, sizeof(double)) == 0);
    CHECK(oa[i].valid_fraction == ob[i].valid_fraction);
    CHECK(statuses(a[i]) == statuses(b[i]));
  }
}
