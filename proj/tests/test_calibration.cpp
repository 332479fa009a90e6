#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "vergescope/calibration.hpp"
#include "vergescope/error.hpp"

using namespace vergescope;
using namespace vergescope::calib;

namespace {

std::vector<DepthGva> line(double a, double b, const std::vector<double>& ds) {
  std::vector<DepthGva> pts;
  for (double d : ds) pts.push_back({d, a + b * d});
  return pts;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::Usage;
}

}  // namespace

TEST_CASE("noiseless line recovery") {
  const auto m = fit_participant("P01", line(17.5, 1.7, {0.25, 2.0 / 3.0, 4.0 / 3.0, 4.0}));
  CHECK(std::abs(m.intercept_deg - 17.5) < 1e-9);
  CHECK(std::abs(m.slope_deg_per_diopter - 1.7) < 1e-9);
  CHECK(m.residual_sd_deg < 1e-9);
  CHECK(m.n_points == 4);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> a(-30, 40), b(0.1, 5), d(0.1, 6);
  for (int i = 0; i < 500; ++i) {
    const double A = a(rng), B = b(rng);
    std::vector<double> ds{d(rng), d(rng), d(rng)};
    const auto fit = fit_participant("P", line(A, B, ds));
    CHECK(fit.intercept_deg == doctest::Approx(A).epsilon(1e-9).scale(1.0));
    CHECK(fit.slope_deg_per_diopter == doctest::Approx(B).epsilon(1e-8));
  }
}

TEST_CASE("two-point fit") {
  const std::vector<DepthGva> pts{{0.25, 1.0}, {4.0, 2.0}};
  const auto m = fit_participant("P", pts);
  CHECK(m.slope_deg_per_diopter == doctest::Approx(1.0 / 3.75));
  CHECK(m.intercept_deg == doctest::Approx(1.0 - 0.25 / 3.75));
  CHECK(m.residual_sd_deg == 0.0);
}

TEST_CASE("fit errors") {
  CHECK(code_of([] { fit_participant("P", line(1, 1, {2.0, 2.0, 2.0})); }) == ErrorCode::RankDeficient);
  CHECK(code_of([] { fit_participant("P", line(1, 1, {2.0})); }) == ErrorCode::RankDeficient);
  CHECK(code_of([] { fit_participant("P", line(1, -1, {1.0, 2.0})); }) == ErrorCode::InvalidModel);
}

TEST_CASE("normalization") {
  ParticipantModel m;
  m.participant_id = "P01";
  m.intercept_deg = 17.5;
  m.slope_deg_per_diopter = 1.7;
  GvaObservation o{"P01", Environment::Real, 1.0, 17.5, {}};
  CHECK(*normalize_gva(o, m).normalized_gva_deg == 0.0);
  o.gva_deg = 24.3;
  CHECK(*normalize_gva(o, m).normalized_gva_deg == doctest::Approx(6.8));
  o.participant_id = "P02";
  CHECK(code_of([&] { normalize_gva(o, m); }) == ErrorCode::Lookup);
}

TEST_CASE("normalization is a pure shift for per-participant refits") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0, 0.5);
  std::vector<DepthGva> raw, shifted;
  for (double d : {0.25, 2.0 / 3.0, 4.0 / 3.0, 4.0})
    for (int k = 0; k < 5; ++k) raw.push_back({d, 12.0 + 1.6 * d + g(rng)});
  const auto m = fit_participant("P", raw);
  for (const auto& p : raw) shifted.push_back({p.diopters, p.gva_deg - m.intercept_deg});
  const auto n = fit_participant("P", shifted);
  CHECK(std::abs(n.intercept_deg) < 1e-12);
  CHECK(n.slope_deg_per_diopter == doctest::Approx(m.slope_deg_per_diopter).epsilon(1e-12));
  CHECK(n.residual_sd_deg == doctest::Approx(m.residual_sd_deg).epsilon(1e-12));
}

TEST_CASE("depth estimation inverts the line") {
  ParticipantModel m;
  m.participant_id = "P";
  m.intercept_deg = 17.5;
  m.slope_deg_per_diopter = 1.7;
  auto e = estimate_depth(17.5 + 1.7 * 4, m);
  CHECK(e.diopters == doctest::Approx(4.0));
  CHECK(e.meters == doctest::Approx(0.25));
  CHECK(code_of([&] { estimate_depth(17.5, m); }) == ErrorCode::OutOfRange);
  CHECK(code_of([&] { estimate_depth(10.0, m); }) == ErrorCode::OutOfRange);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> dd(0.01, 20.0);
  for (int i = 0; i < 1000; ++i) {
    const double D = dd(rng);
    CHECK(estimate_depth(m.intercept_deg + m.slope_deg_per_diopter * D, m).diopters ==
          doctest::Approx(D).epsilon(1e-12));
  }

  m.calibrated_diopter_min = 0.25;
  m.calibrated_diopter_max = 4.0;
  CHECK(estimate_depth(17.5 + 1.7 * 7.7, m).diopters == doctest::Approx(7.7));
  CHECK(code_of([&] { estimate_depth(17.5 + 1.7 * 7.8, m); }) == ErrorCode::OutOfRange);

  m.slope_deg_per_diopter = 0.0;
  CHECK(code_of([&] { estimate_depth(20.0, m); }) == ErrorCode::InvalidModel);
}

TEST_CASE("model selection prefers the per-environment fit") {
  std::vector<ParticipantModel> ms(3);
  ms[0].participant_id = "P";
  ms[1].participant_id = "P";
  ms[1].environment = Environment::VR;
  ms[1].intercept_deg = 1.0;
  ms[2].participant_id = "Q";
  CHECK(&select_model(ms, "P") == &ms[0]);
  CHECK(&select_model(ms, "P", Environment::VR) == &ms[1]);
  CHECK(&select_model(ms, "P", Environment::AR) == &ms[0]);
  CHECK(code_of([&] { select_model(ms, "R"); }) == ErrorCode::Lookup);
}

TEST_CASE("environment offsets") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0, 0.2);
  const double offs[3] = {0.0, -0.8, -1.3};
  std::vector<GvaObservation> obs;
  for (int p = 0; p < 13; ++p)
    for (auto env : kAllEnvironments)
      for (double d : {0.25, 2.0 / 3.0, 4.0 / 3.0, 4.0})
        obs.push_back({"P" + std::to_string(p), env, d, 0.0, 0.7 + 1.7 * d + offs[static_cast<int>(env)] + g(rng)});
  const auto r = environment_offsets(obs);
  CHECK(r.ar_minus_real == doctest::Approx(-0.8).epsilon(0.1 / 0.8));
  CHECK(r.vr_minus_real == doctest::Approx(-1.3).epsilon(0.1 / 1.3));
  CHECK(r.slope == doctest::Approx(1.7).epsilon(0.05));
  CHECK(r.intercepts[1] - r.intercepts[0] == doctest::Approx(r.ar_minus_real));

  for (auto& o : obs) o.normalized_gva_deg = 0.7 + 1.7 * o.end_depth_d;
  const auto flat = environment_offsets(obs);
  CHECK(std::abs(flat.ar_minus_real) < 1e-9);
  CHECK(std::abs(flat.vr_minus_real) < 1e-9);

  std::vector<GvaObservation> real_only;
  for (const auto& o : obs)
    if (o.environment == Environment::Real) real_only.push_back(o);
  CHECK(code_of([&] { environment_offsets(real_only); }) == ErrorCode::MissingLevel);
}

TEST_CASE("streaming estimator") {
  ParticipantModel m;
  m.participant_id = "P";
  m.intercept_deg = 17.5;
  m.slope_deg_per_diopter = 1.7;
  StreamingEstimator est(m, {0.75, 5000.0, 0.02, VergenceMode::Full3D});
  auto o = est.push_gva(0.000, 24.3);
  CHECK(o.depth_m == doctest::Approx(0.25));
  o = est.push_gva(0.005, 24.3 + 40.0);  // 8000 deg/s spike
  CHECK(std::isnan(o.gva_deg));
  CHECK(o.depth_m == doctest::Approx(0.25));
  o = est.push_gva(0.010, NAN);
  CHECK(std::isnan(o.gva_deg));
  o = est.push_gva(0.030, 17.5 + 1.7 * 0.25);  // window only holds this one
  CHECK(o.depth_m == doctest::Approx(4.0));
  CHECK_THROWS_AS(est.push_gva(0.030, 20.0), Error);

  StreamingEstimator low(m);
  const auto eyes = EyeConfig::symmetric(0.0648);
  const auto [l, r] = forward_gaze(TargetSpec::midline(1.0), eyes);
  o = low.push(0.0, l, r, 0.5, 1.0);
  CHECK(std::isnan(o.gva_deg));
  CHECK(std::isnan(o.depth_m));
}
