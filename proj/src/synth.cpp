#include "vergescope/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>

#include "vergescope/error.hpp"
#include "vergescope/geometry.hpp"
#include "vergescope/parallel.hpp"

namespace vergescope::synth {
namespace {

constexpr double kRad = std::numbers::pi / 180.0;

std::size_t depth_index(const ExperimentDesign& d, double depth) {
  for (std::size_t i = 0; i < d.depths_m.size(); ++i)
    if (d.depths_m[i] == depth) return i;
  throw Error(ErrorCode::Lookup, "depth " + std::to_string(depth) + " is not in the design");
}

// Fraction of the vergence change still outstanding s seconds after the
// movement began. Exponential with time constant tau, shifted so it reaches
// exactly zero at the horizon.
double residual(double s, double tau, double horizon) {
  if (s <= 0.0) return 1.0;
  if (s >= horizon) return 0.0;
  const double tail = std::exp(-horizon / tau);
  return (std::exp(-s / tau) - tail) / (1.0 - tail);
}

Vec3 eye_direction(double azimuth_deg, double elevation_deg) {
  const double a = azimuth_deg * kRad;
  const double e = elevation_deg * kRad;
  return {std::sin(a) * std::cos(e), std::sin(e), std::cos(a) * std::cos(e)};
}

double truncated_normal(std::mt19937_64& rng, double mean, double sd, double lo, double hi) {
  if (sd <= 0.0) return std::clamp(mean, lo, hi);
  std::normal_distribution<double> g(mean, sd);
  for (int i = 0; i < 1000; ++i) {
    const double v = g(rng);
    if (v >= lo && v <= hi) return v;
  }
  return std::clamp(mean, lo, hi);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::string_view artifact_name(ArtifactKind k) noexcept {
  switch (k) {
    case ArtifactKind::Dropout: return "dropout";
    case ArtifactKind::Spike: return "spike";
    case ArtifactKind::Outlier: return "outlier";
  }
  return "?";
}

std::vector<std::pair<double, double>> ExperimentDesign::depth_pairs() const {
  std::vector<std::pair<double, double>> out;
  for (double s : depths_m)
    for (double e : depths_m)
      if (s != e) out.emplace_back(s, e);
  return out;
}

void ExperimentDesign::validate() const {
  if (depths_m.size() < 2) throw Error(ErrorCode::InvalidModel, "design needs at least two depths");
  if (target_azimuth_deg.size() != depths_m.size())
    throw Error(ErrorCode::InvalidModel, "design needs one target azimuth per depth");
  for (std::size_t i = 0; i < depths_m.size(); ++i) {
    if (!(depths_m[i] > 0.0)) throw Error(ErrorCode::InvalidModel, "design depths must be positive");
    for (std::size_t j = 0; j < i; ++j)
      if (depths_m[i] == depths_m[j]) throw Error(ErrorCode::InvalidModel, "design depths must be distinct");
  }
  if (repetitions < 1 || participants < 1) throw Error(ErrorCode::InvalidModel, "repetitions and participants must be >= 1");
  if (!(sample_rate_hz > 0.0)) throw Error(ErrorCode::InvalidModel, "sample rate must be positive");
  if (!(response_window_s > 0.0) || !(pre_stimulus_s >= 0.0)) throw Error(ErrorCode::InvalidModel, "bad trial timing");
  if (!(iti_min_s >= 0.0) || iti_max_s < iti_min_s) throw Error(ErrorCode::InvalidModel, "bad inter-trial interval");
  if (subjective_repetitions < 1) throw Error(ErrorCode::InvalidModel, "need at least one verbal report");
}

NoiseModel NoiseModel::noiseless() {
  NoiseModel n;
  n.sample_noise_sd_deg = 0.0;
  n.direction_noise_sd_deg = 0.0;
  n.dropout_rate = 0.0;
  n.spike_rate = 0.0;
  n.outlier_rate = 0.0;
  return n;
}

void NoiseModel::validate() const {
  auto rate = [](double r) { return r >= 0.0 && r <= 1.0; };
  if (!rate(dropout_rate) || !rate(spike_rate) || !rate(outlier_rate))
    throw Error(ErrorCode::InvalidModel, "artifact rates must lie in [0, 1]");
  if (sample_noise_sd_deg < 0.0 || direction_noise_sd_deg < 0.0 || intercept_sd_deg < 0.0 || slope_sd < 0.0 ||
      ipd_sd_m < 0.0)
    throw Error(ErrorCode::InvalidModel, "standard deviations must be >= 0");
  if (!(dropout_burst_mean >= 1.0)) throw Error(ErrorCode::InvalidModel, "dropout bursts last at least one sample");
  if (!(settle_min_s > 0.0) || settle_max_s < settle_min_s) throw Error(ErrorCode::InvalidModel, "bad settle time range");
  if (!(latency_min_s >= 0.0) || latency_max_s < latency_min_s) throw Error(ErrorCode::InvalidModel, "bad latency range");
  if (!(vergence_horizon_s > settle_max_s)) throw Error(ErrorCode::InvalidModel, "vergence horizon must exceed settle time");
}

std::vector<SequencedTrial> generate_sequence(const ExperimentDesign& design, Environment env, std::mt19937_64& rng) {
  design.validate();
  const std::size_t k = design.depths_m.size();
  // Every vertex has equal in- and out-degree, so an Euler circuit through all
  // arc copies exists from any start; Hierholzer over shuffled arc lists.
  std::vector<std::vector<std::size_t>> arcs(k);
  for (std::size_t s = 0; s < k; ++s) {
    for (std::size_t e = 0; e < k; ++e)
      if (s != e)
        for (int r = 0; r < design.repetitions; ++r) arcs[s].push_back(e);
    std::shuffle(arcs[s].begin(), arcs[s].end(), rng);
  }
  std::uniform_int_distribution<std::size_t> pick(0, k - 1);
  const std::size_t first = pick(rng);

  std::vector<std::size_t> stack{first};
  std::vector<std::size_t> circuit;
  while (!stack.empty()) {
    const std::size_t v = stack.back();
    if (!arcs[v].empty()) {
      stack.push_back(arcs[v].back());
      arcs[v].pop_back();
    } else {
      circuit.push_back(v);
      stack.pop_back();
    }
  }
  std::reverse(circuit.begin(), circuit.end());

  std::vector<SequencedTrial> out;
  out.reserve(circuit.size() - 1);
  for (std::size_t i = 0; i + 1 < circuit.size(); ++i)
    out.push_back({static_cast<int>(i + 1), env, design.depths_m[circuit[i]], design.depths_m[circuit[i + 1]]});
  return out;
}

std::vector<SequencedTrial> generate_sequence(const ExperimentDesign& design, Environment env, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return generate_sequence(design, env, rng);
}

std::pair<double, double> ideal_line(const ExperimentDesign& design, double ipd_m) {
  const std::size_t n = design.depths_m.size();
  double mx = 0.0, my = 0.0;
  for (double d : design.depths_m) {
    mx += 1.0 / d;
    my += ideal_vergence(d, ipd_m);
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (double d : design.depths_m) {
    const double x = 1.0 / d - mx;
    sxx += x * x;
    sxy += x * (ideal_vergence(d, ipd_m) - my);
  }
  const double b = sxy / sxx;
  return {my - b * mx, b};
}

SimulatedTrial simulate_trial(const SequencedTrial& spec, const Physiology& who, const CohortConfig& cfg,
                              std::int64_t first_sample_index, std::uint64_t seed) {
  const auto& design = cfg.design;
  const auto& nm = cfg.noise;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const double rate = design.sample_rate_hz;
  const auto pre = static_cast<std::int64_t>(std::llround(design.pre_stimulus_s * rate));
  const auto post = static_cast<std::int64_t>(std::llround(design.response_window_s * rate));
  const auto n = static_cast<std::size_t>(pre + post);
  auto time_of = [&](std::size_t i) { return static_cast<double>(first_sample_index + static_cast<std::int64_t>(i)) / rate; };

  const double offset = cfg.environment.offsets_deg[static_cast<int>(spec.environment)];
  const double v_start = ideal_vergence(spec.start_depth_m, who.ipd_m) + who.intercept_bias_deg + offset;
  const double v_end = ideal_vergence(spec.end_depth_m, who.ipd_m) + who.intercept_bias_deg + offset;
  const double az_start = design.target_azimuth_deg[depth_index(design, spec.start_depth_m)] -
                          design.target_azimuth_deg[depth_index(design, spec.end_depth_m)];
  const double amplitude = std::fabs(az_start);

  SimulatedTrial out;
  auto& rec = out.record;
  rec.participant_id = who.id;
  rec.environment = spec.environment;
  rec.trial_id = spec.trial_id;
  rec.start_depth_m = spec.start_depth_m;
  rec.end_depth_m = spec.end_depth_m;
  rec.stimulus_onset_s = time_of(static_cast<std::size_t>(pre));

  const double latency = nm.latency_min_s + (nm.latency_max_s - nm.latency_min_s) * unit(rng);
  const double saccade_duration = 0.021 + 0.0022 * amplitude;  // main-sequence duration
  const double t_move = rec.stimulus_onset_s + latency;
  const double t_land = t_move + saccade_duration;
  const double tau = who.settle_time_s / 3.0;
  out.truth = {t_move, t_land, v_end, v_start};

  // artifact layout
  enum : std::uint8_t { kNone, kDrop, kSpike, kOutlier };
  std::vector<std::uint8_t> art(n, kNone);
  if (nm.dropout_rate > 0.0) {
    const double p_start = nm.dropout_rate / nm.dropout_burst_mean;
    std::geometric_distribution<int> extra(1.0 / nm.dropout_burst_mean);
    for (std::size_t i = 0; i < n; ++i) {
      if (unit(rng) >= p_start) continue;
      const std::size_t len = 1 + static_cast<std::size_t>(extra(rng));
      for (std::size_t j = i; j < std::min(n, i + len); ++j) art[j] = kDrop;
      i += len;  // keep one clean sample between bursts
    }
  }
  auto isolated = [&](std::size_t i) {
    return art[i] == kNone && art[i - 1] == kNone && (i + 1 >= n || art[i + 1] == kNone);
  };
  for (std::size_t i = 1; i < n && nm.spike_rate > 0.0; ++i)
    if (unit(rng) < nm.spike_rate && isolated(i)) art[i] = kSpike;
  for (std::size_t i = 1; i < n && nm.outlier_rate > 0.0; ++i)
    if (time_of(i) >= t_move + nm.vergence_horizon_s && unit(rng) < nm.outlier_rate && isolated(i)) art[i] = kOutlier;

  std::normal_distribution<double> std_normal(0.0, 1.0);
  const double half_ipd = 0.5 * who.ipd_m;
  rec.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = time_of(i);
    double az = 0.0;
    if (t < t_move) az = az_start;
    else if (t < t_land) az = az_start * (1.0 - (t - t_move) / saccade_duration);
    double v = v_end + (v_start - v_end) * residual(t - t_move, tau, nm.vergence_horizon_s);

    // fixed draw order per sample keeps streams aligned across configurations
    const double g_v = std_normal(rng);
    const double g_laz = std_normal(rng), g_lel = std_normal(rng);
    const double g_raz = std_normal(rng), g_rel = std_normal(rng);
    const double c_l = unit(rng), c_r = unit(rng);
    const double junk_l = unit(rng), junk_r = unit(rng);

    v += nm.sample_noise_sd_deg * g_v;
    if (art[i] == kSpike) v += nm.spike_deg;
    if (art[i] == kOutlier) v += nm.outlier_deg;
    const double dn = nm.direction_noise_sd_deg;
    double l_az = az + 0.5 * v + dn * g_laz;
    double r_az = az - 0.5 * v + dn * g_raz;
    double l_el = dn * g_lel;
    double r_el = dn * g_rel;

    auto& s = rec.samples[i];
    s.t_s = t;
    s.left_conf = 0.8 + 0.2 * c_l;
    s.right_conf = 0.8 + 0.2 * c_r;
    if (art[i] == kDrop) {
      // tracker lost the pupil: garbage directions, zero confidence
      s.left_conf = 0.0;
      s.right_conf = 0.0;
      l_az += 30.0 * (junk_l - 0.5);
      r_az -= 30.0 * (junk_r - 0.5);
      l_el += 20.0 * (junk_r - 0.5);
      r_el += 20.0 * (junk_l - 0.5);
    }
    s.left = {{-half_ipd, 0.0, 0.0}, eye_direction(l_az, l_el)};
    s.right = {{half_ipd, 0.0, 0.0}, eye_direction(r_az, r_el)};

    if (art[i] != kNone) {
      const ArtifactKind kind =
          art[i] == kDrop ? ArtifactKind::Dropout : (art[i] == kSpike ? ArtifactKind::Spike : ArtifactKind::Outlier);
      out.artifacts.push_back({who.id, spec.environment, spec.trial_id, i, t, kind});
    }
  }

  // Landolt C response
  std::uniform_int_distribution<int> dir4(0, 3);
  std::uniform_int_distribution<int> other3(1, 3);
  rec.landolt_dir = static_cast<LandoltDirection>(dir4(rng));
  const double rt = t_land + 0.3 + 0.9 * unit(rng);
  const bool timeout = unit(rng) < cfg.timeout_rate || rt > rec.stimulus_onset_s + design.response_window_s;
  const bool correct = unit(rng) < cfg.landolt_accuracy;
  const int wrong = other3(rng);
  if (timeout) {
    rec.landolt_response = LandoltDirection::Timeout;
    rec.landolt_correct = false;
  } else {
    rec.response_s = rt;
    rec.landolt_correct = correct;
    rec.landolt_response =
        correct ? rec.landolt_dir : static_cast<LandoltDirection>((static_cast<int>(rec.landolt_dir) + wrong) % 4);
  }
  return out;
}

std::size_t Cohort::artifact_count() const {
  std::size_t n = 0;
  for (const auto& t : trials) n += t.artifacts.size();
  return n;
}

Cohort simulate_cohort(const CohortConfig& cfg, std::uint64_t seed, unsigned threads) {
  cfg.design.validate();
  cfg.noise.validate();
  if (!(cfg.landolt_accuracy >= 0.0 && cfg.landolt_accuracy <= 1.0) || !(cfg.timeout_rate >= 0.0 && cfg.timeout_rate <= 1.0))
    throw Error(ErrorCode::InvalidModel, "Landolt accuracy and timeout rate must lie in [0, 1]");
  const auto& design = cfg.design;
  const auto& nm = cfg.noise;
  const auto np = static_cast<std::size_t>(design.participants);

  struct PerParticipant {
    ParticipantTruth truth;
    std::vector<SimulatedTrial> trials;
    std::vector<SubjectiveReport> reports;
  };
  std::vector<PerParticipant> parts(np);

  parallel_for(np, threads, [&](std::size_t p) {
    const std::uint64_t pseed = mix_seed(seed, p);
    std::mt19937_64 rng(pseed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Physiology who;
    char id[16];
    std::snprintf(id, sizeof id, "P%02zu", p + 1);
    who.id = id;

    if (nm.slope_model == SlopeModel::Population) {
      const double b = truncated_normal(rng, nm.slope_mean, nm.slope_sd, 0.3, 10.0);
      who.ipd_m = b * kRad;  // small-angle vergence slope is ipd * 180/pi deg per diopter
    } else {
      who.ipd_m = truncated_normal(rng, nm.ipd_mean_m, nm.ipd_sd_m, 0.045, 0.085);
    }
    const auto [a_ideal, b_ideal] = ideal_line(design, who.ipd_m);
    const auto& offs = cfg.environment.offsets_deg;
    const double mean_offset = (offs[0] + offs[1] + offs[2]) / 3.0;
    const double min_offset = std::min({offs[0], offs[1], offs[2]});
    const double far_ideal = ideal_vergence(*std::max_element(design.depths_m.begin(), design.depths_m.end()), who.ipd_m);
    if (nm.intercept_bias_deg) {
      who.intercept_bias_deg = *nm.intercept_bias_deg;
    } else {
      // keep every simulated vergence comfortably positive
      const double lo = 0.5 - far_ideal - min_offset + a_ideal + mean_offset;
      const double a = truncated_normal(rng, nm.intercept_mean_deg, nm.intercept_sd_deg, lo, 1e9);
      who.intercept_bias_deg = a - a_ideal - mean_offset;
    }
    who.settle_time_s = nm.settle_min_s + (nm.settle_max_s - nm.settle_min_s) * unit(rng);
    who.subjective_scale = std::exp(cfg.subjective.participant_log_sd * std::normal_distribution<double>(0, 1)(rng));
    const double u = unit(rng);
    who.report_unit = u < 0.5 ? stats::LengthUnit::Meters : (u < 0.85 ? stats::LengthUnit::Feet : stats::LengthUnit::Inches);
    static constexpr std::array<std::array<Environment, 3>, 3> kOrders{{
        {Environment::Real, Environment::AR, Environment::VR},
        {Environment::AR, Environment::VR, Environment::Real},
        {Environment::VR, Environment::AR, Environment::Real},
    }};
    who.environment_order = kOrders[std::uniform_int_distribution<int>(0, 2)(rng)];

    PerParticipant& out = parts[p];
    out.truth.physiology = who;
    out.truth.slope_implied = b_ideal;
    out.truth.intercept_implied = a_ideal + who.intercept_bias_deg + mean_offset;

    const auto trial_samples = static_cast<std::int64_t>(std::llround((design.pre_stimulus_s + design.response_window_s) *
                                                                      design.sample_rate_hz));
    int trial_base = 0;
    for (std::size_t b = 0; b < 3; ++b) {
      const Environment env = who.environment_order[b];
      const auto seq = generate_sequence(design, env, rng);
      std::int64_t cursor = 0;
      for (std::size_t k = 0; k < seq.size(); ++k) {
        SequencedTrial spec = seq[k];
        spec.trial_id = trial_base + static_cast<int>(k) + 1;
        out.trials.push_back(simulate_trial(spec, who, cfg, cursor, mix_seed(pseed, 1000 * (b + 1) + k)));
        const double iti = design.iti_min_s + (design.iti_max_s - design.iti_min_s) * unit(rng);
        cursor += trial_samples + static_cast<std::int64_t>(std::llround(iti * design.sample_rate_hz));
      }
      trial_base += static_cast<int>(seq.size());
    }

    std::normal_distribution<double> jitter(0.0, cfg.subjective.report_log_sd);
    const double per_unit = stats::unit_to_meters(1.0, who.report_unit);
    for (const Environment env : who.environment_order)
      for (double depth : design.depths_m)
        for (int r = 1; r <= design.subjective_repetitions; ++r) {
          const double dio = cfg.subjective.factors[static_cast<int>(env)] * who.subjective_scale *
                             std::exp(jitter(rng)) / depth;
          out.reports.push_back({who.id, env, depth, (1.0 / dio) / per_unit, who.report_unit, r});
        }
  });

  Cohort c;
  c.config = cfg;
  c.seed = seed;
  for (auto& p : parts) {
    c.participants.push_back(std::move(p.truth));
    for (auto& t : p.trials) c.trials.push_back(std::move(t));
    for (auto& r : p.reports) c.subjective.push_back(std::move(r));
  }
  return c;
}

}  // namespace vergescope::synth
