#include "vergescope/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <set>

#include "vergescope/error.hpp"
#include "vergescope/kernels.hpp"
#include "vergescope/parallel.hpp"

namespace vergescope::pipeline {
namespace {

constexpr double kTimeEps = 1e-9;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool usable_direction(const Vec3& v) { return v.finite() && norm(v) > 0.0; }

void ensure_gva(TrialRecord& trial) {
  if (trial.gva.size() != trial.samples.size()) compute_gva(trial);
}

struct Angular {
  double az = 0.0;
  double el = 0.0;
};

Angular cyclopean_angles(const BinocularSample& s) {
  const Vec3 c = (1.0 / norm(s.left.direction)) * s.left.direction +
                 (1.0 / norm(s.right.direction)) * s.right.direction;
  constexpr double kDeg = 180.0 / std::numbers::pi;
  return {std::atan2(c.x, c.z) * kDeg, std::atan2(c.y, std::hypot(c.x, c.z)) * kDeg};
}

}  // namespace

std::string_view status_name(SampleStatus s) noexcept {
  switch (s) {
    case SampleStatus::Valid: return "valid";
    case SampleStatus::Missing: return "missing";
    case SampleStatus::LowConfidence: return "low_confidence";
    case SampleStatus::VelocitySpike: return "velocity_spike";
    case SampleStatus::Outlier: return "outlier";
  }
  return "unknown";
}

std::string_view trial_flag_name(TrialFlag f) noexcept {
  switch (f) {
    case TrialFlag::Ok: return "ok";
    case TrialFlag::NoFixation: return "no_fixation";
    case TrialFlag::ShortTrial: return "short_trial";
    case TrialFlag::NoValidSamples: return "no_valid_samples";
    case TrialFlag::InsufficientValid: return "insufficient_valid";
  }
  return "unknown";
}

void compute_gva(TrialRecord& trial, VergenceMode mode) {
  const std::size_t n = trial.samples.size();
  std::vector<double> lx(n), ly(n), lz(n), rx(n), ry(n), rz(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& s = trial.samples[i];
    if (!usable_direction(s.left.direction) || !usable_direction(s.right.direction)) {
      if (s.status == SampleStatus::Valid) s.status = SampleStatus::Missing;
      lx[i] = ly[i] = lz[i] = rx[i] = ry[i] = rz[i] = kNaN;
      continue;
    }
    lx[i] = s.left.direction.x;
    ly[i] = s.left.direction.y;
    lz[i] = s.left.direction.z;
    rx[i] = s.right.direction.x;
    ry[i] = s.right.direction.y;
    rz[i] = s.right.direction.z;
  }
  trial.gva.assign(n, 0.0);
  const kernels::DirectionBlock block{lx, ly, lz, rx, ry, rz};
  kernels::vergence_angles(kernels::active_kernels(), block, mode == VergenceMode::Horizontal, trial.gva);
}

TrialRecord confidence_filter(TrialRecord trial, double threshold) {
  for (auto& s : trial.samples) {
    if (s.valid() && std::min(s.left_conf, s.right_conf) < threshold) s.status = SampleStatus::LowConfidence;
  }
  return trial;
}

TrialRecord velocity_filter(TrialRecord trial, double max_deg_per_s) {
  ensure_gva(trial);
  const std::size_t n = trial.samples.size();
  if (n < 2) return trial;
  std::vector<double> t(n), velocity(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = trial.samples[i].t_s;
  kernels::active_kernels().forward_difference(t, trial.gva, velocity);
  for (std::size_t i = 1; i < n; ++i) {
    auto& s = trial.samples[i];
    if (s.valid() && trial.samples[i - 1].valid() && std::fabs(velocity[i]) > max_deg_per_s)
      s.status = SampleStatus::VelocitySpike;
  }
  return trial;
}

TrialRecord outlier_filter(TrialRecord trial, double k_sd) {
  ensure_gva(trial);
  const std::size_t n = trial.samples.size();
  // Statistics come from the set that entered this filter (valid samples plus
  // anything this filter already removed), which keeps it idempotent.
  std::vector<std::uint8_t> mask(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto st = trial.samples[i].status;
    mask[i] = (st == SampleStatus::Valid || st == SampleStatus::Outlier) ? 1 : 0;
  }
  const auto& k = kernels::active_kernels();
  const auto moments = k.masked_moments(trial.gva, mask);
  if (moments.count < 2) return trial;
  const double sd = std::sqrt(moments.sum_sq_dev / static_cast<double>(moments.count - 1));
  if (!(sd > 0.0)) return trial;
  std::vector<std::uint8_t> hit(n);
  k.flag_deviation(trial.gva, mask, moments.mean, k_sd * sd, hit);
  for (std::size_t i = 0; i < n; ++i)
    if (hit[i] && trial.samples[i].valid()) trial.samples[i].status = SampleStatus::Outlier;
  return trial;
}

std::optional<double> detect_fixation_onset(const TrialRecord& trial, const FixationConfig& cfg) {
  const auto& samples = trial.samples;
  if (samples.empty()) return std::nullopt;
  const double earliest = trial.stimulus_onset_s + cfg.min_latency_s - kTimeEps;
  const double last_t = samples.back().t_s;

  std::vector<Angular> angles(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].valid()) angles[i] = cyclopean_angles(samples[i]);

  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& start = samples[i];
    if (!start.valid() || start.t_s < earliest) continue;
    if (trial.response_s && !(start.t_s < *trial.response_s)) break;
    const double window_end = start.t_s + cfg.min_duration_s;
    if (window_end > last_t + kTimeEps) break;

    double az_min = angles[i].az, az_max = az_min, el_min = angles[i].el, el_max = el_min;
    std::size_t n_valid = 0;
    for (std::size_t j = i; j < samples.size() && samples[j].t_s <= window_end + kTimeEps; ++j) {
      if (!samples[j].valid()) continue;
      ++n_valid;
      az_min = std::min(az_min, angles[j].az);
      az_max = std::max(az_max, angles[j].az);
      el_min = std::min(el_min, angles[j].el);
      el_max = std::max(el_max, angles[j].el);
    }
    if (n_valid >= 2 && (az_max - az_min) + (el_max - el_min) <= cfg.dispersion_deg) return start.t_s;
  }
  return std::nullopt;
}

std::optional<Window> analysis_window(const TrialRecord& trial, const WindowConfig& cfg) {
  if (!trial.fixation_onset_s || trial.samples.empty()) return std::nullopt;
  const Window w{*trial.fixation_onset_s + cfg.start_after_fixation_s,
                 *trial.fixation_onset_s + cfg.end_after_fixation_s};
  if (w.t1 > trial.samples.back().t_s + kTimeEps) return std::nullopt;
  return w;
}

WindowMean trial_mean_gva(const TrialRecord& trial, const Window& window) {
  const auto& samples = trial.samples;
  auto lo = std::lower_bound(samples.begin(), samples.end(), window.t0 - kTimeEps,
                             [](const BinocularSample& s, double t) { return s.t_s < t; });
  auto hi = std::lower_bound(lo, samples.end(), window.t1 - kTimeEps,
                             [](const BinocularSample& s, double t) { return s.t_s < t; });
  const auto first = static_cast<std::size_t>(lo - samples.begin());
  const auto count = static_cast<std::size_t>(hi - lo);

  WindowMean out;
  out.n_slots = count;
  out.mean_gva_deg = kNaN;
  if (count == 0) return out;
  std::vector<std::uint8_t> mask(count);
  for (std::size_t i = 0; i < count; ++i) mask[i] = samples[first + i].valid() ? 1 : 0;
  const std::span<const double> values(trial.gva.data() + first, count);
  const auto m = kernels::active_kernels().masked_moments(values, mask);
  out.n_valid = m.count;
  out.valid_fraction = static_cast<double>(m.count) / static_cast<double>(count);
  if (m.count > 0) out.mean_gva_deg = m.mean;
  return out;
}

void StatusCounts::add(SampleStatus s) noexcept {
  switch (s) {
    case SampleStatus::Valid: ++valid; break;
    case SampleStatus::Missing: ++missing; break;
    case SampleStatus::LowConfidence: ++low_confidence; break;
    case SampleStatus::VelocitySpike: ++velocity_spike; break;
    case SampleStatus::Outlier: ++outlier; break;
  }
}

StatusCounts& StatusCounts::operator+=(const StatusCounts& o) noexcept {
  valid += o.valid;
  missing += o.missing;
  low_confidence += o.low_confidence;
  velocity_spike += o.velocity_spike;
  outlier += o.outlier;
  return *this;
}

TrialOutcome process_trial(TrialRecord& trial, const PipelineConfig& cfg) {
  compute_gva(trial, cfg.vergence_mode);
  trial = outlier_filter(velocity_filter(confidence_filter(std::move(trial), cfg.confidence_threshold),
                                         cfg.max_velocity_deg_s),
                         cfg.outlier_k_sd);

  TrialOutcome out;
  out.participant_id = trial.participant_id;
  out.environment = trial.environment;
  out.trial_id = trial.trial_id;
  out.start_depth_m = trial.start_depth_m;
  out.end_depth_m = trial.end_depth_m;
  out.landolt_correct = trial.landolt_correct;
  out.landolt_timeout = trial.landolt_response == LandoltDirection::Timeout;
  out.mean_gva_deg = kNaN;
  for (const auto& s : trial.samples) out.counts.add(s.status);

  trial.fixation_onset_s = detect_fixation_onset(trial, cfg.fixation);
  out.fixation_onset_s = trial.fixation_onset_s;
  if (!trial.fixation_onset_s) {
    trial.flag = out.flag = TrialFlag::NoFixation;
    return out;
  }
  out.window = analysis_window(trial, cfg.window);
  if (!out.window) {
    trial.flag = out.flag = TrialFlag::ShortTrial;
    return out;
  }
  const auto mean = trial_mean_gva(trial, *out.window);
  out.mean_gva_deg = mean.mean_gva_deg;
  out.valid_fraction = mean.valid_fraction;
  if (mean.n_valid == 0) {
    trial.flag = out.flag = TrialFlag::NoValidSamples;
  } else if (!trial_validity(mean.valid_fraction)) {
    trial.flag = out.flag = TrialFlag::InsufficientValid;
  } else {
    out.valid = true;
  }
  return out;
}

std::vector<TrialOutcome> process_trials(std::vector<TrialRecord>& trials, const PipelineConfig& cfg,
                                         unsigned threads) {
  std::vector<TrialOutcome> out(trials.size());
  parallel_for(trials.size(), threads, [&](std::size_t i) { out[i] = process_trial(trials[i], cfg); });
  return out;
}

bool ValidityReport::pair_valid(const PairKey& key) const {
  auto it = std::lower_bound(pairs.begin(), pairs.end(), key,
                             [](const PairVerdict& v, const PairKey& k) { return v.key < k; });
  return it != pairs.end() && it->key == key && it->valid;
}

bool ValidityReport::participant_retained(const ParticipantId& id) const {
  return std::binary_search(retained_participants.begin(), retained_participants.end(), id);
}

ValidityReport cascade_validity(const std::vector<TrialOutcome>& outcomes, const ValidityGates& gates) {
  ValidityReport report;
  std::map<PairKey, PairVerdict> pairs;
  std::map<std::pair<ParticipantId, Environment>, EnvironmentVerdict> envs;

  for (const auto& o : outcomes) {
    report.totals += o.counts;
    ++report.landolt_total;
    if (o.landolt_correct && !o.landolt_timeout) ++report.landolt_correct;

    PairKey key{o.participant_id, o.environment, o.start_depth_m, o.end_depth_m};
    auto& pair = pairs[key];
    pair.key = key;
    ++pair.total_trials;
    if (o.valid) ++pair.valid_trials;

    auto& env = envs[{o.participant_id, o.environment}];
    env.participant_id = o.participant_id;
    env.environment = o.environment;
    env.counts += o.counts;
  }

  for (auto& [key, pair] : pairs) {
    pair.valid = pair.valid_trials >= gates.min_valid_trials_per_pair;
    auto& env = envs[{key.participant_id, key.environment}];
    ++env.total_pairs;
    if (pair.valid) ++env.valid_pairs;
    report.pairs.push_back(pair);
  }

  std::map<ParticipantId, ParticipantVerdict> participants;
  for (auto& [key, env] : envs) {
    env.valid = env.valid_pairs >= gates.min_valid_pairs_per_environment;
    auto& p = participants[key.first];
    p.participant_id = key.first;
    if (env.valid) ++p.valid_environments;
    report.environments.push_back(env);
  }
  for (auto& [id, p] : participants) {
    p.valid = p.valid_environments >= gates.required_valid_environments;
    if (p.valid) report.retained_participants.push_back(id);
    report.participants.push_back(p);
  }

  for (Environment e : kAllEnvironments) {
    EnvironmentSummary summary{e};
    double sum = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& env : report.environments) {
      if (env.environment != e || env.counts.total() == 0) continue;
      const double pct = 100.0 * static_cast<double>(env.counts.excluded()) / static_cast<double>(env.counts.total());
      sum += pct;
      lo = std::min(lo, pct);
      hi = std::max(hi, pct);
      ++summary.participants;
    }
    if (summary.participants == 0) continue;
    summary.excluded_percent_mean = sum / summary.participants;
    summary.excluded_percent_min = lo;
    summary.excluded_percent_max = hi;
    for (const auto& pair : report.pairs) {
      if (pair.key.environment != e) continue;
      summary.valid_trials += pair.valid_trials;
      summary.total_trials += pair.total_trials;
    }
    report.per_environment.push_back(summary);
  }
  return report;
}

bool retained(const TrialOutcome& o, const ValidityReport& report) {
  return o.valid && report.participant_retained(o.participant_id) &&
         report.pair_valid(PairKey{o.participant_id, o.environment, o.start_depth_m, o.end_depth_m});
}

}  // namespace vergescope::pipeline
