// Copyright 2026 The LIOS Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "lios/tuner.hpp"

#include <algorithm>
#include <cmath>

namespace lios::tuner {

std::string_view to_string(Phase p) noexcept {
  switch (p) {
    case Phase::kRecording: return "recording";
    case Phase::kBinarySearch: return "binary_search";
    case Phase::kSteady: return "steady";
    case Phase::kRebaseline: return "rebaseline";
  }
  return "?";
}

void TunerConfig::validate() const {
  if (!(theta > 0)) throw Error(ErrorCode::kInvalidArgument, "tuner theta must be positive");
  if (violation_limit < 1) throw Error(ErrorCode::kInvalidArgument, "violation limit must be at least 1");
  if (!(delta_up > 0) || !(delta_down > 0)) throw Error(ErrorCode::kInvalidArgument, "alpha steps must be positive");
  if (alpha_floor < 0 || alpha_floor > 1) throw Error(ErrorCode::kInvalidArgument, "alpha floor must be in [0,1]");
  if (!(alpha_resolution > 0) || alpha_resolution >= 1) {
    throw Error(ErrorCode::kInvalidArgument, "alpha resolution must be in (0,1)");
  }
  if (recording_epochs < 1 || epoch_queries < 1 || refresh_period < 1) {
    throw Error(ErrorCode::kInvalidArgument, "epoch counts must be positive");
  }
}

double effective_alpha(const TunerState& s) noexcept {
  switch (s.phase) {
    case Phase::kRecording:
    case Phase::kRebaseline:
      return 0.0;
    case Phase::kBinarySearch:
      return s.probe;
    case Phase::kSteady:
      return (s.refreshing || s.disabled) ? 0.0 : s.alpha;
  }
  return 0.0;
}

double degradation_ratio(const LatencyObservation& obs, const Baseline& base, const TunerConfig& cfg) {
  double worst = base.mean_us > 0 ? obs.mean_us / base.mean_us : 1.0;
  if (cfg.use_p95 && obs.p95_us && base.p95_us > 0) worst = std::max(worst, *obs.p95_us / base.p95_us);
  if (cfg.use_p99 && obs.p99_us && base.p99_us > 0) worst = std::max(worst, *obs.p99_us / base.p99_us);
  return worst;
}

namespace {

void begin_recording(TunerState& s) {
  s.phase = Phase::kRecording;
  s.phase_epochs = 0;
  s.recording_sum = Baseline{};
  s.consecutive_violations = 0;
  s.refreshing = false;
  s.disabled = false;
}

void accumulate(Baseline& sum, const LatencyObservation& obs) {
  sum.mean_us += obs.mean_us;
  sum.p95_us += obs.p95_us.value_or(obs.mean_us);
  sum.p99_us += obs.p99_us.value_or(obs.mean_us);
}

Baseline from_observation(const LatencyObservation& obs) {
  return Baseline{obs.mean_us, obs.p95_us.value_or(obs.mean_us), obs.p99_us.value_or(obs.mean_us)};
}

}  // namespace

StepResult step(const TunerState& in, const LatencyObservation& obs, const TunerConfig& cfg) {
  if (obs.count < cfg.min_epoch_samples) {
    throw Error(ErrorCode::kInsufficientSamples, "epoch has " + std::to_string(obs.count) + " queries, need " +
                                                     std::to_string(cfg.min_epoch_samples));
  }
  TunerState s = in;
  ++s.epoch;
  const double limit = 1.0 + cfg.theta;

  if (obs.search_failure && s.phase != Phase::kRecording) {
    s.phase = Phase::kRebaseline;
    return {s, effective_alpha(s)};
  }

  switch (s.phase) {
    case Phase::kRebaseline:
      // The rebaseline epoch ran without updates, so it is the first recording epoch.
      begin_recording(s);
      [[fallthrough]];
    case Phase::kRecording: {
      if (obs.search_failure) {
        begin_recording(s);
        break;
      }
      accumulate(s.recording_sum, obs);
      if (++s.phase_epochs >= cfg.recording_epochs) {
        const double n = s.phase_epochs;
        s.baseline = Baseline{s.recording_sum.mean_us / n, s.recording_sum.p95_us / n, s.recording_sum.p99_us / n};
        s.baseline_valid = true;
        s.phase = Phase::kBinarySearch;
        s.phase_epochs = 0;
        s.search_lo = 0.0;
        s.search_hi = 1.0;
        s.probe = 0.5;
      }
      break;
    }
    case Phase::kBinarySearch: {
      if (degradation_ratio(obs, s.baseline, cfg) <= limit) {
        s.search_lo = s.probe;
      } else {
        s.search_hi = s.probe;
      }
      ++s.phase_epochs;
      if (s.search_hi - s.search_lo <= cfg.alpha_resolution + 1e-12) {
        s.phase = Phase::kSteady;
        s.phase_epochs = 0;
        s.steady_since_refresh = 0;
        s.consecutive_violations = 0;
        s.disabled = s.search_lo <= 0.0;
        s.alpha = s.disabled ? 0.0 : std::max(s.search_lo, cfg.alpha_floor);
      } else {
        s.probe = (s.search_lo + s.search_hi) / 2.0;
      }
      break;
    }
    case Phase::kSteady: {
      ++s.phase_epochs;
      if (s.disabled) {
        if (++s.steady_since_refresh >= cfg.refresh_period) s.phase = Phase::kRebaseline;
        break;
      }
      if (s.refreshing) {
        s.baseline = from_observation(obs);
        s.refreshing = false;
        s.steady_since_refresh = 0;
        break;
      }
      if (degradation_ratio(obs, s.baseline, cfg) <= limit) {
        s.alpha = std::min(1.0, s.alpha + cfg.delta_up);
        s.consecutive_violations = 0;
      } else {
        s.alpha = std::max(cfg.alpha_floor, s.alpha - cfg.delta_down);
        if (++s.consecutive_violations >= cfg.violation_limit) {
          s.phase = Phase::kRebaseline;
          break;
        }
      }
      if (++s.steady_since_refresh >= cfg.refresh_period) s.refreshing = true;
      break;
    }
  }
  return {s, effective_alpha(s)};
}

// ---------------------------------------------------------------------------

double nearest_rank(std::vector<double> values, double p) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(values.size())));
  return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

EpochStats::EpochStats(std::size_t reservoir, std::uint64_t seed) : capacity_(reservoir), rng_(seed) {
  reservoir_.reserve(std::min<std::size_t>(capacity_, 1024));
}

void EpochStats::add(double latency_us) {
  ++count_;
  sum_ += latency_us;
  if (reservoir_.size() < capacity_) {
    reservoir_.push_back(latency_us);
    return;
  }
  std::uniform_int_distribution<std::size_t> pick(0, count_ - 1);
  const std::size_t slot = pick(rng_);
  if (slot < capacity_) reservoir_[slot] = latency_us;
}

double EpochStats::percentile(double p) const { return nearest_rank(reservoir_, p); }

LatencyObservation EpochStats::observation() const {
  LatencyObservation obs;
  obs.mean_us = mean();
  obs.count = count_;
  if (count_ > 0) {
    obs.p95_us = percentile(0.95);
    obs.p99_us = percentile(0.99);
  }
  return obs;
}

void EpochStats::reset() {
  reservoir_.clear();
  count_ = 0;
  sum_ = 0.0;
}

// ---------------------------------------------------------------------------

Tuner::Tuner(TunerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

void Tuner::observe_query(Micros latency) {
  std::lock_guard lock(mu_);
  epoch_.add(latency.count());
}

void Tuner::observe_failure() {
  std::lock_guard lock(mu_);
  failure_ = true;
}

bool Tuner::epoch_ready() const {
  std::lock_guard lock(mu_);
  return epoch_.count() >= cfg_.epoch_queries;
}

std::optional<TraceRow> Tuner::close_epoch() {
  std::lock_guard lock(mu_);
  if (epoch_.count() < std::max(cfg_.min_epoch_samples, std::size_t{1})) return std::nullopt;
  LatencyObservation obs = epoch_.observation();
  obs.search_failure = failure_;
  const Phase ran_phase = state_.phase;
  const double ran_alpha = pinned_.value_or(effective_alpha(state_));
  const double ratio = state_.baseline_valid ? degradation_ratio(obs, state_.baseline, cfg_) : std::nan("");
  auto [next, eff] = step(state_, obs, cfg_);
  state_ = next;
  alpha_.store(pinned_.value_or(eff), std::memory_order_release);
  epoch_.reset();
  failure_ = false;
  TraceRow row{state_.epoch, ran_phase, ran_alpha, ratio, obs.mean_us};
  trace_.push_back(row);
  return row;
}

void Tuner::pin_alpha(std::optional<double> alpha) {
  std::lock_guard lock(mu_);
  pinned_ = alpha;
  alpha_.store(pinned_.value_or(effective_alpha(state_)), std::memory_order_release);
}

TunerState Tuner::state() const {
  std::lock_guard lock(mu_);
  return state_;
}

std::vector<TraceRow> Tuner::trace() const {
  std::lock_guard lock(mu_);
  return trace_;
}

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& rows) {
  out << "epoch,phase,alpha,ratio,mean_latency_us\n";
  for (const auto& r : rows) {
    out << r.epoch << ',' << to_string(r.phase) << ',' << r.alpha << ',';
    if (std::isnan(r.ratio)) {
      out << "";
    } else {
      out << r.ratio;
    }
    out << ',' << r.mean_us << '\n';
  }
}

}  // namespace lios::tuner
