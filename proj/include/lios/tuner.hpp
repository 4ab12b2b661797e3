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

#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <string_view>
#include <vector>

#include "lios/common.hpp"

namespace lios::tuner {

enum class Phase { kRecording, kBinarySearch, kSteady, kRebaseline };
std::string_view to_string(Phase p) noexcept;

struct LatencyObservation {
  double mean_us = 0.0;
  std::optional<double> p95_us;
  std::optional<double> p99_us;
  std::size_t count = 0;
  bool search_failure = false;
};

struct TunerConfig {
  double theta = 0.05;
  double delta_up = 0.02;
  double delta_down = 0.02;
  std::size_t epoch_queries = 200;
  std::size_t min_epoch_samples = 20;
  std::uint32_t violation_limit = 3;
  bool use_p95 = false;
  bool use_p99 = false;
  double alpha_floor = 0.0;
  std::uint32_t recording_epochs = 3;
  double alpha_resolution = 1.0 / 32.0;
  std::uint32_t refresh_period = 50;  // Steady epochs between baseline refreshes

  void validate() const;
};

struct Baseline {
  double mean_us = 0.0;
  double p95_us = 0.0;
  double p99_us = 0.0;
};

struct TunerState {
  Phase phase = Phase::kRecording;
  double alpha = 0.0;  // utilization ratio used in Steady
  Baseline baseline;
  bool baseline_valid = false;
  std::uint32_t consecutive_violations = 0;
  std::uint64_t epoch = 0;
  std::uint32_t phase_epochs = 0;
  Baseline recording_sum;
  double search_lo = 0.0;
  double search_hi = 1.0;
  double probe = 0.5;
  std::uint32_t steady_since_refresh = 0;
  bool refreshing = false;  // current Steady epoch is a no-update profiling epoch
  bool disabled = false;    // no feasible alpha was found
};

/// Fraction of tau_est the next epoch may use; 0 whenever co-execution is suspended.
double effective_alpha(const TunerState& s) noexcept;

struct StepResult {
  TunerState state;
  double effective_alpha;
};

/// One epoch boundary. `obs` describes the epoch that just ran under
/// effective_alpha(state). Throws kInsufficientSamples if obs.count is below
/// the configured minimum.
StepResult step(const TunerState& state, const LatencyObservation& obs, const TunerConfig& cfg);

/// Worst ratio over the enabled statistics, relative to the baseline.
double degradation_ratio(const LatencyObservation& obs, const Baseline& base, const TunerConfig& cfg);

/// Streaming epoch statistics: exact mean, percentiles from a bounded
/// reservoir (exact while the epoch fits in it).
class EpochStats {
 public:
  explicit EpochStats(std::size_t reservoir = 4096, std::uint64_t seed = 0x5eed);

  void add(double latency_us);
  std::size_t count() const noexcept { return count_; }
  double mean() const noexcept { return count_ ? sum_ / static_cast<double>(count_) : 0.0; }
  /// Nearest-rank percentile over the reservoir, p in (0, 1].
  double percentile(double p) const;
  LatencyObservation observation() const;
  void reset();

 private:
  std::size_t capacity_;
  std::vector<double> reservoir_;
  std::size_t count_ = 0;
  double sum_ = 0.0;
  std::mt19937_64 rng_;
};

/// Nearest-rank percentile of an unsorted sample; p in (0, 1].
double nearest_rank(std::vector<double> values, double p);

struct TraceRow {
  std::uint64_t epoch;
  Phase phase;
  double alpha;
  double ratio;  // NaN when no baseline applies
  double mean_us;
};

/// Thread-safe tuner. Search threads call observe_query(); a single control
/// thread calls close_epoch() when epoch_ready(). The effective ratio is
/// published atomically.
class Tuner {
 public:
  explicit Tuner(TunerConfig cfg);

  const TunerConfig& config() const noexcept { return cfg_; }

  void observe_query(Micros latency);
  void observe_failure();
  bool epoch_ready() const;

  /// Steps the state machine over the accumulated epoch.
  std::optional<TraceRow> close_epoch();

  double alpha() const noexcept { return alpha_.load(std::memory_order_acquire); }
  Micros effective_budget(Micros tau_est) const noexcept { return tau_est * alpha(); }

  /// Pins the effective ratio (e.g. 0 for a no-co-execution baseline run).
  void pin_alpha(std::optional<double> alpha);

  TunerState state() const;
  std::vector<TraceRow> trace() const;

 private:
  TunerConfig cfg_;
  mutable std::mutex mu_;
  EpochStats epoch_;
  bool failure_ = false;
  TunerState state_;
  std::optional<double> pinned_;
  std::vector<TraceRow> trace_;
  std::atomic<double> alpha_{0.0};
};

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& rows);

}  // namespace lios::tuner
