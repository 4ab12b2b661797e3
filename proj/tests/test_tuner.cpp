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


#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "lios/tuner.hpp"

namespace {

using namespace lios;
using namespace lios::tuner;

LatencyObservation obs(double mean, std::size_t count = 200) {
  LatencyObservation o;
  o.mean_us = mean;
  o.count = count;
  return o;
}

TunerState steady(double alpha) {
  TunerState s;
  s.phase = Phase::kSteady;
  s.alpha = alpha;
  s.baseline = Baseline{100.0, 150.0, 200.0};
  s.baseline_valid = true;
  return s;
}

}  // namespace

TEST_CASE("steady epoch within the bound raises alpha") {
  TunerConfig cfg;
  auto r = step(steady(0.5), obs(100.0), cfg);
  CHECK(r.state.phase == Phase::kSteady);
  CHECK(r.state.alpha == doctest::Approx(0.52));
  CHECK(r.effective_alpha == doctest::Approx(0.52));
  CHECK(step(steady(0.99), obs(100.0), cfg).state.alpha == doctest::Approx(1.0));
}

TEST_CASE("three consecutive violations trigger a rebaseline") {
  TunerConfig cfg;
  TunerState s = steady(0.5);
  s = step(s, obs(110.0), cfg).state;
  CHECK(s.phase == Phase::kSteady);
  CHECK(s.alpha == doctest::Approx(0.48));
  s = step(s, obs(112.0), cfg).state;
  CHECK(s.phase == Phase::kSteady);
  auto r = step(s, obs(109.0), cfg);
  CHECK(r.state.phase == Phase::kRebaseline);
  CHECK(r.effective_alpha == 0.0);
}

TEST_CASE("a good epoch resets the violation count") {
  TunerConfig cfg;
  TunerState s = steady(0.5);
  s = step(s, obs(110.0), cfg).state;
  s = step(s, obs(110.0), cfg).state;
  s = step(s, obs(100.0), cfg).state;
  CHECK(s.consecutive_violations == 0);
  s = step(s, obs(110.0), cfg).state;
  CHECK(s.phase == Phase::kSteady);
}

TEST_CASE("recording, binary search and steady follow in order") {
  TunerConfig cfg;
  TunerState s;
  CHECK(effective_alpha(s) == 0.0);
  for (int e = 0; e < 3; ++e) {
    CHECK(s.phase == Phase::kRecording);
    s = step(s, obs(100.0 + e), cfg).state;
  }
  CHECK(s.phase == Phase::kBinarySearch);
  CHECK(s.baseline_valid);
  CHECK(s.baseline.mean_us == doctest::Approx(101.0));
  CHECK(effective_alpha(s) == doctest::Approx(0.5));

  // Plant: latency grows by 10% per unit alpha, so the largest feasible alpha is 0.5.
  int epochs = 0;
  while (s.phase == Phase::kBinarySearch) {
    s = step(s, obs(101.0 * (1.0 + 0.1 * effective_alpha(s))), cfg).state;
    REQUIRE(++epochs < 20);
  }
  CHECK(epochs == 5);
  CHECK(s.phase == Phase::kSteady);
  CHECK(s.alpha <= 0.5 + 1e-9);
  CHECK(s.alpha >= 0.5 - cfg.alpha_resolution - 1e-9);
}

TEST_CASE("rebaseline epoch counts toward recording") {
  TunerConfig cfg;
  TunerState s = steady(0.5);
  s.phase = Phase::kRebaseline;
  s = step(s, obs(90.0), cfg).state;
  CHECK(s.phase == Phase::kRecording);
  CHECK(s.phase_epochs == 1);
  s = step(s, obs(90.0), cfg).state;
  s = step(s, obs(90.0), cfg).state;
  CHECK(s.phase == Phase::kBinarySearch);
  CHECK(s.baseline.mean_us == doctest::Approx(90.0));
}

TEST_CASE("no feasible alpha disables co-execution until the next refresh") {
  TunerConfig cfg;
  cfg.refresh_period = 4;
  TunerState s;
  for (int e = 0; e < 3; ++e) s = step(s, obs(100.0), cfg).state;
  while (s.phase == Phase::kBinarySearch) s = step(s, obs(200.0), cfg).state;
  CHECK(s.phase == Phase::kSteady);
  CHECK(s.disabled);
  CHECK(effective_alpha(s) == 0.0);
  for (int e = 0; e < 3; ++e) s = step(s, obs(100.0), cfg).state;
  CHECK(s.phase == Phase::kSteady);
  s = step(s, obs(100.0), cfg).state;
  CHECK(s.phase == Phase::kRebaseline);
}

TEST_CASE("periodic refresh replaces the baseline with an update-free epoch") {
  TunerConfig cfg;
  cfg.refresh_period = 3;
  TunerState s = steady(0.5);
  for (int e = 0; e < 3; ++e) s = step(s, obs(100.0), cfg).state;
  CHECK(s.refreshing);
  CHECK(effective_alpha(s) == 0.0);
  s = step(s, obs(80.0), cfg).state;
  CHECK_FALSE(s.refreshing);
  CHECK(s.baseline.mean_us == doctest::Approx(80.0));
  CHECK(effective_alpha(s) == doctest::Approx(s.alpha));
}

TEST_CASE("search failure forces a rebaseline") {
  TunerConfig cfg;
  auto o = obs(100.0);
  o.search_failure = true;
  CHECK(step(steady(0.5), o, cfg).state.phase == Phase::kRebaseline);
}

TEST_CASE("undersized epochs are rejected") {
  TunerConfig cfg;
  try {
    step(steady(0.5), obs(100.0, 5), cfg);
    FAIL("accepted a short epoch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInsufficientSamples);
  }
}

TEST_CASE("alpha stays within [0, 1] under arbitrary observations") {
  TunerConfig cfg;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(50.0, 200.0);
  TunerState s;
  for (int e = 0; e < 2000; ++e) {
    const Phase before = s.phase;
    s = step(s, obs(u(rng)), cfg).state;
    CHECK(s.alpha >= 0.0);
    CHECK(s.alpha <= 1.0);
    const double a = effective_alpha(s);
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
    if (before == Phase::kRecording) CHECK((s.phase == Phase::kRecording || s.phase == Phase::kBinarySearch));
    if (before == Phase::kBinarySearch) CHECK((s.phase == Phase::kBinarySearch || s.phase == Phase::kSteady));
    if (before == Phase::kSteady) CHECK((s.phase == Phase::kSteady || s.phase == Phase::kRebaseline));
    if (before == Phase::kRebaseline) CHECK((s.phase == Phase::kRecording || s.phase == Phase::kBinarySearch));
    if (s.baseline_valid) CHECK(s.baseline.mean_us > 0.0);
  }
}

TEST_CASE("percentile ratio uses the enabled statistics") {
  TunerConfig cfg;
  cfg.use_p99 = true;
  LatencyObservation o = obs(100.0);
  o.p99_us = 300.0;
  CHECK(degradation_ratio(o, Baseline{100.0, 150.0, 200.0}, cfg) == doctest::Approx(1.5));
}

TEST_CASE("epoch statistics") {
  EpochStats one;
  one.add(42.0);
  CHECK(one.mean() == 42.0);
  CHECK(one.percentile(0.95) == 42.0);

  EpochStats same;
  for (int k = 0; k < 100; ++k) same.add(7.0);
  CHECK(same.percentile(0.95) == 7.0);

  CHECK(nearest_rank({5, 1, 4, 2, 3}, 0.4) == 2.0);
  CHECK(nearest_rank({5, 1, 4, 2, 3}, 1.0) == 5.0);

  std::mt19937_64 rng(1);
  std::lognormal_distribution<double> ln(4.6, 0.5);
  EpochStats big(4096);
  std::vector<double> all;
  for (int k = 0; k < 10000; ++k) {
    const double x = ln(rng);
    all.push_back(x);
    big.add(x);
  }
  const double exact = nearest_rank(all, 0.95);
  CHECK(std::abs(big.percentile(0.95) - exact) / exact <= 0.02);
  CHECK(big.count() == 10000);
}

TEST_CASE("budget scaling") {
  Tuner t{TunerConfig{}};
  t.pin_alpha(0.0);
  CHECK(t.effective_budget(Micros{200}).count() == 0.0);
  t.pin_alpha(1.0);
  CHECK(t.effective_budget(Micros{200}).count() == doctest::Approx(200.0));
  t.pin_alpha(0.595);
  CHECK(t.effective_budget(Micros{200}).count() == doctest::Approx(119.0));
}

TEST_CASE("tuner closes epochs and records a trace") {
  TunerConfig cfg;
  cfg.epoch_queries = 50;
  cfg.min_epoch_samples = 10;
  Tuner t(cfg);
  for (int e = 0; e < 4; ++e) {
    CHECK_FALSE(t.epoch_ready());
    for (int q = 0; q < 50; ++q) t.observe_query(Micros{100});
    REQUIRE(t.epoch_ready());
    REQUIRE(t.close_epoch().has_value());
  }
  CHECK(t.state().phase == Phase::kBinarySearch);
  CHECK(t.alpha() == doctest::Approx(0.75));
  CHECK(t.trace().size() == 4);
  std::ostringstream csv;
  write_trace_csv(csv, t.trace());
  CHECK(csv.str().find("epoch") == 0);
}
