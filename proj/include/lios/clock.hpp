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

#include <array>
#include <chrono>
#include <cstddef>

#include "lios/common.hpp"

namespace lios {

/// Kinds of CPU work that a virtual clock knows how to price.
enum class Work : std::size_t {
  kPruneIteration,  // one inner-loop step of neighbor selection
  kDistance,        // one full-precision distance evaluation
  kApproxDistance,  // one compressed-vector distance lookup
  kRecordDecode,    // parse one node record
  kRecordScan,      // visit one record during a graph-wide scan
  kHopOverhead,     // fixed per-hop search bookkeeping
  kCount,
};

/// Monotonic time source shared by search hops and update slices.
///
/// Code that does CPU work reports it through charge(). A wall clock ignores
/// the report since real time passes on its own; a virtual clock advances by
/// the configured price so whole workloads can run deterministically.
class WorkClock {
 public:
  virtual ~WorkClock() = default;

  virtual Micros now() const = 0;
  virtual void charge(Work /*kind*/, std::size_t /*count*/ = 1) {}

  /// Blocks (or, for virtual clocks, jumps) until `deadline`.
  virtual void sleep_until(Micros deadline) = 0;

  virtual bool is_virtual() const noexcept = 0;
};

class SteadyWorkClock final : public WorkClock {
 public:
  /// All wall clocks share one process-wide origin so their readings compare.
  Micros now() const override {
    return std::chrono::duration_cast<Micros>(std::chrono::steady_clock::now() - origin());
  }
  void sleep_until(Micros deadline) override;
  bool is_virtual() const noexcept override { return false; }

 private:
  static std::chrono::steady_clock::time_point origin();
};

/// Per-unit prices used by VirtualWorkClock.
struct WorkCosts {
  std::array<double, static_cast<std::size_t>(Work::kCount)> micros{};

  double& operator[](Work w) { return micros[static_cast<std::size_t>(w)]; }
  double operator[](Work w) const { return micros[static_cast<std::size_t>(w)]; }

  /// Only prune iterations cost anything (1us each). Handy in tests.
  static WorkCosts prune_only(double per_iteration = 1.0);
  /// Desk-scale defaults shaped so a per-vector repair spans several idle windows.
  static WorkCosts desk_defaults();
};

class VirtualWorkClock final : public WorkClock {
 public:
  explicit VirtualWorkClock(WorkCosts costs = {}, Micros start = Micros{0}) : costs_(costs), now_(start) {}

  Micros now() const override { return now_; }
  void charge(Work kind, std::size_t count = 1) override {
    now_ += Micros{costs_[kind] * static_cast<double>(count)};
  }
  void sleep_until(Micros deadline) override {
    if (deadline > now_) now_ = deadline;
  }
  bool is_virtual() const noexcept override { return true; }

  void advance(Micros d) { now_ += d; }
  void set(Micros t) { now_ = t; }
  const WorkCosts& costs() const noexcept { return costs_; }

 private:
  WorkCosts costs_;
  Micros now_;
};

}  // namespace lios
