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

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "lios/clock.hpp"
#include "lios/graph_index.hpp"
#include "lios/io.hpp"

namespace lios::search {

struct QueryParams {
  std::uint32_t k = 10;
  std::uint32_t pool_size = 100;  // L
  std::uint32_t beam_width = 4;   // W

  void validate() const;
};

/// One hop's stall window: longest device service time among its reads.
struct IdleSample {
  Micros duration{0};
  std::uint32_t batch_size = 1;
};

struct HopRecord {
  std::uint32_t batch_size = 0;
  std::uint32_t cache_hits = 0;
  Micros window{0};  // I/O idle window (IdleSample duration)
  Micros stall{0};   // submit until every completion was harvested
  Micros slice{0};   // time spent inside the stall hook
  bool hook_ran = false;
};

struct SearchStats {
  std::uint32_t hops = 0;
  std::uint32_t io_count = 0;
  std::vector<HopRecord> hop_log;
  Micros latency{0};
  std::uint32_t slices_run = 0;

  Micros idle_total() const;
};

/// Fraction of the query's time spent in I/O idle windows, in [0, 1].
double idle_ratio(const SearchStats& stats);

struct Neighbor {
  VectorId id;
  float distance;
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

struct SearchResult {
  std::vector<Neighbor> neighbors;
  SearchStats stats;
};

/// Work to run while a hop's reads are in flight.
class StallHook {
 public:
  virtual ~StallHook() = default;

  /// Called after submit when at least one read went to the device. Must
  /// return in bounded time. Returns whether any update work ran.
  virtual bool on_stall(std::uint32_t batch_size, WorkClock& clock) = 0;

  /// Called once per hop after all completions were harvested.
  virtual void on_hop_complete(const HopRecord& /*hop*/) {}
};

/// Full-precision vector fetched while expanding a node.
struct ExpandedNode {
  VectorId id;
  float distance;
  Vector vector;
  bool deleted;
};

/// Beam search as a resumable state machine: each step() is one hop.
///
/// Approximate distances from the compressed vectors steer traversal; the
/// returned top-K is re-ranked by exact distance over the raw vectors fetched
/// in node records. Tombstoned nodes are traversed but never returned.
class BeamSearch {
 public:
  BeamSearch(const GraphIndex& index, std::span<const float> query, QueryParams params, WorkClock& clock);

  bool finished() const noexcept { return finished_; }

  /// Runs one hop through `handle` (or synchronous reads when null). Returns
  /// false once every pool entry has been expanded.
  bool step(io::IoHandle* handle, StallHook* hook);

  /// Runs remaining hops then returns the result.
  SearchResult run(io::IoHandle* handle, StallHook* hook);

  SearchResult result() const;
  const std::vector<ExpandedNode>& expanded() const noexcept { return expanded_; }
  const SearchStats& stats() const noexcept { return stats_; }
  /// Moves later charges to another clock (resumed on a different thread).
  void rebind(WorkClock& clock) noexcept { clock_ = &clock; }

 private:
  struct Slot {
    VectorId id;
    float dist;
    bool expanded;
  };

  std::vector<VectorId> next_frontier();
  void absorb(VectorId id, const NodeRecord& rec);

  const GraphIndex& index_;
  QueryParams params_;
  WorkClock* clock_;
  QueryState query_;
  std::vector<Slot> pool_;
  std::vector<bool> seen_;
  std::vector<ExpandedNode> expanded_;
  SearchStats stats_;
  Micros started_;
  bool finished_ = false;
};

/// Convenience wrapper: one query start to finish on `handle`.
SearchResult beam_search(const GraphIndex& index, std::span<const float> query, const QueryParams& params,
                         io::IoHandle& handle, WorkClock& clock, StallHook* hook = nullptr);

}  // namespace lios::search
