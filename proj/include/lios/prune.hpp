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
#include <memory>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "lios/clock.hpp"
#include "lios/common.hpp"

namespace lios::prune {

struct Candidate {
  VectorId id = kInvalidId;
  float dist = 0.0f;  // distance to the prune target

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

/// Orders by distance, then by id.
inline bool closer(const Candidate& a, const Candidate& b) noexcept {
  return a.dist < b.dist || (a.dist == b.dist && a.id < b.id);
}

/// The immutable candidate list of one prune: candidates sorted by distance to
/// the target, plus a copy of each candidate's full-precision vector.
class CandidatePool {
 public:
  CandidatePool() = default;

  /// Computes distances to `target`, drops duplicate ids and sorts.
  /// `vectors[k]` belongs to `ids[k]`.
  static CandidatePool build(std::span<const float> target, std::span<const VectorId> ids,
                             std::span<const Vector> vectors);

  /// Takes already-computed distances. Fails unless the list is sorted by
  /// (dist, id) with unique ids and vectors match the dimension.
  static CandidatePool from_sorted(Vector target, std::vector<Candidate> candidates,
                                   std::vector<float> flat_vectors);

  std::size_t size() const noexcept { return candidates_.size(); }
  bool empty() const noexcept { return candidates_.empty(); }
  std::size_t dim() const noexcept { return target_.size(); }

  const Vector& target() const noexcept { return target_; }
  const std::vector<Candidate>& candidates() const noexcept { return candidates_; }
  const Candidate& operator[](std::size_t i) const noexcept { return candidates_[i]; }
  std::span<const float> vector(std::size_t i) const noexcept {
    return std::span(vectors_).subspan(i * dim(), dim());
  }

  /// d(pool[a], pool[b])
  float pair_distance(std::size_t a, std::size_t b) const noexcept;

 private:
  Vector target_;
  std::vector<Candidate> candidates_;
  std::vector<float> vectors_;
};

/// Resumable state between slices: selected pool indexes, per-candidate done
/// flags and the (i, j) loop cursors. `j` is the next inner index to test.
struct PruneCheckpoint {
  std::vector<std::uint32_t> result;
  std::vector<bool> done;
  std::uint32_t i = 0;
  std::uint32_t j = 0;

  friend bool operator==(const PruneCheckpoint&, const PruneCheckpoint&) = default;

  /// {u32 result_len, u32 result[...], bitset ceil(n/8) bytes LSB-first, u32 i, u32 j}
  std::vector<std::byte> serialize() const;
  static PruneCheckpoint deserialize(std::span<const std::byte> bytes, std::size_t pool_size);
};

/// Throws kCorruptCheckpoint unless `cp` is a state the slice loop can reach
/// for a pool of `pool_size` with degree bound `degree_bound`.
void validate(const PruneCheckpoint& cp, std::size_t pool_size, std::uint32_t degree_bound);

struct PruneTaskState {
  std::shared_ptr<const CandidatePool> pool;
  double alpha = 1.2;
  std::uint32_t degree_bound = 64;
  std::optional<PruneCheckpoint> checkpoint;
  std::uint64_t iterations = 0;  // inner iterations executed so far, all slices
};

struct Completed {
  std::vector<VectorId> neighbors;
};
struct Yielded {
  PruneCheckpoint checkpoint;
};
using SliceOutcome = std::variant<Completed, Yielded>;

/// Classic SNG neighbor selection in one pass.
std::vector<VectorId> prune_monolithic(const CandidatePool& pool, double alpha, std::uint32_t degree_bound);

/// Runs neighbor selection from the state's checkpoint (or from scratch) until
/// it finishes or `clock` reports `budget` elapsed. The budget is tested after
/// every inner iteration, so a slice overshoots by at most one iteration.
/// On Yielded the checkpoint is also stored back into `state`.
SliceOutcome prune_slice(PruneTaskState& state, Micros budget, WorkClock& clock);

/// Installs `cp` as the resume point of `state` after validating it.
void restore(const PruneCheckpoint& cp, PruneTaskState& state);

}  // namespace lios::prune
