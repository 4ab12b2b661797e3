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

#include "lios/prune.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "lios/distance.hpp"
#include "lios/serialize.hpp"

namespace lios::prune {

CandidatePool CandidatePool::build(std::span<const float> target, std::span<const VectorId> ids,
                                   std::span<const Vector> vectors) {
  if (ids.size() != vectors.size()) {
    throw Error(ErrorCode::kInvalidArgument, "candidate ids and vectors differ in count");
  }
  std::vector<std::size_t> order(ids.size());
  std::vector<Candidate> cands(ids.size());
  for (std::size_t k = 0; k < ids.size(); ++k) {
    cands[k] = Candidate{ids[k], exact_distance(target, vectors[k])};
  }
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return closer(cands[a], cands[b]); });

  CandidatePool pool;
  pool.target_.assign(target.begin(), target.end());
  pool.candidates_.reserve(order.size());
  pool.vectors_.reserve(order.size() * target.size());
  for (std::size_t k : order) {
    // Same id always has the same distance, so duplicates are adjacent.
    if (!pool.candidates_.empty() && pool.candidates_.back().id == cands[k].id) continue;
    pool.candidates_.push_back(cands[k]);
    pool.vectors_.insert(pool.vectors_.end(), vectors[k].begin(), vectors[k].end());
  }
  return pool;
}

CandidatePool CandidatePool::from_sorted(Vector target, std::vector<Candidate> candidates,
                                         std::vector<float> flat_vectors) {
  if (flat_vectors.size() != candidates.size() * target.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "flat candidate vectors do not match pool size x dim");
  }
  for (std::size_t k = 1; k < candidates.size(); ++k) {
    if (!closer(candidates[k - 1], candidates[k])) {
      throw Error(ErrorCode::kInvalidArgument, "candidate pool must be strictly sorted by (distance, id)");
    }
  }
  CandidatePool pool;
  pool.target_ = std::move(target);
  pool.candidates_ = std::move(candidates);
  pool.vectors_ = std::move(flat_vectors);
  return pool;
}

float CandidatePool::pair_distance(std::size_t a, std::size_t b) const noexcept {
  return l2(vector(a), vector(b));
}

namespace {

// The SNG elimination test: p' is covered by the selected p* when
// alpha * d(p*, p') <= d(p, p').
inline bool covered(const CandidatePool& pool, double alpha, std::size_t selected, std::size_t other) {
  return alpha * static_cast<double>(pool.pair_distance(selected, other)) <= static_cast<double>(pool[other].dist);
}

std::vector<VectorId> to_ids(const CandidatePool& pool, const std::vector<std::uint32_t>& indexes) {
  std::vector<VectorId> ids;
  ids.reserve(indexes.size());
  for (auto idx : indexes) ids.push_back(pool[idx].id);
  return ids;
}

}  // namespace

std::vector<VectorId> prune_monolithic(const CandidatePool& pool, double alpha, std::uint32_t degree_bound) {
  std::vector<VectorId> result;
  if (degree_bound == 0) return result;
  std::vector<bool> done(pool.size(), false);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (done[i]) continue;
    result.push_back(pool[i].id);
    done[i] = true;
    if (result.size() >= degree_bound) break;
    for (std::size_t j = i + 1; j < pool.size(); ++j) {
      if (!done[j] && covered(pool, alpha, i, j)) done[j] = true;
    }
  }
  return result;
}

void validate(const PruneCheckpoint& cp, std::size_t pool_size, std::uint32_t degree_bound) {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::kCorruptCheckpoint, why); };
  if (cp.done.size() != pool_size) {
    fail("done array has length " + std::to_string(cp.done.size()) + ", pool has " + std::to_string(pool_size));
  }
  if (cp.i >= pool_size) fail("outer cursor beyond pool");
  if (cp.j <= cp.i || cp.j > pool_size) fail("inner cursor outside (i, |pool|]");
  if (cp.result.empty() || cp.result.size() >= degree_bound) fail("result size outside [1, R)");
  for (std::size_t k = 0; k < cp.result.size(); ++k) {
    const auto idx = cp.result[k];
    if (idx >= pool_size || !cp.done[idx]) fail("selected index not marked done");
    if (k > 0 && cp.result[k - 1] >= idx) fail("selected indexes not increasing");
  }
  if (cp.result.back() != cp.i) fail("outer cursor does not point at the last selection");
}

void restore(const PruneCheckpoint& cp, PruneTaskState& state) {
  if (!state.pool) throw Error(ErrorCode::kInvalidArgument, "prune state has no pool");
  validate(cp, state.pool->size(), state.degree_bound);
  state.checkpoint = cp;
}

SliceOutcome prune_slice(PruneTaskState& state, Micros budget, WorkClock& clock) {
  if (!state.pool) throw Error(ErrorCode::kInvalidArgument, "prune state has no pool");
  if (!(budget > Micros{0})) throw Error(ErrorCode::kInvalidArgument, "slice budget must be positive");
  const CandidatePool& pool = *state.pool;
  const std::size_t n = pool.size();
  const Micros start = clock.now();

  std::vector<std::uint32_t> result;
  std::vector<bool> done;
  std::size_t i = 0;
  std::size_t j = 0;
  bool resuming = false;
  if (state.checkpoint) {
    validate(*state.checkpoint, n, state.degree_bound);
    result = std::move(state.checkpoint->result);
    done = std::move(state.checkpoint->done);
    i = state.checkpoint->i;
    j = state.checkpoint->j;
    state.checkpoint.reset();
    resuming = true;
  } else {
    if (state.degree_bound == 0) return Completed{};
    done.assign(n, false);
  }

  for (; i < n; ++i) {
    if (!resuming) {
      if (done[i]) continue;
      result.push_back(static_cast<std::uint32_t>(i));
      done[i] = true;
      if (result.size() >= state.degree_bound) break;
      j = i + 1;
    }
    resuming = false;
    for (; j < n; ++j) {
      if (!done[j] && covered(pool, state.alpha, i, j)) done[j] = true;
      ++state.iterations;
      clock.charge(Work::kPruneIteration);
      if (clock.now() - start >= budget) {
        PruneCheckpoint cp{std::move(result), std::move(done), static_cast<std::uint32_t>(i),
                           static_cast<std::uint32_t>(j + 1)};
        state.checkpoint = cp;
        return Yielded{std::move(cp)};
      }
    }
  }
  return Completed{to_ids(pool, result)};
}

std::vector<std::byte> PruneCheckpoint::serialize() const {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(result.size()));
  for (auto idx : result) w.u32(idx);
  std::vector<std::uint8_t> bits((done.size() + 7) / 8, 0);
  for (std::size_t k = 0; k < done.size(); ++k) {
    if (done[k]) bits[k / 8] |= static_cast<std::uint8_t>(1u << (k % 8));
  }
  for (auto b : bits) w.u8(b);
  w.u32(i);
  w.u32(j);
  return std::move(w).take();
}

PruneCheckpoint PruneCheckpoint::deserialize(std::span<const std::byte> bytes, std::size_t pool_size) {
  try {
    ByteReader r(bytes);
    PruneCheckpoint cp;
    const std::uint32_t len = r.u32();
    if (len > pool_size) throw Error(ErrorCode::kCorruptCheckpoint, "result longer than pool");
    cp.result.resize(len);
    for (auto& idx : cp.result) idx = r.u32();
    auto bits = r.bytes((pool_size + 7) / 8);
    cp.done.resize(pool_size);
    for (std::size_t k = 0; k < pool_size; ++k) {
      cp.done[k] = (std::to_integer<unsigned>(bits[k / 8]) >> (k % 8)) & 1u;
    }
    cp.i = r.u32();
    cp.j = r.u32();
    if (r.remaining() != 0) throw Error(ErrorCode::kCorruptCheckpoint, "trailing bytes after checkpoint");
    return cp;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kCorruptCheckpoint) throw;
    throw Error(ErrorCode::kCorruptCheckpoint, e.what());
  }
}

}  // namespace lios::prune
