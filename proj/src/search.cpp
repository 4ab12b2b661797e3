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

#include "lios/search.hpp"

#include <algorithm>

#include "lios/prune.hpp"

namespace lios::search {

void QueryParams::validate() const {
  if (k < 1 || k > pool_size) throw Error(ErrorCode::kInvalidArgument, "need 1 <= K <= L");
  if (beam_width < 1) throw Error(ErrorCode::kInvalidArgument, "beam width must be at least 1");
}

Micros SearchStats::idle_total() const {
  Micros total{0};
  for (const auto& h : hop_log) total += h.window;
  return total;
}

double idle_ratio(const SearchStats& stats) {
  if (!(stats.latency > Micros{0})) return 0.0;
  return std::clamp(stats.idle_total() / stats.latency, 0.0, 1.0);
}

BeamSearch::BeamSearch(const GraphIndex& index, std::span<const float> query, QueryParams params, WorkClock& clock)
    : index_(index),
      params_(params),
      clock_(&clock),
      query_(index.compressed().prepare(query)),
      seen_(index.capacity(), false),
      started_(clock.now()) {
  params_.validate();
  const VectorId entry = index.entry_point();
  if (index.count() == 0 || entry == kInvalidId) throw Error(ErrorCode::kEmptyIndex, "search on an empty index");
  seen_[entry] = true;
  pool_.push_back(Slot{entry, index.approx_distance(query_, entry), false});
  clock_->charge(Work::kApproxDistance);
}

std::vector<VectorId> BeamSearch::next_frontier() {
  std::vector<VectorId> frontier;
  for (auto& s : pool_) {
    if (frontier.size() >= params_.beam_width) break;
    if (!s.expanded) {
      s.expanded = true;
      frontier.push_back(s.id);
    }
  }
  return frontier;
}

void BeamSearch::absorb(VectorId id, const NodeRecord& rec) {
  clock_->charge(Work::kRecordDecode);
  clock_->charge(Work::kDistance);
  expanded_.push_back(ExpandedNode{id, l2(query_.query, rec.vector), rec.vector, index_.is_deleted(id)});
  const std::uint64_t allocated = index_.count();
  for (VectorId v : rec.neighbors) {
    if (v >= allocated || seen_[v]) continue;
    seen_[v] = true;
    Slot s{v, index_.approx_distance(query_, v), false};
    clock_->charge(Work::kApproxDistance);
    auto pos = std::lower_bound(pool_.begin(), pool_.end(), s, [](const Slot& a, const Slot& b) {
      return a.dist < b.dist || (a.dist == b.dist && a.id < b.id);
    });
    pool_.insert(pos, s);
  }
}

bool BeamSearch::step(io::IoHandle* handle, StallHook* hook) {
  if (finished_) return false;
  clock_->charge(Work::kHopOverhead);
  auto frontier = next_frontier();
  if (frontier.empty()) {
    finished_ = true;
    stats_.latency = clock_->now() - started_;
    return false;
  }

  HopRecord hop;
  hop.batch_size = static_cast<std::uint32_t>(frontier.size());
  std::vector<std::pair<VectorId, NodeRecord>> fetched;
  fetched.reserve(frontier.size());

  if (handle == nullptr) {
    for (VectorId id : frontier) fetched.emplace_back(id, index_.read_node(id));
  } else {
    std::vector<io::ReadRequest> reqs;
    reqs.reserve(frontier.size());
    for (VectorId id : frontier) {
      reqs.push_back(io::ReadRequest{id, index_.record_offset(id), index_.codec().padded_size()});
    }
    const Micros submitted = clock_->now();
    const io::BatchHandle batch = handle->submit(reqs);

    std::vector<io::Completion> done = handle->poll_nonblocking(batch);
    const bool all_hits =
        done.size() == frontier.size() &&
        std::all_of(done.begin(), done.end(), [](const io::Completion& c) { return c.service_time == Micros{0}; });
    if (hook != nullptr && !all_hits) {
      const Micros before = clock_->now();
      hop.hook_ran = hook->on_stall(hop.batch_size, *clock_);
      hop.slice = clock_->now() - before;
      if (hop.hook_ran) ++stats_.slices_run;
      auto more = handle->poll_nonblocking(batch);
      std::move(more.begin(), more.end(), std::back_inserter(done));
    }
    while (done.size() < frontier.size()) {
      auto waited = handle->wait_blocking(batch);
      std::move(waited.completions.begin(), waited.completions.end(), std::back_inserter(done));
    }
    hop.stall = clock_->now() - submitted;
    std::sort(done.begin(), done.end(), [](const io::Completion& a, const io::Completion& b) {
      return a.request_id < b.request_id;
    });
    for (auto& c : done) {
      hop.window = std::max(hop.window, c.service_time);
      if (c.service_time == Micros{0}) ++hop.cache_hits;
      fetched.emplace_back(static_cast<VectorId>(c.request_id), index_.decode(c.payload));
    }
    // Restore frontier order so pool updates do not depend on completion order.
    std::stable_sort(fetched.begin(), fetched.end(), [&](const auto& a, const auto& b) {
      return std::find(frontier.begin(), frontier.end(), a.first) < std::find(frontier.begin(), frontier.end(), b.first);
    });
  }

  for (const auto& [id, rec] : fetched) absorb(id, rec);
  if (pool_.size() > params_.pool_size) pool_.resize(params_.pool_size);

  ++stats_.hops;
  stats_.io_count += hop.batch_size;
  stats_.hop_log.push_back(hop);
  if (hook != nullptr && handle != nullptr) hook->on_hop_complete(hop);
  return true;
}

SearchResult BeamSearch::run(io::IoHandle* handle, StallHook* hook) {
  while (step(handle, hook)) {
  }
  return result();
}

SearchResult BeamSearch::result() const {
  std::vector<Neighbor> live;
  for (const auto& e : expanded_) {
    if (!e.deleted) live.push_back(Neighbor{e.id, e.distance});
  }
  std::sort(live.begin(), live.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
  });
  if (live.size() > params_.k) live.resize(params_.k);
  return SearchResult{std::move(live), stats_};
}

SearchResult beam_search(const GraphIndex& index, std::span<const float> query, const QueryParams& params,
                         io::IoHandle& handle, WorkClock& clock, StallHook* hook) {
  BeamSearch search(index, query, params, clock);
  return search.run(&handle, hook);
}

}  // namespace lios::search
