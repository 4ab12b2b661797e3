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

#include <algorithm>

#include "lios/dataset.hpp"
#include "lios/graph_index.hpp"
#include "lios/search.hpp"
#include "support.hpp"

namespace {

using namespace lios;
using namespace lios::search;

// Index with explicit adjacency over lossless codes.
std::unique_ptr<GraphIndex> manual_index(io::BlockDevice& dev, const std::vector<Vector>& data,
                                         const std::vector<std::vector<VectorId>>& adj, std::uint32_t R,
                                         VectorId entry = 0) {
  IndexConfig cfg;
  cfg.dim = static_cast<std::uint32_t>(data.front().size());
  cfg.degree_bound = R;
  cfg.capacity = data.size();
  cfg.quant_bits = ScalarQuantizer::kLossless;
  CompressedVectors cv(ScalarQuantizer::train(data, cfg.quant_bits), cfg.capacity);
  auto index = std::make_unique<GraphIndex>(dev, cfg, std::move(cv));
  for (const auto& v : data) index->allocate(v);
  for (VectorId id = 0; id < data.size(); ++id) index->write_node(id, NodeRecord{data[id], adj[id]});
  index->set_entry_point(entry);
  return index;
}

class CountingHook final : public StallHook {
 public:
  bool on_stall(std::uint32_t, WorkClock&) override {
    ++stalls;
    return false;
  }
  void on_hop_complete(const HopRecord&) override { ++hops; }
  int stalls = 0;
  int hops = 0;
};

}  // namespace

TEST_CASE("query parameter validation") {
  CHECK_NOTHROW((QueryParams{10, 100, 4}.validate()));
  CHECK_THROWS_AS((QueryParams{0, 100, 4}.validate()), Error);
  CHECK_THROWS_AS((QueryParams{11, 10, 4}.validate()), Error);
  CHECK_THROWS_AS((QueryParams{1, 10, 0}.validate()), Error);
}

TEST_CASE("single node index returns that node") {
  io::SimDevice dev(testing::constant_profile(100.0));
  auto index = manual_index(dev, {{1.0f, 1.0f}}, {{}}, 4);
  VirtualWorkClock clock;
  auto h = dev.open_handle(clock);
  auto r = beam_search(*index, Vector{4.0f, 5.0f}, QueryParams{1, 4, 1}, *h, clock);
  REQUIRE(r.neighbors.size() == 1);
  CHECK(r.neighbors[0].id == 0);
  CHECK(r.neighbors[0].distance == doctest::Approx(5.0));
  CHECK(r.stats.hops == 1);
}

TEST_CASE("complete graph search matches brute force") {
  auto data = testing::uniform_vectors(5, 3, 21);
  std::vector<std::vector<VectorId>> adj(5);
  for (VectorId a = 0; a < 5; ++a) {
    for (VectorId b = 0; b < 5; ++b) {
      if (a != b) adj[a].push_back(b);
    }
  }
  io::SimDevice dev(testing::constant_profile(100.0));
  auto index = manual_index(dev, data, adj, 4);
  VirtualWorkClock clock;
  auto h = dev.open_handle(clock);
  auto queries = testing::uniform_vectors(20, 3, 22);
  for (const auto& q : queries) {
    auto r = beam_search(*index, q, QueryParams{3, 5, 1}, *h, clock);
    std::vector<VectorId> ids;
    for (auto& n : r.neighbors) ids.push_back(n.id);
    CHECK(ids == data::ground_truth(data, std::vector<Vector>{q}, 3).front());
    CHECK(std::is_sorted(r.neighbors.begin(), r.neighbors.end(),
                         [](const Neighbor& a, const Neighbor& b) { return a.distance < b.distance; }));
    CHECK(r.stats.io_count >= r.stats.hops);
  }
}

TEST_CASE("hop windows on a constant device") {
  auto data = testing::uniform_vectors(200, 8, 23);
  io::SimDevice dev(testing::constant_profile(100.0));
  IndexConfig cfg;
  cfg.degree_bound = 8;
  auto index = build_index(data, cfg, dev);
  VirtualWorkClock clock(WorkCosts::desk_defaults());
  auto h = dev.open_handle(clock);
  auto r = beam_search(*index, data[17], QueryParams{5, 20, 1}, *h, clock);
  REQUIRE(!r.stats.hop_log.empty());
  for (const auto& hop : r.stats.hop_log) {
    CHECK(hop.batch_size == 1);
    CHECK(hop.window.count() == doctest::Approx(100.0));
    CHECK(hop.stall.count() == doctest::Approx(100.0));
  }
  CHECK(r.neighbors.front().id == 17);

  // Per hop: fixed overhead, one decode, one exact distance and up to R
  // compressed lookups on top of the 100us read.
  const WorkCosts c = WorkCosts::desk_defaults();
  const double per_hop_min = c[Work::kHopOverhead] + c[Work::kRecordDecode] + c[Work::kDistance];
  const double per_hop_max = per_hop_min + 8 * c[Work::kApproxDistance];
  const double ratio = idle_ratio(r.stats);
  CHECK(ratio <= 100.0 / (100.0 + per_hop_min) * 1.05);
  CHECK(ratio >= 100.0 / (100.0 + per_hop_max + c[Work::kHopOverhead]) * 0.95);
}

TEST_CASE("idle ratio of degenerate stats") {
  SearchStats none;
  CHECK(idle_ratio(none) == 0.0);
  SearchStats waiting;
  waiting.latency = Micros{300};
  waiting.hop_log.push_back(HopRecord{1, 0, Micros{300}, Micros{300}, Micros{0}, false});
  CHECK(idle_ratio(waiting) == 1.0);
}

TEST_CASE("a hook that does nothing leaves results untouched") {
  auto data = testing::uniform_vectors(500, 8, 24);
  io::DeviceProfile p;
  p.seed = 3;
  io::SimDevice dev_a(p);
  IndexConfig cfg;
  cfg.degree_bound = 12;
  auto index_a = build_index(data, cfg, dev_a);
  auto dev_b = dev_a.clone();
  auto index_b = GraphIndex::open(*dev_b, index_a->compressed().clone());
  VirtualWorkClock ca(WorkCosts::desk_defaults());
  VirtualWorkClock cb(WorkCosts::desk_defaults());
  auto ha = dev_a.open_handle(ca);
  auto hb = dev_b->open_handle(cb);
  CountingHook hook;
  for (int k = 0; k < 50; ++k) {
    auto a = beam_search(*index_a, data[k * 7], QueryParams{10, 40, 4}, *ha, ca);
    auto b = beam_search(*index_b, data[k * 7], QueryParams{10, 40, 4}, *hb, cb, &hook);
    CHECK(a.neighbors == b.neighbors);
    CHECK(a.stats.io_count == b.stats.io_count);
    CHECK(a.stats.hops == b.stats.hops);
    CHECK(a.stats.latency == b.stats.latency);
  }
  CHECK(hook.stalls > 0);
  CHECK(hook.hops > 0);
}

TEST_CASE("cache hits skip the stall hook") {
  auto data = testing::uniform_vectors(50, 4, 25);
  auto p = testing::constant_profile(100.0);
  p.cache_records = 100;
  io::SimDevice dev(p);
  IndexConfig cfg;
  cfg.degree_bound = 6;
  auto index = build_index(data, cfg, dev);
  VirtualWorkClock clock(WorkCosts::desk_defaults());
  auto h = dev.open_handle(clock);
  CountingHook cold;
  auto first = beam_search(*index, data[3], QueryParams{5, 10, 2}, *h, clock, &cold);
  CountingHook warm;
  auto second = beam_search(*index, data[3], QueryParams{5, 10, 2}, *h, clock, &warm);
  CHECK(cold.stalls > 0);
  CHECK(warm.stalls == 0);
  CHECK(first.neighbors == second.neighbors);
  for (const auto& hop : second.stats.hop_log) CHECK(hop.cache_hits == hop.batch_size);
}

TEST_CASE("tombstoned nodes are traversed but not returned") {
  std::vector<Vector> line{{0.0f}, {1.0f}, {2.0f}, {3.0f}};
  std::vector<std::vector<VectorId>> adj{{1}, {0, 2}, {1, 3}, {2}};
  io::SimDevice dev(testing::constant_profile(10.0));
  auto index = manual_index(dev, line, adj, 2);
  const std::vector<VectorId> dead{1, 2};
  index->mark_deleted(dead);
  VirtualWorkClock clock;
  auto h = dev.open_handle(clock);
  auto r = beam_search(*index, Vector{2.1f}, QueryParams{2, 4, 1}, *h, clock);
  std::vector<VectorId> ids;
  for (auto& n : r.neighbors) ids.push_back(n.id);
  CHECK(ids == std::vector<VectorId>{3, 0});
}

TEST_CASE("empty index is an error") {
  io::SimDevice dev(testing::constant_profile(10.0));
  IndexConfig cfg;
  cfg.dim = 2;
  cfg.capacity = 4;
  CompressedVectors cv(ScalarQuantizer::from_ranges({0, 0}, {1, 1}, 8), 4);
  GraphIndex index(dev, cfg, std::move(cv));
  VirtualWorkClock clock;
  try {
    BeamSearch s(index, Vector{0.0f, 0.0f}, QueryParams{1, 4, 1}, clock);
    FAIL("search on an empty index");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kEmptyIndex);
  }
}

TEST_CASE("stepwise search equals the one-shot wrapper") {
  auto data = testing::uniform_vectors(300, 6, 26);
  io::SimDevice dev(testing::constant_profile(50.0));
  IndexConfig cfg;
  cfg.degree_bound = 8;
  auto index = build_index(data, cfg, dev);
  VirtualWorkClock c1;
  VirtualWorkClock c2;
  auto h1 = dev.open_handle(c1);
  auto h2 = dev.open_handle(c2);
  auto whole = beam_search(*index, data[9], QueryParams{10, 30, 3}, *h1, c1);
  BeamSearch s(*index, data[9], QueryParams{10, 30, 3}, c2);
  std::uint32_t steps = 0;
  while (s.step(h2.get(), nullptr)) ++steps;
  CHECK(s.finished());
  CHECK(steps == whole.stats.hops);
  CHECK(s.result().neighbors == whole.neighbors);
  VirtualWorkClock c3;
  BeamSearch sync(*index, data[9], QueryParams{10, 30, 3}, c3);
  CHECK(sync.run(nullptr, nullptr).neighbors == whole.neighbors);
}
