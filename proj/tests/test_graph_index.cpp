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
#include <cmath>
#include <random>
#include <thread>

#include "lios/dataset.hpp"
#include "lios/distance.hpp"
#include "lios/graph_index.hpp"
#include "lios/search.hpp"
#include "support.hpp"

namespace {

using namespace lios;

std::vector<double> ranks(const std::vector<double>& xs) {
  std::vector<std::size_t> order(xs.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> r(xs.size());
  for (std::size_t k = 0; k < order.size(); ++k) r[order[k]] = static_cast<double>(k);
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double d2 = 0;
  for (std::size_t k = 0; k < a.size(); ++k) d2 += (ra[k] - rb[k]) * (ra[k] - rb[k]);
  return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

IndexConfig small_config(std::uint32_t dim, std::uint32_t R = 4, std::uint64_t capacity = 16) {
  IndexConfig cfg;
  cfg.dim = dim;
  cfg.degree_bound = R;
  cfg.capacity = capacity;
  return cfg;
}

std::unique_ptr<GraphIndex> empty_index(io::BlockDevice& dev, const IndexConfig& cfg,
                                        const std::vector<Vector>& training) {
  CompressedVectors cv(ScalarQuantizer::train(training, cfg.quant_bits), cfg.capacity);
  return std::make_unique<GraphIndex>(dev, cfg, std::move(cv));
}

}  // namespace

TEST_CASE("distance basics") {
  const Vector a{0, 0};
  const Vector b{3, 4};
  CHECK(l2(a, a) == 0.0f);
  CHECK(l2(a, b) == doctest::Approx(5.0));
  CHECK(exact_distance(a, b) == doctest::Approx(5.0));
  CHECK_THROWS_AS(exact_distance(a, Vector{1, 2, 3}), Error);

  auto v = testing::uniform_vectors(3000, 8, 4);
  for (std::size_t k = 0; k + 2 < v.size(); k += 3) {
    const double ab = l2(v[k], v[k + 1]);
    const double bc = l2(v[k + 1], v[k + 2]);
    const double ac = l2(v[k], v[k + 2]);
    CHECK(ab == l2(v[k + 1], v[k]));
    CHECK(ac <= ab + bc + 1e-5);
  }
}

TEST_CASE("lossless quantizer reproduces stored vectors") {
  auto data = testing::uniform_vectors(50, 6, 1);
  CompressedVectors cv(ScalarQuantizer::train(data, ScalarQuantizer::kLossless), 50);
  for (VectorId id = 0; id < 50; ++id) cv.set(id, data[id]);
  for (VectorId id = 0; id < 50; ++id) {
    CHECK(cv.decode(id) == data[id]);
    CHECK(cv.approx_distance(cv.prepare(data[id]), id) == 0.0f);
  }
}

TEST_CASE("8-bit quantizer error stays within its bound") {
  auto q = ScalarQuantizer::from_ranges({-5.0f, -5.0f}, {5.0f, 5.0f}, 8);
  CompressedVectors cv(q, 1);
  cv.set(0, Vector{3.0f, 4.0f});
  const float d = cv.approx_distance(cv.prepare(Vector{0.0f, 0.0f}), 0);
  CHECK(std::abs(d - 5.0) <= q.reconstruction_bound() + 1e-6);
  CHECK(q.reconstruction_bound() > 0.0);

  auto data = testing::uniform_vectors(500, 12, 2, -3.0f, 3.0f);
  auto trained = ScalarQuantizer::train(data, 8);
  std::vector<std::uint32_t> code(12);
  Vector back(12);
  for (const auto& v : data) {
    trained.encode(v, code);
    trained.decode(code, back);
    CHECK(l2(v, back) <= trained.reconstruction_bound() + 1e-6);
  }
}

TEST_CASE("approximate distances rank like exact ones") {
  auto data = testing::uniform_vectors(201, 16, 3);
  CompressedVectors cv(ScalarQuantizer::train(data, 8), data.size());
  for (VectorId id = 0; id < data.size(); ++id) cv.set(id, data[id]);
  std::vector<double> exact;
  std::vector<double> approx;
  for (std::size_t k = 0; k < 100; ++k) {
    const auto q = cv.prepare(data[2 * k]);
    exact.push_back(l2(data[2 * k], data[2 * k + 1]));
    approx.push_back(cv.approx_distance(q, static_cast<VectorId>(2 * k + 1)));
    CHECK(cv.approx_distance(q, static_cast<VectorId>(2 * k + 1)) ==
          cv.approx_distance(q, static_cast<VectorId>(2 * k + 1)));
  }
  CHECK(spearman(exact, approx) >= 0.99);
}

TEST_CASE("compressed vectors sidecar round trip") {
  auto data = testing::uniform_vectors(20, 5, 6);
  CompressedVectors cv(ScalarQuantizer::train(data, 8), 32);
  for (VectorId id = 0; id < 20; ++id) cv.set(id, data[id]);
  const auto path = std::filesystem::temp_directory_path() / "lios_cvq_test.cvq";
  cv.save(path);
  auto back = CompressedVectors::load(path);
  CHECK(back.capacity() == 32);
  CHECK(back.encoded(19));
  CHECK_FALSE(back.encoded(20));
  for (VectorId id = 0; id < 20; ++id) CHECK(back.decode(id) == cv.decode(id));
  std::filesystem::remove(path);
}

TEST_CASE("record codec round trip and validation") {
  RecordCodec codec(3, 4, 4096);
  CHECK(codec.padded_size() % 4096 == 0);
  CHECK(codec.padded_size() >= codec.serialized_size());
  NodeRecord rec{{1.0f, 2.0f, 3.0f}, {4, 9, 2}};
  auto bytes = codec.encode(rec);
  CHECK(bytes.size() == codec.padded_size());
  CHECK(codec.decode(bytes) == rec);
  CHECK(codec.encode(NodeRecord{{0, 0, 0}, {}}).size() == bytes.size());

  bytes[10] ^= std::byte{0x40};
  try {
    codec.decode(bytes);
    FAIL("checksum not verified");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kCorruptRecord);
  }
  CHECK_THROWS_AS(codec.validate(1, NodeRecord{{1, 2, 3}, {1, 2, 3, 4, 5}}), Error);
  CHECK_THROWS_AS(codec.validate(1, NodeRecord{{1, 2, 3}, {2, 2}}), Error);
  CHECK_THROWS_AS(codec.validate(1, NodeRecord{{1, 2, 3}, {1}}), Error);
  CHECK_THROWS_AS(codec.validate(1, NodeRecord{{1, 2}, {}}), Error);
}

TEST_CASE("index header round trip") {
  IndexHeader h;
  h.dim = 7;
  h.degree_bound = 12;
  h.padded_record_size = 4096;
  h.count = 99;
  h.entry_point = 5;
  h.tombstone_offset = 1 << 20;
  h.tombstone_length = 12;
  h.capacity = 128;
  h.build_pool = 40;
  h.alpha_prune = 1.3f;
  h.record_align = 4096;
  const auto bytes = h.encode();
  CHECK(bytes.size() == IndexHeader::kEncodedSize);
  const auto back = IndexHeader::decode(bytes);
  CHECK(back.dim == 7);
  CHECK(back.count == 99);
  CHECK(back.entry_point == 5);
  CHECK(back.tombstone_length == 12);
  CHECK(back.alpha_prune == 1.3f);
  auto bad = bytes;
  bad[0] = std::byte{'X'};
  CHECK_THROWS_AS(IndexHeader::decode(bad), Error);
}

TEST_CASE("node records round trip through the device") {
  io::SimDevice dev(testing::constant_profile(100.0));
  auto data = testing::uniform_vectors(10, 4, 7);
  auto cfg = small_config(4);
  auto index = empty_index(dev, cfg, data);
  for (const auto& v : data) index->allocate(v);
  NodeRecord rec{data[7], {1, 2, 3}};
  index->write_node(7, rec);
  CHECK(index->read_node(7) == rec);

  std::vector<std::byte> before(dev.size());
  dev.read(0, before);
  NodeRecord other{data[3], {0, 9}};
  index->write_node(3, other);
  std::vector<std::byte> after(dev.size());
  dev.read(0, after);
  const auto lo = index->record_offset(3);
  const auto hi = lo + index->codec().padded_size();
  for (std::size_t k = 0; k < before.size(); ++k) {
    if (k < lo || k >= hi) REQUIRE(before[k] == after[k]);
  }

  try {
    index->read_node(16);
    FAIL("read beyond capacity");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kUnknownId);
  }
  CHECK_THROWS_AS(index->write_node(2, NodeRecord{data[2], {2}}), Error);
}

TEST_CASE("simulated reads replay identically") {
  auto once = [] {
    io::DeviceProfile p;
    p.seed = 17;
    io::SimDevice dev(p);
    auto data = testing::uniform_vectors(8, 4, 8);
    auto cfg = small_config(4);
    auto index = empty_index(dev, cfg, data);
    for (const auto& v : data) index->allocate(v);
    index->write_node(5, NodeRecord{data[5], {1, 2}});
    VirtualWorkClock clock;
    auto h = dev.open_handle(clock);
    const io::ReadRequest req{5, index->record_offset(5), index->codec().padded_size()};
    auto w = h->wait_blocking(h->submit(std::span(&req, 1)));
    return std::make_pair(w.completions.at(0).payload, w.completions.at(0).service_time.count());
  };
  CHECK(once() == once());
}

TEST_CASE("concurrent writes to distinct ids both land") {
  io::SimDevice dev(testing::constant_profile(100.0));
  auto data = testing::uniform_vectors(64, 4, 9);
  auto index = empty_index(dev, small_config(4, 4, 64), data);
  for (const auto& v : data) index->allocate(v);
  std::vector<std::thread> workers;
  for (int t = 0; t < 4; ++t) {
    workers.emplace_back([&, t] {
      for (int round = 0; round < 50; ++round) {
        for (VectorId id = static_cast<VectorId>(t); id < 64; id += 4) {
          index->write_node(id, NodeRecord{data[id], {(id + 1) % 64, (id + static_cast<VectorId>(round) % 7 + 2) % 64}});
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  for (VectorId id = 0; id < 64; ++id) {
    const auto rec = index->read_node(id);
    CHECK(rec.vector == data[id]);
    CHECK(rec.neighbors.at(0) == (id + 1) % 64);
  }
}

TEST_CASE("allocation and tombstones") {
  io::SimDevice dev(testing::constant_profile(100.0));
  auto data = testing::uniform_vectors(4, 3, 10);
  auto index = empty_index(dev, small_config(3, 2, 3), data);
  CHECK(index->allocate(data[0]) == 0);
  CHECK(index->read_node(0).neighbors.empty());
  index->allocate(data[1]);
  index->allocate(data[2]);
  try {
    index->allocate(data[3]);
    FAIL("capacity not enforced");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kCapacityExhausted);
  }
  const std::vector<VectorId> del{1};
  index->mark_deleted(del);
  CHECK(index->is_deleted(1));
  CHECK(index->live_count() == 2);
  CHECK_THROWS_AS(index->mark_deleted(del), Error);
  const std::vector<VectorId> never{7};
  CHECK_THROWS_AS(index->mark_deleted(never), Error);
}

TEST_CASE("flushed index reopens with the same graph and tombstones") {
  io::SimDevice dev(testing::constant_profile(100.0));
  auto data = testing::uniform_vectors(200, 8, 11);
  IndexConfig cfg;
  cfg.degree_bound = 8;
  auto index = build_index(data, cfg, dev);
  const std::vector<VectorId> del{3, 50};
  index->mark_deleted(del);
  index->flush();
  auto reopened = GraphIndex::open(dev, index->compressed().clone());
  CHECK(reopened->count() == 200);
  CHECK(reopened->entry_point() == index->entry_point());
  CHECK(reopened->adjacency() == index->adjacency());
  CHECK(reopened->deleted_ids() == del);
  CHECK(reopened->config().degree_bound == 8);
}

TEST_CASE("build of a single vector") {
  io::SimDevice dev(testing::constant_profile(100.0));
  std::vector<Vector> one{{1.0f, 2.0f}};
  auto index = build_index(one, IndexConfig{}, dev);
  CHECK(index->count() == 1);
  CHECK(index->entry_point() == 0);
  CHECK(index->read_node(0).neighbors.empty());
}

TEST_CASE("build of identical vectors") {
  io::SimDevice dev(testing::constant_profile(100.0));
  std::vector<Vector> same(3, Vector{0.5f, 0.5f});
  IndexConfig cfg;
  cfg.degree_bound = 2;
  auto index = build_index(same, cfg, dev);
  for (VectorId id = 0; id < 3; ++id) {
    const auto n = index->read_node(id).neighbors;
    CHECK(n.size() <= 2);
    for (VectorId v : n) {
      CHECK(v != id);
      CHECK(v < 3);
    }
  }
  for (bool r : reachable_from_entry(*index)) CHECK(r);
}

TEST_CASE("built graph is reachable and searchable") {
  io::SimDevice dev(testing::constant_profile(100.0));
  auto all = testing::uniform_vectors(1100, 16, 12);
  std::vector<Vector> base(all.begin(), all.begin() + 1000);
  std::vector<Vector> queries(all.begin() + 1000, all.end());
  IndexConfig cfg;
  cfg.degree_bound = 16;
  cfg.build_pool = 32;
  auto index = build_index(base, cfg, dev);
  const auto seen = reachable_from_entry(*index);
  CHECK(std::count(seen.begin(), seen.end(), true) == 1000);
  for (VectorId id = 0; id < 1000; ++id) {
    const auto n = index->read_node(id).neighbors;
    CHECK(n.size() <= 16);
    CHECK(std::find(n.begin(), n.end(), id) == n.end());
  }

  VirtualWorkClock clock(WorkCosts::desk_defaults());
  auto h = dev.open_handle(clock);
  std::vector<std::vector<VectorId>> found;
  for (const auto& q : queries) {
    auto r = search::beam_search(*index, q, search::QueryParams{1, 32, 4}, *h, clock);
    found.push_back({r.neighbors.at(0).id});
  }
  CHECK(data::recall_at_k(found, data::ground_truth(base, queries, 1), 1) >= 0.95);
}

TEST_CASE("medoid of a symmetric set is its center") {
  std::vector<Vector> pts{{-1, 0}, {1, 0}, {0, 0}, {0, 1}, {0, -1}};
  CHECK(medoid(pts) == 2);
  CHECK_THROWS_AS(medoid(std::vector<Vector>{}), Error);
}
