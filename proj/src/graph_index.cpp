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

#include "lios/graph_index.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <mutex>
#include <numeric>
#include <random>

#include "lios/prune.hpp"
#include "lios/serialize.hpp"

namespace lios {

namespace {

constexpr std::uint32_t kEmptySlot = 0xFFFFFFFFu;

std::uint64_t round_up(std::uint64_t n, std::uint64_t align) { return (n + align - 1) / align * align; }

std::uint32_t crc_of(std::span<const std::byte> bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

}  // namespace

// ---------------------------------------------------------------------------
// RecordCodec

RecordCodec::RecordCodec(std::uint32_t dim, std::uint32_t degree_bound, std::uint32_t align)
    : dim_(dim), degree_bound_(degree_bound) {
  if (dim == 0) throw Error(ErrorCode::kInvalidArgument, "dimension must be positive");
  if (degree_bound == 0) throw Error(ErrorCode::kInvalidArgument, "degree bound R must be at least 1");
  if (align == 0 || (align & (align - 1)) != 0) {
    throw Error(ErrorCode::kInvalidArgument, "record alignment must be a power of two");
  }
  padded_ = static_cast<std::uint32_t>(round_up(serialized_size(), align));
}

void RecordCodec::validate(VectorId self, const NodeRecord& rec) const {
  if (rec.vector.size() != dim_) {
    throw Error(ErrorCode::kDimensionMismatch, "record vector has " + std::to_string(rec.vector.size()) +
                                                   " components, index dim is " + std::to_string(dim_));
  }
  for (float x : rec.vector) {
    if (!std::isfinite(x)) throw Error(ErrorCode::kInvalidArgument, "vector component is not finite");
  }
  if (rec.neighbors.size() > degree_bound_) {
    throw Error(ErrorCode::kInvalidArgument, "neighbor list exceeds degree bound");
  }
  std::vector<VectorId> sorted = rec.neighbors;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw Error(ErrorCode::kInvalidArgument, "duplicate neighbor id");
  }
  if (self != kInvalidId && std::binary_search(sorted.begin(), sorted.end(), self)) {
    throw Error(ErrorCode::kInvalidArgument, "self-loop in neighbor list");
  }
  if (!sorted.empty() && sorted.back() == kEmptySlot) throw Error(ErrorCode::kInvalidArgument, "reserved neighbor id");
}

std::vector<std::byte> RecordCodec::encode(const NodeRecord& rec) const {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(rec.neighbors.size()));
  for (std::uint32_t k = 0; k < degree_bound_; ++k) w.u32(k < rec.neighbors.size() ? rec.neighbors[k] : kEmptySlot);
  for (float x : rec.vector) w.f32(x);
  w.u32(crc_of(w.data()));
  w.pad_to(padded_);
  return std::move(w).take();
}

NodeRecord RecordCodec::decode(std::span<const std::byte> bytes) const {
  if (bytes.size() < serialized_size()) throw Error(ErrorCode::kCorruptRecord, "record payload too short");
  const std::size_t body = serialized_size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, 4);
  if (stored != crc_of(bytes.first(body))) throw Error(ErrorCode::kCorruptRecord, "checksum mismatch");
  ByteReader r(bytes);
  NodeRecord rec;
  const std::uint32_t count = r.u32();
  if (count > degree_bound_) throw Error(ErrorCode::kCorruptRecord, "neighbor count exceeds degree bound");
  rec.neighbors.resize(count);
  for (std::uint32_t k = 0; k < degree_bound_; ++k) {
    const std::uint32_t v = r.u32();
    if (k < count) rec.neighbors[k] = v;
  }
  rec.vector.resize(dim_);
  for (auto& x : rec.vector) x = r.f32();
  return rec;
}

// ---------------------------------------------------------------------------
// IndexHeader

std::vector<std::byte> IndexHeader::encode() const {
  ByteWriter w;
  w.bytes(std::as_bytes(std::span(kMagic)));
  w.u32(kVersion);
  w.u32(dim);
  w.u32(degree_bound);
  w.u32(padded_record_size);
  w.u64(count);
  w.u64(entry_point);
  w.u64(tombstone_offset);
  w.u64(tombstone_length);
  w.u64(capacity);
  w.u32(build_pool);
  w.f32(alpha_prune);
  w.u32(record_align);
  return std::move(w).take();
}

IndexHeader IndexHeader::decode(std::span<const std::byte> bytes) {
  ByteReader r(bytes);
  auto magic = r.bytes(sizeof(kMagic));
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::kMalformedInput, "bad index magic");
  }
  if (r.u32() != kVersion) throw Error(ErrorCode::kMalformedInput, "unsupported index version");
  IndexHeader h;
  h.dim = r.u32();
  h.degree_bound = r.u32();
  h.padded_record_size = r.u32();
  h.count = r.u64();
  h.entry_point = r.u64();
  h.tombstone_offset = r.u64();
  h.tombstone_length = r.u64();
  h.capacity = r.u64();
  h.build_pool = r.u32();
  h.alpha_prune = r.f32();
  h.record_align = r.u32();
  return h;
}

// ---------------------------------------------------------------------------
// GraphIndex

GraphIndex::GraphIndex(io::BlockDevice& device, const IndexConfig& cfg, CompressedVectors compressed)
    : device_(device),
      cfg_(cfg),
      codec_(cfg.dim, cfg.degree_bound, cfg.record_align),
      compressed_(std::move(compressed)),
      header_size_(round_up(IndexHeader::kEncodedSize, cfg.record_align)),
      locks_(std::make_unique<std::shared_mutex[]>(kLockStripes)) {
  if (cfg_.alpha_prune < 1.0) throw Error(ErrorCode::kInvalidArgument, "alpha_prune must be >= 1");
  if (compressed_.dim() != cfg_.dim) throw Error(ErrorCode::kDimensionMismatch, "compressed vectors dim mismatch");
  if (cfg_.capacity == 0 || cfg_.capacity > compressed_.capacity()) cfg_.capacity = compressed_.capacity();
  if (cfg_.capacity >= kInvalidId) throw Error(ErrorCode::kInvalidArgument, "capacity exceeds id space");
  if (cfg_.record_align % device_.block_size() != 0) {
    throw Error(ErrorCode::kInvalidArgument, "record alignment must be a multiple of the device block size");
  }
}

std::unique_ptr<GraphIndex> GraphIndex::open(io::BlockDevice& device, CompressedVectors compressed) {
  std::vector<std::byte> buf(IndexHeader::kEncodedSize);
  device.read(0, buf);
  const IndexHeader h = IndexHeader::decode(buf);
  IndexConfig cfg;
  cfg.dim = h.dim;
  cfg.degree_bound = h.degree_bound;
  cfg.build_pool = h.build_pool;
  cfg.alpha_prune = h.alpha_prune;
  cfg.record_align = h.record_align;
  cfg.capacity = h.capacity;
  cfg.quant_bits = compressed.quantizer().bits();
  auto index = std::make_unique<GraphIndex>(device, cfg, std::move(compressed));
  if (index->codec_.padded_size() != h.padded_record_size) {
    throw Error(ErrorCode::kMalformedInput, "header record size disagrees with layout");
  }
  index->count_.store(h.count);
  index->entry_point_.store(h.entry_point == kInvalidId ? kInvalidId : static_cast<VectorId>(h.entry_point));
  if (h.tombstone_length > 0) {
    std::vector<std::byte> tb(h.tombstone_length);
    device.read(h.tombstone_offset, tb);
    ByteReader r(tb);
    while (r.remaining() >= 4) index->tombstones_.insert(r.u32());
  }
  return index;
}

void GraphIndex::check_id(VectorId id) const {
  if (id >= count()) {
    throw Error(ErrorCode::kUnknownId, "id " + std::to_string(id) + " not allocated (count " +
                                           std::to_string(count()) + ")");
  }
}

NodeRecord GraphIndex::read_node(VectorId id) const {
  check_id(id);
  std::vector<std::byte> buf(codec_.padded_size());
  {
    std::shared_lock lock(record_lock(id));
    device_.read(record_offset(id), buf);
  }
  return codec_.decode(buf);
}

void GraphIndex::write_node(VectorId id, const NodeRecord& rec) {
  check_id(id);
  codec_.validate(id, rec);
  const auto bytes = codec_.encode(rec);
  std::unique_lock lock(record_lock(id));
  device_.write(record_offset(id), bytes);
}

bool GraphIndex::update_neighbors(
    VectorId id, const std::function<std::optional<std::vector<VectorId>>(const NodeRecord&)>& fn) {
  check_id(id);
  std::vector<std::byte> buf(codec_.padded_size());
  std::unique_lock lock(record_lock(id));
  device_.read(record_offset(id), buf);
  NodeRecord rec = codec_.decode(buf);
  auto next = fn(rec);
  if (!next) return false;
  rec.neighbors = std::move(*next);
  codec_.validate(id, rec);
  device_.write(record_offset(id), codec_.encode(rec));
  return true;
}

VectorId GraphIndex::allocate(std::span<const float> v) {
  if (v.size() != cfg_.dim) throw Error(ErrorCode::kDimensionMismatch, "vector length differs from index dim");
  std::uint64_t id = count_.load();
  do {
    if (id >= cfg_.capacity) {
      throw Error(ErrorCode::kCapacityExhausted, "all " + std::to_string(cfg_.capacity) + " id slots used");
    }
  } while (!count_.compare_exchange_weak(id, id + 1));
  compressed_.set(static_cast<VectorId>(id), v);
  // Placeholder so scans never meet an unwritten slot.
  write_node(static_cast<VectorId>(id), NodeRecord{Vector(v.begin(), v.end()), {}});
  return static_cast<VectorId>(id);
}

std::uint64_t GraphIndex::live_count() const {
  std::shared_lock lock(tomb_mu_);
  return count() - tombstones_.size();
}

bool GraphIndex::is_deleted(VectorId id) const {
  std::shared_lock lock(tomb_mu_);
  return tombstones_.contains(id);
}

void GraphIndex::mark_deleted(std::span<const VectorId> ids) {
  std::unique_lock lock(tomb_mu_);
  for (VectorId id : ids) {
    if (id >= count() || tombstones_.contains(id)) {
      throw Error(ErrorCode::kUnknownId, "cannot delete id " + std::to_string(id));
    }
  }
  tombstones_.insert(ids.begin(), ids.end());
}

std::vector<VectorId> GraphIndex::deleted_ids() const {
  std::shared_lock lock(tomb_mu_);
  std::vector<VectorId> out(tombstones_.begin(), tombstones_.end());
  std::sort(out.begin(), out.end());
  return out;
}

void GraphIndex::flush() {
  IndexHeader h;
  h.dim = cfg_.dim;
  h.degree_bound = cfg_.degree_bound;
  h.padded_record_size = codec_.padded_size();
  h.count = count();
  h.entry_point = entry_point();
  h.capacity = cfg_.capacity;
  h.build_pool = cfg_.build_pool;
  h.alpha_prune = static_cast<float>(cfg_.alpha_prune);
  h.record_align = cfg_.record_align;
  // Tombstones live just past the last possible record, so record writes
  // never clobber them.
  h.tombstone_offset = record_offset(static_cast<VectorId>(cfg_.capacity));
  ByteWriter tw;
  for (VectorId id : deleted_ids()) tw.u32(id);
  h.tombstone_length = tw.data().size();
  if (!tw.data().empty()) device_.write(h.tombstone_offset, tw.data());
  ByteWriter hw;
  hw.bytes(h.encode());
  hw.pad_to(header_size_);
  device_.write(0, hw.data());
}

std::vector<std::vector<VectorId>> GraphIndex::adjacency() const {
  std::vector<std::vector<VectorId>> adj(count());
  for (VectorId id = 0; id < adj.size(); ++id) adj[id] = read_node(id).neighbors;
  return adj;
}

std::vector<bool> reachable_from_entry(const GraphIndex& index) {
  std::vector<bool> seen(index.count(), false);
  if (index.count() == 0 || index.entry_point() == kInvalidId) return seen;
  std::deque<VectorId> frontier{index.entry_point()};
  seen[index.entry_point()] = true;
  while (!frontier.empty()) {
    const VectorId u = frontier.front();
    frontier.pop_front();
    for (VectorId v : index.read_node(u).neighbors) {
      if (v < seen.size() && !seen[v]) {
        seen[v] = true;
        frontier.push_back(v);
      }
    }
  }
  return seen;
}

// ---------------------------------------------------------------------------
// Build

VectorId medoid(std::span<const Vector> vectors) {
  if (vectors.empty()) throw Error(ErrorCode::kInvalidArgument, "medoid of an empty set");
  constexpr std::size_t kSample = 1000;
  std::vector<VectorId> sample;
  if (vectors.size() <= kSample) {
    sample.resize(vectors.size());
    std::iota(sample.begin(), sample.end(), VectorId{0});
  } else {
    for (std::size_t k = 0; k < kSample; ++k) sample.push_back(static_cast<VectorId>(k * vectors.size() / kSample));
  }
  VectorId best = sample.front();
  double best_sum = std::numeric_limits<double>::infinity();
  for (VectorId c : sample) {
    double sum = 0.0;
    for (VectorId o : sample) sum += l2(vectors[c], vectors[o]);
    if (sum < best_sum) {
      best_sum = sum;
      best = c;
    }
  }
  return best;
}

namespace {

class InMemoryBuilder {
 public:
  InMemoryBuilder(std::span<const Vector> data, const IndexConfig& cfg)
      : data_(data), cfg_(cfg), adj_(data.size()), stamp_(data.size(), 0) {}

  void insert_pass(const std::vector<VectorId>& order, VectorId entry, double alpha) {
    for (VectorId p : order) {
      if (p == entry && adj_[p].empty() && inserted_ == 0) {
        ++inserted_;
        continue;
      }
      auto visited = visit(data_[p], entry);
      for (VectorId n : adj_[p]) visited.push_back(n);
      std::erase(visited, p);
      adj_[p] = prune(p, visited, alpha);
      for (VectorId n : adj_[p]) add_back_edge(n, p, alpha);
      ++inserted_;
    }
  }

  // Links nodes the entry point cannot reach, nearest reachable node first.
  void ensure_reachable(VectorId entry) {
    for (int round = 0; round < 8; ++round) {
      auto seen = bfs(entry);
      bool all = true;
      for (VectorId u = 0; u < data_.size(); ++u) {
        if (seen[u]) continue;
        all = false;
        std::vector<std::pair<float, VectorId>> reached;
        for (VectorId w = 0; w < data_.size(); ++w) {
          if (seen[w]) reached.emplace_back(l2(data_[u], data_[w]), w);
        }
        std::sort(reached.begin(), reached.end());
        VectorId host = reached.front().second;
        for (auto [d, w] : reached) {
          if (adj_[w].size() < cfg_.degree_bound) {
            host = w;
            break;
          }
        }
        if (adj_[host].size() >= cfg_.degree_bound) adj_[host].pop_back();
        adj_[host].push_back(u);
        seen = bfs(entry);
      }
      if (all) return;
    }
  }

  std::vector<std::vector<VectorId>>& adjacency() { return adj_; }

 private:
  std::vector<bool> bfs(VectorId entry) const {
    std::vector<bool> seen(data_.size(), false);
    std::deque<VectorId> q{entry};
    seen[entry] = true;
    while (!q.empty()) {
      VectorId u = q.front();
      q.pop_front();
      for (VectorId v : adj_[u]) {
        if (!seen[v]) {
          seen[v] = true;
          q.push_back(v);
        }
      }
    }
    return seen;
  }

  std::vector<VectorId> prune(VectorId target, const std::vector<VectorId>& ids, double alpha) const {
    std::vector<Vector> vecs;
    vecs.reserve(ids.size());
    for (VectorId id : ids) vecs.push_back(data_[id]);
    auto pool = prune::CandidatePool::build(data_[target], ids, vecs);
    return prune::prune_monolithic(pool, alpha, cfg_.degree_bound);
  }

  void add_back_edge(VectorId n, VectorId p, double alpha) {
    auto& list = adj_[n];
    if (std::find(list.begin(), list.end(), p) != list.end()) return;
    if (list.size() < cfg_.degree_bound) {
      list.push_back(p);
      return;
    }
    std::vector<VectorId> ids = list;
    ids.push_back(p);
    list = prune(n, ids, alpha);
  }

  // Greedy search with exact distances; returns every expanded node.
  std::vector<VectorId> visit(const Vector& q, VectorId entry) {
    struct Slot {
      prune::Candidate c;
      bool expanded;
    };
    ++epoch_;
    std::vector<Slot> pool;
    pool.push_back({{entry, l2(q, data_[entry])}, false});
    stamp_[entry] = epoch_;
    std::vector<VectorId> expanded;
    for (;;) {
      auto it = std::find_if(pool.begin(), pool.end(), [](const Slot& s) { return !s.expanded; });
      if (it == pool.end()) break;
      it->expanded = true;
      const VectorId u = it->c.id;
      expanded.push_back(u);
      for (VectorId v : adj_[u]) {
        if (stamp_[v] == epoch_) continue;
        stamp_[v] = epoch_;
        Slot s{{v, l2(q, data_[v])}, false};
        auto pos = std::lower_bound(pool.begin(), pool.end(), s,
                                    [](const Slot& a, const Slot& b) { return prune::closer(a.c, b.c); });
        pool.insert(pos, s);
      }
      if (pool.size() > cfg_.build_pool) pool.resize(cfg_.build_pool);
    }
    return expanded;
  }

  std::span<const Vector> data_;
  const IndexConfig& cfg_;
  std::vector<std::vector<VectorId>> adj_;
  std::vector<std::uint32_t> stamp_;
  std::uint32_t epoch_ = 0;
  std::size_t inserted_ = 0;
};

}  // namespace

std::unique_ptr<GraphIndex> build_index(std::span<const Vector> vectors, IndexConfig cfg, io::BlockDevice& device) {
  if (vectors.empty()) throw Error(ErrorCode::kInvalidArgument, "cannot build an index over zero vectors");
  if (cfg.dim == 0) cfg.dim = static_cast<std::uint32_t>(vectors.front().size());
  for (const auto& v : vectors) {
    if (v.size() != cfg.dim) {
      throw Error(ErrorCode::kDimensionMismatch, "vector of length " + std::to_string(v.size()) +
                                                     " in a build of dim " + std::to_string(cfg.dim));
    }
  }
  if (cfg.capacity < vectors.size()) cfg.capacity = vectors.size();

  CompressedVectors compressed(ScalarQuantizer::train(vectors, cfg.quant_bits), cfg.capacity);
  auto index = std::make_unique<GraphIndex>(device, cfg, std::move(compressed));

  const VectorId entry = medoid(vectors);
  std::vector<VectorId> order(vectors.size());
  std::iota(order.begin(), order.end(), VectorId{0});
  std::mt19937_64 rng(cfg.build_seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::erase(order, entry);
  order.insert(order.begin(), entry);

  InMemoryBuilder builder(vectors, index->config());
  builder.insert_pass(order, entry, 1.0);
  if (cfg.alpha_prune > 1.0) builder.insert_pass(order, entry, cfg.alpha_prune);
  builder.ensure_reachable(entry);

  for (const auto& v : vectors) index->allocate(v);
  auto& adj = builder.adjacency();
  for (VectorId id = 0; id < vectors.size(); ++id) index->write_node(id, NodeRecord{vectors[id], adj[id]});
  index->set_entry_point(entry);
  index->flush();
  return index;
}

}  // namespace lios
