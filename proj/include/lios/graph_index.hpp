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
#include <functional>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <unordered_set>
#include <vector>

#include "lios/common.hpp"
#include "lios/distance.hpp"
#include "lios/io.hpp"
#include "lios/quantizer.hpp"

namespace lios {

struct IndexConfig {
  std::uint32_t dim = 0;
  std::uint32_t degree_bound = 16;  // R
  std::uint32_t build_pool = 32;    // L_build
  double alpha_prune = 1.2;
  std::uint32_t record_align = 4096;
  Metric metric = Metric::kL2;
  unsigned quant_bits = 8;
  /// Slots for ids; 0 means "exactly the build size".
  std::uint64_t capacity = 0;
  std::uint64_t build_seed = 7;
};

struct NodeRecord {
  Vector vector;
  std::vector<VectorId> neighbors;

  friend bool operator==(const NodeRecord&, const NodeRecord&) = default;
};

/// Byte layout of one record: u32 neighbor_count, u32 neighbors[R] (unused
/// slots 0xFFFFFFFF), f32 vector[dim], u32 crc32 of everything before it;
/// zero padding up to the aligned record size.
class RecordCodec {
 public:
  RecordCodec(std::uint32_t dim, std::uint32_t degree_bound, std::uint32_t align);

  std::uint32_t dim() const noexcept { return dim_; }
  std::uint32_t degree_bound() const noexcept { return degree_bound_; }
  std::uint32_t serialized_size() const noexcept { return 4 * (degree_bound_ + dim_ + 2); }
  std::uint32_t padded_size() const noexcept { return padded_; }

  /// Validates degree, duplicates, self-loop (for `self`) and dimension.
  void validate(VectorId self, const NodeRecord& rec) const;

  std::vector<std::byte> encode(const NodeRecord& rec) const;
  /// Throws kCorruptRecord on checksum or structure failure.
  NodeRecord decode(std::span<const std::byte> bytes) const;

 private:
  std::uint32_t dim_;
  std::uint32_t degree_bound_;
  std::uint32_t padded_;
};

/// Index file header. Little-endian, at offset 0, padded to the record
/// alignment. Fields after tombstone_count extend the base layout.
struct IndexHeader {
  static constexpr char kMagic[8] = {'L', 'I', 'O', 'S', 'I', 'D', 'X', '1'};
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t dim = 0;
  std::uint32_t degree_bound = 0;
  std::uint32_t padded_record_size = 0;
  std::uint64_t count = 0;
  std::uint64_t entry_point = 0;
  std::uint64_t tombstone_offset = 0;
  std::uint64_t tombstone_length = 0;  // bytes
  std::uint64_t capacity = 0;
  std::uint32_t build_pool = 0;
  float alpha_prune = 1.2f;
  std::uint32_t record_align = 0;

  std::vector<std::byte> encode() const;
  static IndexHeader decode(std::span<const std::byte> bytes);
  static constexpr std::size_t kEncodedSize = 8 + 4 * 4 + 8 * 5 + 4 * 3;
};

/// The on-device graph plus the in-memory compressed vectors and tombstones.
///
/// Reads are safe from any number of threads. Writers to the same id are
/// serialized by the per-record lock; a reader of that id waits for it too.
class GraphIndex {
 public:
  /// Empty index over `device` with room for `cfg.capacity` ids.
  GraphIndex(io::BlockDevice& device, const IndexConfig& cfg, CompressedVectors compressed);

  /// Opens an index previously flushed to `device`.
  static std::unique_ptr<GraphIndex> open(io::BlockDevice& device, CompressedVectors compressed);

  const IndexConfig& config() const noexcept { return cfg_; }
  const RecordCodec& codec() const noexcept { return codec_; }
  io::BlockDevice& device() const noexcept { return device_; }
  const CompressedVectors& compressed() const noexcept { return compressed_; }
  CompressedVectors& compressed() noexcept { return compressed_; }

  std::uint64_t header_size() const noexcept { return header_size_; }
  std::uint64_t record_offset(VectorId id) const noexcept {
    return header_size_ + std::uint64_t{id} * codec_.padded_size();
  }

  std::uint64_t capacity() const noexcept { return cfg_.capacity; }
  /// Ids in [0, count()) have been allocated.
  std::uint64_t count() const noexcept { return count_.load(std::memory_order_acquire); }
  std::uint64_t live_count() const;

  VectorId entry_point() const noexcept { return entry_point_.load(std::memory_order_acquire); }
  void set_entry_point(VectorId id) noexcept { entry_point_.store(id, std::memory_order_release); }

  NodeRecord read_node(VectorId id) const;
  void write_node(VectorId id, const NodeRecord& rec);
  /// Read-modify-write under the record's exclusive lock. `fn` returns the
  /// new neighbor list, or nullopt to leave the record untouched.
  bool update_neighbors(VectorId id,
                        const std::function<std::optional<std::vector<VectorId>>(const NodeRecord&)>& fn);
  NodeRecord decode(std::span<const std::byte> payload) const { return codec_.decode(payload); }

  float approx_distance(const QueryState& q, VectorId id) const { return compressed_.approx_distance(q, id); }

  /// Reserves the next id and stores its compressed vector. Throws
  /// kCapacityExhausted when full.
  VectorId allocate(std::span<const float> v);

  bool is_deleted(VectorId id) const;
  /// Tombstones ids; throws kUnknownId for ids never allocated or already deleted.
  void mark_deleted(std::span<const VectorId> ids);
  std::vector<VectorId> deleted_ids() const;

  std::shared_mutex& record_lock(VectorId id) const noexcept { return locks_[id % kLockStripes]; }

  /// Persists header and tombstone list.
  void flush();

  /// Neighbor lists of all allocated ids (test and oracle helper).
  std::vector<std::vector<VectorId>> adjacency() const;

 private:
  static constexpr std::size_t kLockStripes = 1024;

  void check_id(VectorId id) const;

  io::BlockDevice& device_;
  IndexConfig cfg_;
  RecordCodec codec_;
  CompressedVectors compressed_;
  std::uint64_t header_size_;
  std::atomic<std::uint64_t> count_{0};
  std::atomic<VectorId> entry_point_{kInvalidId};
  mutable std::shared_mutex tomb_mu_;
  std::unordered_set<VectorId> tombstones_;
  mutable std::unique_ptr<std::shared_mutex[]> locks_;
};

/// Exact medoid, or the medoid of an evenly strided 1,000-point sample when larger.
VectorId medoid(std::span<const Vector> vectors);

/// Insert-based two-pass graph construction; the result is flushed to `device`.
std::unique_ptr<GraphIndex> build_index(std::span<const Vector> vectors, IndexConfig cfg, io::BlockDevice& device);

/// Ids reachable from the entry point, following neighbor lists.
std::vector<bool> reachable_from_entry(const GraphIndex& index);

}  // namespace lios
