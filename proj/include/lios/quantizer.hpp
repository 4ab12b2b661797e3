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
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "lios/common.hpp"

namespace lios {

/// Per-dimension uniform scalar quantizer (min/max range, `bits` levels).
///
/// bits in [1, 16] stores one code per component; bits == 32 is the lossless
/// mode and keeps the raw floats. Components outside the trained range are
/// clamped, so their reconstruction error is not bounded by half a step.
class ScalarQuantizer {
 public:
  static constexpr unsigned kLossless = 32;

  ScalarQuantizer() = default;

  /// Fits ranges on the given vectors.
  static ScalarQuantizer train(std::span<const Vector> vectors, unsigned bits = 8);
  static ScalarQuantizer from_ranges(std::vector<float> lo, std::vector<float> hi, unsigned bits);

  std::size_t dim() const noexcept { return lo_.size(); }
  unsigned bits() const noexcept { return bits_; }
  bool lossless() const noexcept { return bits_ == kLossless; }
  std::size_t code_words() const noexcept { return dim(); }

  const std::vector<float>& lo() const noexcept { return lo_; }
  const std::vector<float>& hi() const noexcept { return hi_; }

  /// Quantization step of dimension k (0 in lossless mode).
  double step(std::size_t k) const noexcept;

  /// Encodes into `out` (dim() words). Lossless mode stores the float bits.
  void encode(std::span<const float> v, std::span<std::uint32_t> out) const;
  void decode(std::span<const std::uint32_t> code, std::span<float> out) const;

  /// Upper bound on ||decode(encode(v)) - v|| for in-range vectors.
  double reconstruction_bound() const noexcept;

 private:
  std::vector<float> lo_;
  std::vector<float> hi_;
  unsigned bits_ = 8;
};

/// Prepared query for repeated approximate distances.
struct QueryState {
  Vector query;
};

/// Fixed-capacity in-memory table of compressed vectors, one slot per id.
///
/// Slots are written once before their id is published to the graph; readers
/// of published ids never race with the writer of that slot.
class CompressedVectors {
 public:
  CompressedVectors(ScalarQuantizer quantizer, std::size_t capacity);

  const ScalarQuantizer& quantizer() const noexcept { return quantizer_; }
  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t dim() const noexcept { return quantizer_.dim(); }

  void set(VectorId id, std::span<const float> v);
  bool encoded(VectorId id) const noexcept;

  QueryState prepare(std::span<const float> query) const;

  /// L2 distance between the query and the decoded vector of `id`.
  float approx_distance(const QueryState& q, VectorId id) const;

  Vector decode(VectorId id) const;

  /// Sidecar file: magic "LIOSCVQ1", version, dim, bits, capacity, ranges,
  /// presence bitmap, codes. Little-endian.
  void save(const std::filesystem::path& path) const;
  static CompressedVectors load(const std::filesystem::path& path);

  CompressedVectors clone() const;

 private:
  ScalarQuantizer quantizer_;
  std::size_t capacity_;
  std::vector<std::uint32_t> codes_;
  std::unique_ptr<std::atomic<bool>[]> present_;
};

}  // namespace lios
