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

#include "lios/quantizer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "lios/distance.hpp"
#include "lios/serialize.hpp"

namespace lios {

namespace {
constexpr char kSidecarMagic[8] = {'L', 'I', 'O', 'S', 'C', 'V', 'Q', '1'};
constexpr std::uint32_t kSidecarVersion = 1;
}  // namespace

float exact_distance(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "vectors of length " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  return l2(a, b);
}

ScalarQuantizer ScalarQuantizer::from_ranges(std::vector<float> lo, std::vector<float> hi, unsigned bits) {
  if (lo.size() != hi.size() || lo.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "quantizer ranges must be non-empty and equal length");
  }
  if (!(bits == kLossless || (bits >= 1 && bits <= 16))) {
    throw Error(ErrorCode::kInvalidArgument, "bits per dimension must be in [1,16] or 32");
  }
  ScalarQuantizer q;
  q.lo_ = std::move(lo);
  q.hi_ = std::move(hi);
  q.bits_ = bits;
  return q;
}

ScalarQuantizer ScalarQuantizer::train(std::span<const Vector> vectors, unsigned bits) {
  if (vectors.empty()) throw Error(ErrorCode::kInvalidArgument, "cannot train on zero vectors");
  const std::size_t dim = vectors.front().size();
  std::vector<float> lo(dim, std::numeric_limits<float>::infinity());
  std::vector<float> hi(dim, -std::numeric_limits<float>::infinity());
  for (const auto& v : vectors) {
    if (v.size() != dim) throw Error(ErrorCode::kDimensionMismatch, "training vectors differ in length");
    for (std::size_t k = 0; k < dim; ++k) {
      lo[k] = std::min(lo[k], v[k]);
      hi[k] = std::max(hi[k], v[k]);
    }
  }
  return from_ranges(std::move(lo), std::move(hi), bits);
}

double ScalarQuantizer::step(std::size_t k) const noexcept {
  if (lossless()) return 0.0;
  const double levels = static_cast<double>((1u << bits_) - 1u);
  return (static_cast<double>(hi_[k]) - static_cast<double>(lo_[k])) / levels;
}

void ScalarQuantizer::encode(std::span<const float> v, std::span<std::uint32_t> out) const {
  if (v.size() != dim() || out.size() != dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "encode expects dim-length input and output");
  }
  if (lossless()) {
    for (std::size_t k = 0; k < dim(); ++k) out[k] = std::bit_cast<std::uint32_t>(v[k]);
    return;
  }
  const std::uint32_t max_code = (1u << bits_) - 1u;
  for (std::size_t k = 0; k < dim(); ++k) {
    const double s = step(k);
    if (s <= 0.0) {
      out[k] = 0;
      continue;
    }
    const double level = std::nearbyint((static_cast<double>(v[k]) - lo_[k]) / s);
    out[k] = static_cast<std::uint32_t>(std::clamp(level, 0.0, static_cast<double>(max_code)));
  }
}

void ScalarQuantizer::decode(std::span<const std::uint32_t> code, std::span<float> out) const {
  if (code.size() != dim() || out.size() != dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "decode expects dim-length input and output");
  }
  for (std::size_t k = 0; k < dim(); ++k) {
    out[k] = lossless() ? std::bit_cast<float>(code[k])
                        : static_cast<float>(lo_[k] + step(k) * static_cast<double>(code[k]));
  }
}

double ScalarQuantizer::reconstruction_bound() const noexcept {
  double acc = 0.0;
  for (std::size_t k = 0; k < dim(); ++k) {
    // Half a step from rounding, plus float rounding of the decoded value.
    const double half = step(k) / 2.0 + std::abs(hi_[k]) * 1e-6;
    acc += half * half;
  }
  return lossless() ? 0.0 : std::sqrt(acc);
}

CompressedVectors::CompressedVectors(ScalarQuantizer quantizer, std::size_t capacity)
    : quantizer_(std::move(quantizer)),
      capacity_(capacity),
      codes_(capacity * quantizer_.dim(), 0),
      present_(std::make_unique<std::atomic<bool>[]>(capacity)) {
  for (std::size_t i = 0; i < capacity_; ++i) present_[i].store(false, std::memory_order_relaxed);
}

void CompressedVectors::set(VectorId id, std::span<const float> v) {
  if (id >= capacity_) throw Error(ErrorCode::kUnknownId, "id " + std::to_string(id) + " beyond capacity");
  quantizer_.encode(v, std::span(codes_).subspan(std::size_t{id} * dim(), dim()));
  present_[id].store(true, std::memory_order_release);
}

bool CompressedVectors::encoded(VectorId id) const noexcept {
  return id < capacity_ && present_[id].load(std::memory_order_acquire);
}

QueryState CompressedVectors::prepare(std::span<const float> query) const {
  if (query.size() != dim()) throw Error(ErrorCode::kDimensionMismatch, "query length differs from index dim");
  return QueryState{Vector(query.begin(), query.end())};
}

float CompressedVectors::approx_distance(const QueryState& q, VectorId id) const {
  if (!encoded(id)) throw Error(ErrorCode::kUnknownId, "no compressed vector for id " + std::to_string(id));
  const std::uint32_t* code = codes_.data() + std::size_t{id} * dim();
  double acc = 0.0;
  if (quantizer_.lossless()) {
    for (std::size_t k = 0; k < dim(); ++k) {
      const double d = static_cast<double>(q.query[k]) - std::bit_cast<float>(code[k]);
      acc += d * d;
    }
  } else {
    const auto& lo = quantizer_.lo();
    for (std::size_t k = 0; k < dim(); ++k) {
      const float x = static_cast<float>(lo[k] + quantizer_.step(k) * static_cast<double>(code[k]));
      const double d = static_cast<double>(q.query[k]) - x;
      acc += d * d;
    }
  }
  return static_cast<float>(std::sqrt(acc));
}

Vector CompressedVectors::decode(VectorId id) const {
  if (!encoded(id)) throw Error(ErrorCode::kUnknownId, "no compressed vector for id " + std::to_string(id));
  Vector out(dim());
  quantizer_.decode(std::span(codes_).subspan(std::size_t{id} * dim(), dim()), out);
  return out;
}

CompressedVectors CompressedVectors::clone() const {
  CompressedVectors copy(quantizer_, capacity_);
  copy.codes_ = codes_;
  for (std::size_t i = 0; i < capacity_; ++i) {
    copy.present_[i].store(present_[i].load(std::memory_order_acquire), std::memory_order_relaxed);
  }
  return copy;
}

void CompressedVectors::save(const std::filesystem::path& path) const {
  ByteWriter w;
  w.bytes(std::as_bytes(std::span(kSidecarMagic)));
  w.u32(kSidecarVersion);
  w.u32(static_cast<std::uint32_t>(dim()));
  w.u32(quantizer_.bits());
  w.u64(capacity_);
  for (float x : quantizer_.lo()) w.f32(x);
  for (float x : quantizer_.hi()) w.f32(x);
  for (std::size_t i = 0; i < capacity_; ++i) w.u8(encoded(static_cast<VectorId>(i)) ? 1 : 0);
  for (std::uint32_t c : codes_) w.u32(c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kDeviceError, "cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(w.data().data()), static_cast<std::streamsize>(w.data().size()));
  if (!out) throw Error(ErrorCode::kDeviceError, "short write to " + path.string());
}

CompressedVectors CompressedVectors::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kDeviceError, "cannot open " + path.string());
  in.seekg(0, std::ios::end);
  std::vector<std::byte> buf(static_cast<std::size_t>(in.tellg()));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  ByteReader r(buf);
  auto magic = r.bytes(sizeof(kSidecarMagic));
  if (std::memcmp(magic.data(), kSidecarMagic, sizeof(kSidecarMagic)) != 0) {
    throw Error(ErrorCode::kMalformedInput, path.string() + " is not a compressed-vector sidecar");
  }
  if (r.u32() != kSidecarVersion) throw Error(ErrorCode::kMalformedInput, "unsupported sidecar version");
  const std::uint32_t dim = r.u32();
  const std::uint32_t bits = r.u32();
  const std::uint64_t capacity = r.u64();
  std::vector<float> lo(dim), hi(dim);
  for (auto& x : lo) x = r.f32();
  for (auto& x : hi) x = r.f32();
  CompressedVectors cv(ScalarQuantizer::from_ranges(std::move(lo), std::move(hi), bits), capacity);
  std::vector<std::uint8_t> present(capacity);
  for (auto& p : present) p = r.u8();
  for (auto& c : cv.codes_) c = r.u32();
  for (std::size_t i = 0; i < capacity; ++i) cv.present_[i].store(present[i] != 0, std::memory_order_relaxed);
  return cv;
}

}  // namespace lios
