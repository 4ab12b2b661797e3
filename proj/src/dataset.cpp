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

#include "lios/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_set>

#include "lios/distance.hpp"
#include "lios/serialize.hpp"

namespace lios::data {

DatasetSpec DatasetSpec::synthetic(std::size_t n, std::uint32_t dim, std::uint32_t clusters, std::uint64_t seed) {
  DatasetSpec s;
  s.source = Source::kSynthetic;
  s.n = n;
  s.dim = dim;
  s.clusters = clusters;
  s.seed = seed;
  return s;
}

DatasetSpec DatasetSpec::parse_synthetic(const std::string& text, std::uint64_t seed) {
  std::istringstream in(text);
  std::size_t n = 0;
  std::uint32_t dim = 0;
  std::uint32_t clusters = 0;
  char c1 = 0;
  char c2 = 0;
  if (!(in >> n >> c1 >> dim >> c2 >> clusters) || c1 != ',' || c2 != ',' || !in.eof()) {
    throw Error(ErrorCode::kInvalidArgument, "synthetic spec must be n,dim,clusters: '" + text + "'");
  }
  return synthetic(n, dim, clusters, seed);
}

namespace {

std::vector<std::byte> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMalformedInput, "cannot open " + path.string());
  in.seekg(0, std::ios::end);
  std::vector<std::byte> buf(static_cast<std::size_t>(in.tellg()));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  return buf;
}

template <typename Elem>
std::vector<Vector> parse_vecs(std::span<const std::byte> bytes, std::size_t limit, const char* what) {
  ByteReader r(bytes);
  std::vector<Vector> out;
  std::uint32_t dim = 0;
  while (r.remaining() > 0 && (limit == 0 || out.size() < limit)) {
    if (r.remaining() < 4) throw Error(ErrorCode::kMalformedInput, std::string(what) + ": truncated header");
    const std::uint32_t d = r.u32();
    if (d == 0) throw Error(ErrorCode::kMalformedInput, std::string(what) + ": zero dimension");
    if (!out.empty() && d != dim) {
      throw Error(ErrorCode::kMalformedInput, std::string(what) + ": inconsistent dimension at vector " +
                                                   std::to_string(out.size()));
    }
    dim = d;
    if (r.remaining() < std::size_t{d} * sizeof(Elem)) {
      throw Error(ErrorCode::kMalformedInput, std::string(what) + ": truncated payload");
    }
    Vector v(d);
    for (auto& x : v) {
      if constexpr (std::is_same_v<Elem, float>) {
        x = r.f32();
      } else {
        x = static_cast<float>(r.u8());
      }
    }
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace

std::vector<Vector> parse_fvecs(std::span<const std::byte> bytes, std::size_t limit) {
  return parse_vecs<float>(bytes, limit, "fvecs");
}

std::vector<Vector> parse_bvecs(std::span<const std::byte> bytes, std::size_t limit) {
  return parse_vecs<std::uint8_t>(bytes, limit, "bvecs");
}

std::vector<Vector> read_fvecs(const std::filesystem::path& path, std::size_t limit) {
  return parse_fvecs(slurp(path), limit);
}

std::vector<Vector> read_bvecs(const std::filesystem::path& path, std::size_t limit) {
  return parse_bvecs(slurp(path), limit);
}

void write_fvecs(const std::filesystem::path& path, std::span<const Vector> vectors) {
  ByteWriter w;
  for (const auto& v : vectors) {
    w.u32(static_cast<std::uint32_t>(v.size()));
    for (float x : v) w.f32(x);
  }
  const auto bytes = std::move(w).take();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kDeviceError, "cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<Vector> gaussian_mixture(std::size_t n, std::uint32_t dim, std::uint32_t clusters, std::uint64_t seed) {
  if (dim == 0 || clusters == 0) throw Error(ErrorCode::kInvalidArgument, "dim and clusters must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> center(-10.0f, 10.0f);
  std::normal_distribution<float> noise(0.0f, 1.0f);
  std::vector<Vector> centers(clusters, Vector(dim));
  for (auto& c : centers) {
    for (auto& x : c) x = center(rng);
  }
  std::uniform_int_distribution<std::uint32_t> pick(0, clusters - 1);
  std::vector<Vector> out(n, Vector(dim));
  for (auto& v : out) {
    const Vector& c = centers[pick(rng)];
    for (std::uint32_t d = 0; d < dim; ++d) v[d] = c[d] + noise(rng);
  }
  return out;
}

std::vector<Vector> load_vectors(const DatasetSpec& spec) {
  switch (spec.source) {
    case DatasetSpec::Source::kFvecs: return read_fvecs(spec.path, spec.limit);
    case DatasetSpec::Source::kBvecs: return read_bvecs(spec.path, spec.limit);
    case DatasetSpec::Source::kSynthetic: {
      auto v = gaussian_mixture(spec.n, spec.dim, spec.clusters, spec.seed);
      if (spec.limit != 0 && spec.limit < v.size()) v.resize(spec.limit);
      return v;
    }
  }
  return {};
}

std::vector<std::vector<VectorId>> ground_truth(std::span<const Vector> base, std::span<const Vector> queries,
                                                std::size_t k, const std::vector<bool>& live) {
  std::vector<std::vector<VectorId>> out;
  out.reserve(queries.size());
  std::vector<std::pair<float, VectorId>> scored;
  for (const auto& q : queries) {
    scored.clear();
    for (std::size_t i = 0; i < base.size(); ++i) {
      if (!live.empty() && !live[i]) continue;
      scored.emplace_back(exact_distance(q, base[i]), static_cast<VectorId>(i));
    }
    const std::size_t take = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end());
    std::vector<VectorId> ids;
    ids.reserve(take);
    for (std::size_t i = 0; i < take; ++i) ids.push_back(scored[i].second);
    out.push_back(std::move(ids));
  }
  return out;
}

double recall_at_k(std::span<const std::vector<VectorId>> found, std::span<const std::vector<VectorId>> truth,
                   std::size_t k) {
  if (found.size() != truth.size()) throw Error(ErrorCode::kInvalidArgument, "result and truth counts differ");
  if (truth.empty()) return 0.0;
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t q = 0; q < truth.size(); ++q) {
    const std::size_t t = std::min(k, truth[q].size());
    if (t == 0) continue;
    std::unordered_set<VectorId> want(truth[q].begin(), truth[q].begin() + static_cast<std::ptrdiff_t>(t));
    std::size_t hit = 0;
    for (std::size_t i = 0; i < std::min(k, found[q].size()); ++i) hit += want.count(found[q][i]);
    total += static_cast<double>(hit) / static_cast<double>(t);
    ++counted;
  }
  return counted ? total / static_cast<double>(counted) : 0.0;
}

}  // namespace lios::data
