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
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lios/common.hpp"

namespace lios::data {

struct DatasetSpec {
  enum class Source { kFvecs, kBvecs, kSynthetic };
  Source source = Source::kSynthetic;
  std::filesystem::path path;
  std::size_t limit = 0;  // keep the first `limit` vectors; 0 keeps all
  // Synthetic Gaussian mixture.
  std::size_t n = 10000;
  std::uint32_t dim = 32;
  std::uint32_t clusters = 16;
  std::uint64_t seed = 42;

  /// "n,dim,clusters" as given on the command line.
  static DatasetSpec synthetic(std::size_t n, std::uint32_t dim, std::uint32_t clusters, std::uint64_t seed);
  static DatasetSpec parse_synthetic(const std::string& text, std::uint64_t seed);
};

std::vector<Vector> load_vectors(const DatasetSpec& spec);

/// {dim: u32 LE, dim x f32 LE} repeated.
std::vector<Vector> read_fvecs(const std::filesystem::path& path, std::size_t limit = 0);
/// {dim: u32 LE, dim x u8} repeated, promoted to float.
std::vector<Vector> read_bvecs(const std::filesystem::path& path, std::size_t limit = 0);
std::vector<Vector> parse_fvecs(std::span<const std::byte> bytes, std::size_t limit = 0);
std::vector<Vector> parse_bvecs(std::span<const std::byte> bytes, std::size_t limit = 0);
void write_fvecs(const std::filesystem::path& path, std::span<const Vector> vectors);

/// Isotropic Gaussian clusters around uniformly drawn centers.
std::vector<Vector> gaussian_mixture(std::size_t n, std::uint32_t dim, std::uint32_t clusters, std::uint64_t seed);

/// Exact L2 top-k per query, ties by lower id. `live[i] == false` excludes id i.
/// An empty `live` keeps every id.
std::vector<std::vector<VectorId>> ground_truth(std::span<const Vector> base, std::span<const Vector> queries,
                                                std::size_t k, const std::vector<bool>& live = {});

/// Mean over queries of |found ∩ truth| / |truth|, using the first k of each.
double recall_at_k(std::span<const std::vector<VectorId>> found, std::span<const std::vector<VectorId>> truth,
                   std::size_t k);

}  // namespace lios::data
