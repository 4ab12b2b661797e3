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
#include <random>
#include <vector>

#include "lios/common.hpp"
#include "lios/io.hpp"

namespace lios::testing {

inline std::vector<Vector> uniform_vectors(std::size_t n, std::uint32_t dim, std::uint64_t seed,
                                           float lo = -1.0f, float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  std::vector<Vector> out(n, Vector(dim));
  for (auto& v : out) {
    for (auto& x : v) x = u(rng);
  }
  return out;
}

inline io::DeviceProfile constant_profile(double us, std::uint64_t seed = 1) {
  io::DeviceProfile p;
  p.latency = io::LatencyModel::constant(us);
  p.seed = seed;
  return p;
}

}  // namespace lios::testing
