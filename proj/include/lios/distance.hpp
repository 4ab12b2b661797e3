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

#include <cmath>
#include <span>

#include "lios/common.hpp"

namespace lios {

enum class Metric { kL2 };

/// Squared L2. Accumulates in double so results do not depend on summation width.
inline double l2_squared(std::span<const float> a, std::span<const float> b) noexcept {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = static_cast<double>(a[k]) - static_cast<double>(b[k]);
    acc += d * d;
  }
  return acc;
}

inline float l2(std::span<const float> a, std::span<const float> b) noexcept {
  return static_cast<float>(std::sqrt(l2_squared(a, b)));
}

/// Checked L2 distance between two vectors of equal length.
float exact_distance(std::span<const float> a, std::span<const float> b);

}  // namespace lios
