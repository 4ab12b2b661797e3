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

#include <chrono>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace lios {

using VectorId = std::uint32_t;
inline constexpr VectorId kInvalidId = std::numeric_limits<VectorId>::max();

/// Dense float vector. Length is the index-wide dimension.
using Vector = std::vector<float>;

/// Durations everywhere are fractional microseconds.
using Micros = std::chrono::duration<double, std::micro>;

inline constexpr Micros kUnbounded{std::numeric_limits<double>::infinity()};

enum class ErrorCode {
  kInvalidArgument,
  kDimensionMismatch,
  kUnknownId,
  kCorruptRecord,
  kCorruptCheckpoint,
  kDeviceError,
  kQueueOverflow,
  kStaleHandle,
  kCapacityExhausted,
  kEmptyIndex,
  kMalformedInput,
  kInsufficientSamples,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace lios
