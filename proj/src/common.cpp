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

#include <thread>

#include "lios/clock.hpp"
#include "lios/common.hpp"

namespace lios {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kDimensionMismatch: return "dimension mismatch";
    case ErrorCode::kUnknownId: return "unknown id";
    case ErrorCode::kCorruptRecord: return "corrupt record";
    case ErrorCode::kCorruptCheckpoint: return "corrupt checkpoint";
    case ErrorCode::kDeviceError: return "device error";
    case ErrorCode::kQueueOverflow: return "queue overflow";
    case ErrorCode::kStaleHandle: return "stale handle";
    case ErrorCode::kCapacityExhausted: return "capacity exhausted";
    case ErrorCode::kEmptyIndex: return "empty index";
    case ErrorCode::kMalformedInput: return "malformed input";
    case ErrorCode::kInsufficientSamples: return "insufficient samples";
  }
  return "unknown error";
}

std::chrono::steady_clock::time_point SteadyWorkClock::origin() {
  static const auto t0 = std::chrono::steady_clock::now();
  return t0;
}

void SteadyWorkClock::sleep_until(Micros deadline) {
  auto remaining = deadline - now();
  if (remaining > Micros{0}) {
    std::this_thread::sleep_for(std::chrono::duration_cast<std::chrono::nanoseconds>(remaining));
  }
}

WorkCosts WorkCosts::prune_only(double per_iteration) {
  WorkCosts c;
  c[Work::kPruneIteration] = per_iteration;
  return c;
}

WorkCosts WorkCosts::desk_defaults() {
  // Per-vector repairs land in the hundreds of microseconds while a hop's
  // compute stays in the low tens, against ~100us device reads.
  WorkCosts c;
  c[Work::kPruneIteration] = 0.5;
  c[Work::kDistance] = 0.5;
  c[Work::kApproxDistance] = 0.05;
  c[Work::kRecordDecode] = 0.5;
  c[Work::kRecordScan] = 0.05;
  c[Work::kHopOverhead] = 2.0;
  return c;
}

}  // namespace lios
