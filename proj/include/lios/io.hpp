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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lios/clock.hpp"
#include "lios/common.hpp"

namespace lios::io {

struct ReadRequest {
  std::uint64_t request_id = 0;
  std::uint64_t offset = 0;
  std::uint32_t length = 0;
};

struct Completion {
  std::uint64_t request_id = 0;
  std::vector<std::byte> payload;
  Micros service_time{0};
};

struct BatchHandle {
  std::uint64_t value = 0;
  friend bool operator==(BatchHandle, BatchHandle) = default;
};

struct WaitResult {
  std::vector<Completion> completions;
  Micros waited{0};
};

/// Per-thread submission context over a shared device.
///
/// A handle is confined to one thread. Submitting, polling and waiting never
/// touch another handle's state, only the device's shared bookkeeping.
class IoHandle {
 public:
  virtual ~IoHandle() = default;

  /// Requests must be aligned to the device block size. Fails with
  /// kQueueOverflow when in-flight plus batch would exceed the queue depth.
  virtual BatchHandle submit(std::span<const ReadRequest> batch) = 0;

  /// Returns only completions that are already finished. Never blocks.
  virtual std::vector<Completion> poll_nonblocking(BatchHandle batch) = 0;

  /// Blocks until at least one completion of `batch` is available, then
  /// returns everything finished by that point.
  virtual WaitResult wait_blocking(BatchHandle batch) = 0;

  /// Simulator in virtual-time mode only.
  virtual void advance_virtual_time(Micros d);

  virtual std::size_t in_flight() const noexcept = 0;
};

/// Shared, thread-safe block device.
class BlockDevice {
 public:
  virtual ~BlockDevice() = default;

  virtual std::unique_ptr<IoHandle> open_handle(WorkClock& clock) = 0;

  /// Synchronous access used by maintenance paths (build, update tasks).
  virtual void read(std::uint64_t offset, std::span<std::byte> out) = 0;
  virtual void write(std::uint64_t offset, std::span<const std::byte> data) = 0;

  virtual std::uint64_t size() const = 0;
  virtual std::uint32_t block_size() const noexcept = 0;
};

/// Fixed-capacity LRU of whole records keyed by device offset.
/// Capacity 0 disables it.
class RecordCache {
 public:
  explicit RecordCache(std::size_t capacity) : capacity_(capacity) {}

  std::optional<std::vector<std::byte>> lookup(std::uint64_t offset);
  void insert(std::uint64_t offset, std::span<const std::byte> payload);
  void invalidate(std::uint64_t offset);
  std::size_t size() const;
  std::size_t capacity() const noexcept { return capacity_; }

 private:
  using Entry = std::pair<std::uint64_t, std::vector<std::byte>>;
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::list<Entry> lru_;
  std::unordered_map<std::uint64_t, std::list<Entry>::iterator> index_;
};

struct LatencyModel {
  enum class Kind { kConstant, kLognormal, kEmpirical };
  Kind kind = Kind::kLognormal;
  double constant_us = 100.0;
  // Mode exp(mu - sigma^2) ~= 100us.
  double mu = 4.855170185988091;
  double sigma = 0.5;
  std::vector<double> empirical_us;

  static LatencyModel constant(double us);
  static LatencyModel lognormal(double mu, double sigma);
  /// Newline-delimited microsecond values.
  static LatencyModel empirical_from_file(const std::filesystem::path& path);

  double sample(std::mt19937_64& rng) const;
};

struct DeviceProfile {
  LatencyModel latency;
  double concurrency_penalty_us = 0.0;  // added per request already outstanding
  std::uint64_t seed = 1;
  std::size_t queue_depth = 64;
  std::size_t cache_records = 0;
  std::uint32_t block_size = 4096;
};

/// In-memory device with a seeded latency model.
///
/// Each handle draws latencies from its own stream seeded by (seed, handle
/// creation index), so the sequence a handle sees depends only on the seed and
/// on its own submissions. The concurrency penalty looks at requests
/// outstanding device-wide at submit time.
class SimDevice final : public BlockDevice {
 public:
  explicit SimDevice(DeviceProfile profile);
  ~SimDevice() override;

  std::unique_ptr<IoHandle> open_handle(WorkClock& clock) override;
  void read(std::uint64_t offset, std::span<std::byte> out) override;
  void write(std::uint64_t offset, std::span<const std::byte> data) override;
  std::uint64_t size() const override;
  std::uint32_t block_size() const noexcept override { return profile_.block_size; }

  const DeviceProfile& profile() const noexcept { return profile_; }
  RecordCache& cache() noexcept { return cache_; }

  /// Copies contents (not handles or cache) into a fresh device.
  std::unique_ptr<SimDevice> clone(std::optional<DeviceProfile> profile = std::nullopt) const;

  /// Loads or stores the whole byte image.
  void load_image(const std::filesystem::path& path);
  void save_image(const std::filesystem::path& path) const;

 private:
  friend class SimHandle;
  struct State;

  Micros schedule(Micros submit_time, double sampled_us);

  DeviceProfile profile_;
  RecordCache cache_;
  std::unique_ptr<State> state_;
};

/// A real file behind a small thread pool of positional reads.
class FileDevice final : public BlockDevice {
 public:
  FileDevice(const std::filesystem::path& path, std::uint32_t block_size, std::size_t queue_depth = 64,
             std::size_t workers = 4, std::size_t cache_records = 0);
  ~FileDevice() override;

  std::unique_ptr<IoHandle> open_handle(WorkClock& clock) override;
  void read(std::uint64_t offset, std::span<std::byte> out) override;
  void write(std::uint64_t offset, std::span<const std::byte> data) override;
  std::uint64_t size() const override;
  std::uint32_t block_size() const noexcept override { return block_size_; }

 private:
  friend class FileHandle;
  struct Pool;

  int fd_ = -1;
  std::uint32_t block_size_;
  std::size_t queue_depth_;
  RecordCache cache_;
  std::unique_ptr<Pool> pool_;
};

}  // namespace lios::io
