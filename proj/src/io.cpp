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

#include "lios/io.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <fstream>
#include <functional>
#include <queue>
#include <shared_mutex>
#include <sstream>
#include <thread>

namespace lios::io {

void IoHandle::advance_virtual_time(Micros) {
  throw Error(ErrorCode::kInvalidArgument, "advance_virtual_time requires a virtual-time simulated device");
}

namespace {

void check_batch(std::span<const ReadRequest> batch, std::uint32_t block, std::size_t in_flight,
                 std::size_t queue_depth) {
  if (batch.empty()) throw Error(ErrorCode::kInvalidArgument, "empty read batch");
  if (in_flight + batch.size() > queue_depth) {
    throw Error(ErrorCode::kQueueOverflow, std::to_string(in_flight + batch.size()) + " requests exceed queue depth " +
                                               std::to_string(queue_depth));
  }
  for (const auto& r : batch) {
    if (r.offset % block != 0) {
      throw Error(ErrorCode::kInvalidArgument, "read offset " + std::to_string(r.offset) + " not block aligned");
    }
    if (r.length == 0) throw Error(ErrorCode::kInvalidArgument, "zero-length read");
  }
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

// ---------------------------------------------------------------------------
// RecordCache

std::optional<std::vector<std::byte>> RecordCache::lookup(std::uint64_t offset) {
  if (capacity_ == 0) return std::nullopt;
  std::lock_guard lock(mu_);
  auto it = index_.find(offset);
  if (it == index_.end()) return std::nullopt;
  lru_.splice(lru_.begin(), lru_, it->second);
  return it->second->second;
}

void RecordCache::insert(std::uint64_t offset, std::span<const std::byte> payload) {
  if (capacity_ == 0) return;
  std::lock_guard lock(mu_);
  if (auto it = index_.find(offset); it != index_.end()) {
    it->second->second.assign(payload.begin(), payload.end());
    lru_.splice(lru_.begin(), lru_, it->second);
    return;
  }
  lru_.emplace_front(offset, std::vector<std::byte>(payload.begin(), payload.end()));
  index_[offset] = lru_.begin();
  if (lru_.size() > capacity_) {
    index_.erase(lru_.back().first);
    lru_.pop_back();
  }
}

void RecordCache::invalidate(std::uint64_t offset) {
  if (capacity_ == 0) return;
  std::lock_guard lock(mu_);
  if (auto it = index_.find(offset); it != index_.end()) {
    lru_.erase(it->second);
    index_.erase(it);
  }
}

std::size_t RecordCache::size() const {
  std::lock_guard lock(mu_);
  return lru_.size();
}

// ---------------------------------------------------------------------------
// LatencyModel

LatencyModel LatencyModel::constant(double us) {
  if (!(us > 0)) throw Error(ErrorCode::kInvalidArgument, "constant latency must be positive");
  LatencyModel m;
  m.kind = Kind::kConstant;
  m.constant_us = us;
  return m;
}

LatencyModel LatencyModel::lognormal(double mu, double sigma) {
  if (!(sigma >= 0)) throw Error(ErrorCode::kInvalidArgument, "lognormal sigma must be non-negative");
  LatencyModel m;
  m.kind = Kind::kLognormal;
  m.mu = mu;
  m.sigma = sigma;
  return m;
}

LatencyModel LatencyModel::empirical_from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMalformedInput, "cannot open latency sample file " + path.string());
  LatencyModel m;
  m.kind = Kind::kEmpirical;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    double v = 0;
    if (!(ls >> v) || !(v > 0)) {
      throw Error(ErrorCode::kMalformedInput, path.string() + ":" + std::to_string(lineno) + ": expected positive float");
    }
    m.empirical_us.push_back(v);
  }
  if (m.empirical_us.empty()) throw Error(ErrorCode::kMalformedInput, "latency sample file is empty");
  return m;
}

double LatencyModel::sample(std::mt19937_64& rng) const {
  switch (kind) {
    case Kind::kConstant:
      return constant_us;
    case Kind::kLognormal: {
      std::lognormal_distribution<double> dist(mu, sigma);
      return std::max(dist(rng), 1e-3);
    }
    case Kind::kEmpirical: {
      std::uniform_int_distribution<std::size_t> pick(0, empirical_us.size() - 1);
      return empirical_us[pick(rng)];
    }
  }
  return constant_us;
}

// ---------------------------------------------------------------------------
// SimDevice

struct SimDevice::State {
  static constexpr std::size_t kChunk = std::size_t{1} << 20;

  mutable std::shared_mutex storage_mu;
  std::vector<std::unique_ptr<std::byte[]>> chunks;
  std::uint64_t size = 0;

  std::mutex sched_mu;
  std::priority_queue<double, std::vector<double>, std::greater<>> outstanding;
  std::uint64_t handles_opened = 0;

  void grow_locked(std::uint64_t new_size) {
    while (chunks.size() * kChunk < new_size) {
      auto chunk = std::make_unique<std::byte[]>(kChunk);
      std::memset(chunk.get(), 0, kChunk);
      chunks.push_back(std::move(chunk));
    }
    size = std::max(size, new_size);
  }

  void copy_out(std::uint64_t offset, std::span<std::byte> out) const {
    std::size_t done = 0;
    while (done < out.size()) {
      const std::uint64_t pos = offset + done;
      const std::size_t in_chunk = pos % kChunk;
      const std::size_t n = std::min(out.size() - done, kChunk - in_chunk);
      std::memcpy(out.data() + done, chunks[pos / kChunk].get() + in_chunk, n);
      done += n;
    }
  }

  void copy_in(std::uint64_t offset, std::span<const std::byte> data) {
    std::size_t done = 0;
    while (done < data.size()) {
      const std::uint64_t pos = offset + done;
      const std::size_t in_chunk = pos % kChunk;
      const std::size_t n = std::min(data.size() - done, kChunk - in_chunk);
      std::memcpy(chunks[pos / kChunk].get() + in_chunk, data.data() + done, n);
      done += n;
    }
  }
};

class SimHandle final : public IoHandle {
 public:
  SimHandle(SimDevice& dev, WorkClock& clock, std::uint64_t stream)
      : dev_(dev),
        clock_(clock),
        vclock_(dynamic_cast<VirtualWorkClock*>(&clock)),
        rng_(mix_seed(dev.profile().seed, stream)) {}

  BatchHandle submit(std::span<const ReadRequest> batch) override {
    check_batch(batch, dev_.block_size(), in_flight_, dev_.profile().queue_depth);
    const Micros now = clock_.now();
    BatchHandle h{next_batch_++};
    auto& pending = batches_[h.value];
    for (const auto& r : batch) {
      Completion c;
      c.request_id = r.request_id;
      if (auto hit = dev_.cache().lookup(r.offset); hit && hit->size() == r.length) {
        c.payload = std::move(*hit);
        c.service_time = Micros{0};
        pending.push_back(Pending{now, seq_++, r.offset, false, std::move(c)});
      } else {
        c.payload.resize(r.length);
        dev_.read(r.offset, c.payload);
        const Micros due = dev_.schedule(now, dev_.profile().latency.sample(rng_));
        c.service_time = due - now;
        pending.push_back(Pending{due, seq_++, r.offset, true, std::move(c)});
      }
      ++in_flight_;
    }
    return h;
  }

  std::vector<Completion> poll_nonblocking(BatchHandle batch) override { return harvest(batch, clock_.now()); }

  WaitResult wait_blocking(BatchHandle batch) override {
    auto it = find(batch);
    const Micros before = clock_.now();
    Micros earliest = kUnbounded;
    for (const auto& p : it->second) earliest = std::min(earliest, p.due);
    if (earliest > before) clock_.sleep_until(earliest);
    WaitResult out;
    out.completions = harvest(batch, clock_.now());
    out.waited = clock_.now() - before;
    return out;
  }

  void advance_virtual_time(Micros d) override {
    if (vclock_ == nullptr) IoHandle::advance_virtual_time(d);
    if (d < Micros{0}) throw Error(ErrorCode::kInvalidArgument, "cannot advance time backwards");
    vclock_->advance(d);
  }

  std::size_t in_flight() const noexcept override { return in_flight_; }

 private:
  struct Pending {
    Micros due;
    std::uint64_t seq;
    std::uint64_t offset;
    bool from_device;
    Completion completion;
  };

  std::unordered_map<std::uint64_t, std::vector<Pending>>::iterator find(BatchHandle batch) {
    auto it = batches_.find(batch.value);
    if (it == batches_.end()) {
      throw Error(ErrorCode::kStaleHandle, "batch " + std::to_string(batch.value) + " is not open");
    }
    return it;
  }

  std::vector<Completion> harvest(BatchHandle batch, Micros now) {
    auto it = find(batch);
    auto& pending = it->second;
    auto ready_end = std::stable_partition(pending.begin(), pending.end(), [&](const Pending& p) { return p.due <= now; });
    std::sort(pending.begin(), ready_end, [](const Pending& a, const Pending& b) {
      return a.due < b.due || (a.due == b.due && a.seq < b.seq);
    });
    std::vector<Completion> out;
    out.reserve(static_cast<std::size_t>(ready_end - pending.begin()));
    for (auto p = pending.begin(); p != ready_end; ++p) {
      if (p->from_device) dev_.cache().insert(p->offset, p->completion.payload);
      out.push_back(std::move(p->completion));
    }
    pending.erase(pending.begin(), ready_end);
    in_flight_ -= out.size();
    if (pending.empty()) batches_.erase(it);
    return out;
  }

  SimDevice& dev_;
  WorkClock& clock_;
  VirtualWorkClock* vclock_;
  std::mt19937_64 rng_;
  std::unordered_map<std::uint64_t, std::vector<Pending>> batches_;
  std::uint64_t next_batch_ = 1;
  std::uint64_t seq_ = 0;
  std::size_t in_flight_ = 0;
};

SimDevice::SimDevice(DeviceProfile profile)
    : profile_(std::move(profile)), cache_(profile_.cache_records), state_(std::make_unique<State>()) {
  if (profile_.block_size == 0 || (profile_.block_size & (profile_.block_size - 1)) != 0) {
    throw Error(ErrorCode::kInvalidArgument, "block size must be a power of two");
  }
  if (profile_.queue_depth == 0) throw Error(ErrorCode::kInvalidArgument, "queue depth must be positive");
}

SimDevice::~SimDevice() = default;

std::unique_ptr<IoHandle> SimDevice::open_handle(WorkClock& clock) {
  std::uint64_t stream;
  {
    std::lock_guard lock(state_->sched_mu);
    stream = state_->handles_opened++;
  }
  return std::make_unique<SimHandle>(*this, clock, stream);
}

Micros SimDevice::schedule(Micros submit_time, double sampled_us) {
  std::lock_guard lock(state_->sched_mu);
  auto& q = state_->outstanding;
  while (!q.empty() && q.top() <= submit_time.count()) q.pop();
  const double due = submit_time.count() + sampled_us + profile_.concurrency_penalty_us * static_cast<double>(q.size());
  q.push(due);
  return Micros{due};
}

void SimDevice::read(std::uint64_t offset, std::span<std::byte> out) {
  std::shared_lock lock(state_->storage_mu);
  if (offset + out.size() > state_->size) {
    throw Error(ErrorCode::kDeviceError, "read of " + std::to_string(out.size()) + " bytes at " +
                                             std::to_string(offset) + " beyond device end " +
                                             std::to_string(state_->size));
  }
  state_->copy_out(offset, out);
}

void SimDevice::write(std::uint64_t offset, std::span<const std::byte> data) {
  {
    std::unique_lock lock(state_->storage_mu);
    if (offset + data.size() > state_->size) state_->grow_locked(offset + data.size());
  }
  {
    std::shared_lock lock(state_->storage_mu);
    state_->copy_in(offset, data);
  }
  cache_.invalidate(offset);
}

std::uint64_t SimDevice::size() const {
  std::shared_lock lock(state_->storage_mu);
  return state_->size;
}

std::unique_ptr<SimDevice> SimDevice::clone(std::optional<DeviceProfile> profile) const {
  auto copy = std::make_unique<SimDevice>(profile.value_or(profile_));
  std::shared_lock lock(state_->storage_mu);
  copy->state_->grow_locked(state_->size);
  for (std::size_t c = 0; c < state_->chunks.size(); ++c) {
    std::memcpy(copy->state_->chunks[c].get(), state_->chunks[c].get(), State::kChunk);
  }
  return copy;
}

void SimDevice::save_image(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kDeviceError, "cannot open " + path.string());
  std::vector<std::byte> buf(size());
  const_cast<SimDevice*>(this)->read(0, buf);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

void SimDevice::load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kDeviceError, "cannot open " + path.string());
  in.seekg(0, std::ios::end);
  std::vector<std::byte> buf(static_cast<std::size_t>(in.tellg()));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  write(0, buf);
}

// ---------------------------------------------------------------------------
// FileDevice

struct FileBatchState {
  std::vector<Completion> ready;
  std::size_t outstanding = 0;
};

struct FileHandleShared {
  std::mutex mu;
  std::condition_variable cv;
  std::unordered_map<std::uint64_t, FileBatchState> batches;
  std::string error;
};

struct FileDevice::Pool {
  struct Job {
    std::shared_ptr<FileHandleShared> owner;
    std::uint64_t batch;
    ReadRequest request;
    const WorkClock* clock;
    Micros submitted;
  };

  std::mutex mu;
  std::condition_variable cv;
  std::deque<Job> jobs;
  bool stop = false;
  std::vector<std::thread> threads;
};

class FileHandle final : public IoHandle {
 public:
  FileHandle(FileDevice& dev, WorkClock& clock)
      : dev_(dev), clock_(clock), shared_(std::make_shared<FileHandleShared>()) {}

  BatchHandle submit(std::span<const ReadRequest> batch) override {
    check_batch(batch, dev_.block_size(), in_flight_, dev_.queue_depth_);
    BatchHandle h{next_batch_++};
    const Micros now = clock_.now();
    std::vector<FileDevice::Pool::Job> to_queue;
    {
      std::lock_guard lock(shared_->mu);
      auto& state = shared_->batches[h.value];
      for (const auto& r : batch) {
        if (auto hit = dev_.cache_.lookup(r.offset); hit && hit->size() == r.length) {
          state.ready.push_back(Completion{r.request_id, std::move(*hit), Micros{0}});
        } else {
          ++state.outstanding;
          to_queue.push_back({shared_, h.value, r, &clock_, now});
        }
      }
    }
    in_flight_ += batch.size();
    if (!to_queue.empty()) {
      std::lock_guard lock(dev_.pool_->mu);
      for (auto& j : to_queue) dev_.pool_->jobs.push_back(std::move(j));
      dev_.pool_->cv.notify_all();
    }
    return h;
  }

  std::vector<Completion> poll_nonblocking(BatchHandle batch) override {
    std::unique_lock lock(shared_->mu);
    return take(lock, batch);
  }

  WaitResult wait_blocking(BatchHandle batch) override {
    const Micros before = clock_.now();
    std::unique_lock lock(shared_->mu);
    auto it = shared_->batches.find(batch.value);
    if (it == shared_->batches.end()) throw Error(ErrorCode::kStaleHandle, "batch is not open");
    shared_->cv.wait(lock, [&] { return !it->second.ready.empty() || !shared_->error.empty(); });
    WaitResult out;
    out.completions = take(lock, batch);
    out.waited = clock_.now() - before;
    return out;
  }

  std::size_t in_flight() const noexcept override { return in_flight_; }

 private:
  std::vector<Completion> take(std::unique_lock<std::mutex>&, BatchHandle batch) {
    if (!shared_->error.empty()) throw Error(ErrorCode::kDeviceError, shared_->error);
    auto it = shared_->batches.find(batch.value);
    if (it == shared_->batches.end()) throw Error(ErrorCode::kStaleHandle, "batch is not open");
    std::vector<Completion> out = std::move(it->second.ready);
    it->second.ready.clear();
    in_flight_ -= out.size();
    if (it->second.outstanding == 0) shared_->batches.erase(it);
    return out;
  }

  FileDevice& dev_;
  WorkClock& clock_;
  std::shared_ptr<FileHandleShared> shared_;
  std::uint64_t next_batch_ = 1;
  std::size_t in_flight_ = 0;
};

FileDevice::FileDevice(const std::filesystem::path& path, std::uint32_t block_size, std::size_t queue_depth,
                       std::size_t workers, std::size_t cache_records)
    : block_size_(block_size), queue_depth_(queue_depth), cache_(cache_records), pool_(std::make_unique<Pool>()) {
  if (block_size == 0 || (block_size & (block_size - 1)) != 0) {
    throw Error(ErrorCode::kInvalidArgument, "block size must be a power of two");
  }
  fd_ = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
  if (fd_ < 0) throw Error(ErrorCode::kDeviceError, "open " + path.string() + ": " + std::strerror(errno));
  for (std::size_t w = 0; w < std::max<std::size_t>(workers, 1); ++w) {
    pool_->threads.emplace_back([this] {
      for (;;) {
        Pool::Job job;
        {
          std::unique_lock lock(pool_->mu);
          pool_->cv.wait(lock, [&] { return pool_->stop || !pool_->jobs.empty(); });
          if (pool_->stop && pool_->jobs.empty()) return;
          job = std::move(pool_->jobs.front());
          pool_->jobs.pop_front();
        }
        Completion c;
        c.request_id = job.request.request_id;
        c.payload.resize(job.request.length);
        std::string error;
        try {
          read(job.request.offset, c.payload);
          cache_.insert(job.request.offset, c.payload);
        } catch (const Error& e) {
          error = e.what();
        }
        c.service_time = job.clock->now() - job.submitted;
        {
          std::lock_guard lock(job.owner->mu);
          if (!error.empty()) job.owner->error = error;
          auto& state = job.owner->batches[job.batch];
          --state.outstanding;
          state.ready.push_back(std::move(c));
        }
        job.owner->cv.notify_all();
      }
    });
  }
}

FileDevice::~FileDevice() {
  {
    std::lock_guard lock(pool_->mu);
    pool_->stop = true;
  }
  pool_->cv.notify_all();
  for (auto& t : pool_->threads) t.join();
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<IoHandle> FileDevice::open_handle(WorkClock& clock) {
  if (clock.is_virtual()) throw Error(ErrorCode::kInvalidArgument, "file device requires a wall clock");
  return std::make_unique<FileHandle>(*this, clock);
}

void FileDevice::read(std::uint64_t offset, std::span<std::byte> out) {
  std::size_t done = 0;
  while (done < out.size()) {
    const ssize_t n = ::pread(fd_, out.data() + done, out.size() - done, static_cast<off_t>(offset + done));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::kDeviceError, std::string("pread: ") + std::strerror(errno));
    }
    if (n == 0) throw Error(ErrorCode::kDeviceError, "read beyond end of file");
    done += static_cast<std::size_t>(n);
  }
}

void FileDevice::write(std::uint64_t offset, std::span<const std::byte> data) {
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t n = ::pwrite(fd_, data.data() + done, data.size() - done, static_cast<off_t>(offset + done));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::kDeviceError, std::string("pwrite: ") + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
  cache_.invalidate(offset);
}

std::uint64_t FileDevice::size() const {
  struct stat st {};
  if (::fstat(fd_, &st) != 0) throw Error(ErrorCode::kDeviceError, std::string("fstat: ") + std::strerror(errno));
  return static_cast<std::uint64_t>(st.st_size);
}

}  // namespace lios::io
