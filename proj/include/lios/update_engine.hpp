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
#include <deque>
#include <istream>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "lios/budget.hpp"
#include "lios/clock.hpp"
#include "lios/graph_index.hpp"
#include "lios/prune.hpp"
#include "lios/search.hpp"
#include "lios/tuner.hpp"

namespace lios::update {

using OpId = std::uint64_t;

struct InsertOp {
  Vector vector;
};
struct DeleteOp {
  std::vector<VectorId> ids;
};
using UpdateOp = std::variant<InsertOp, DeleteOp>;

/// Newline-delimited ops: "I <components...>" or "D <id> [<id>...]".
/// Blank lines and lines starting with '#' are skipped.
std::vector<UpdateOp> parse_workload(std::istream& in, std::uint32_t dim);

enum class TaskKind { kInsertSelf, kInsertReverseRepair, kDeleteRepair, kDeleteScan };
const char* to_string(TaskKind k) noexcept;

struct UpdateTask {
  TaskKind kind = TaskKind::kInsertSelf;
  OpId op = 0;
  VectorId subject = kInvalidId;  // inserted id, or the vector under repair

  // Present once candidate preparation finished and pruning has not.
  std::optional<prune::PruneTaskState> prune_state;
  // Neighbor list the pool was snapshotted from; the commit requires it unchanged.
  std::vector<VectorId> base_neighbors;

  // Insert: the new vector and the resumable candidate search.
  Vector vector;
  std::shared_ptr<search::BeamSearch> search;

  // Reverse repairs: selected neighbors; pending_pos is the one in progress.
  std::vector<VectorId> pending_vectors;
  std::size_t pending_pos = 0;

  // Delete scan: ids of the op and the next record to visit.
  std::shared_ptr<const std::vector<VectorId>> deleted;
  std::uint64_t scan_cursor = 0;
};

/// Multi-producer multi-consumer FIFO. A popped task is owned by the caller
/// until requeue() or finish().
class TaskQueue {
 public:
  void push(UpdateTask task);
  std::optional<UpdateTask> try_pop();
  /// Returns an owned task to the tail.
  void requeue(UpdateTask task);
  /// Drops ownership of a task that has no work left.
  void finish();

  /// Queued plus in-flight tasks.
  std::size_t pending_count() const;
  std::size_t queued() const;
  std::uint64_t created() const;
  std::uint64_t completed() const;

 private:
  mutable std::mutex mu_;
  std::deque<UpdateTask> tasks_;
  std::size_t in_flight_ = 0;
  std::uint64_t created_ = 0;
  std::uint64_t completed_ = 0;
};

enum class CommitKind { kPrune, kAppend };

/// One persisted neighbor list and everything needed to recompute it.
struct CommitRecord {
  OpId op;
  TaskKind task;
  VectorId subject;
  CommitKind kind;
  std::vector<VectorId> base;                        // the list this commit replaced
  std::shared_ptr<const prune::CandidatePool> pool;  // kPrune
  std::vector<VectorId> list;                        // kAppend: the written list
  std::vector<VectorId> written;
};

struct OpStatus {
  OpId id = 0;
  bool is_insert = true;
  VectorId assigned = kInvalidId;  // inserts only
  std::size_t vectors = 0;
  Micros enqueued{0};
  std::optional<Micros> drained;
  bool failed = false;
  std::string error;
};

struct EngineConfig {
  std::uint32_t insert_beam_width = 4;
  bool record_commits = false;
};

struct SliceResult {
  bool ran = false;
  bool completed = false;  // a per-vector unit finished in this slice
};

struct EngineCounters {
  std::uint64_t slices = 0;
  std::uint64_t yields = 0;
  std::uint64_t commits = 0;
  std::uint64_t restarts = 0;  // commits abandoned because the record changed
  std::uint64_t prune_iterations = 0;
  std::uint64_t failures = 0;
};

class UpdateEngine {
 public:
  explicit UpdateEngine(GraphIndex& index, EngineConfig cfg = {});

  GraphIndex& index() noexcept { return index_; }

  /// Allocates the id, then enqueues one insert_self task.
  OpId decompose_insert(std::span<const float> v, Micros now);
  /// Tombstones `ids` immediately, then enqueues one delete_scan task.
  OpId decompose_delete(std::span<const VectorId> ids, Micros now);
  OpId submit(const UpdateOp& op, Micros now);

  /// Runs the head task for at most `budget` (plus one prune iteration and
  /// one lightweight phase).
  SliceResult run_slice(Micros budget, WorkClock& clock);
  /// Runs slices with an unbounded budget until the queue is empty.
  void drain(WorkClock& clock);

  std::size_t pending_count() const { return queue_.pending_count(); }
  const TaskQueue& queue() const noexcept { return queue_; }

  std::vector<OpStatus> ops() const;
  bool all_ops_complete() const;
  EngineCounters counters() const;
  std::vector<CommitRecord> commits() const;

 private:
  enum class Step { kYield, kVectorDone, kTaskDone };

  Step execute(UpdateTask& task, Micros start, Micros budget, WorkClock& clock);
  Step insert_self(UpdateTask& task, Micros start, Micros budget, WorkClock& clock);
  Step reverse_repair(UpdateTask& task, Micros start, Micros budget, WorkClock& clock);
  Step delete_repair(UpdateTask& task, Micros start, Micros budget, WorkClock& clock);
  Step delete_scan(UpdateTask& task, Micros start, Micros budget, WorkClock& clock);

  /// Runs (or resumes) the prune; nullopt means it yielded.
  std::optional<std::vector<VectorId>> run_prune(UpdateTask& task, Micros start, Micros budget, WorkClock& clock);
  /// Writes `result` to `target` if the record still holds
  /// `task.base_neighbors` and no newly introduced id was deleted meanwhile.
  bool commit(const UpdateTask& task, VectorId target, const std::vector<VectorId>& result, CommitKind kind,
              WorkClock& clock);
  std::shared_ptr<const prune::CandidatePool> pool_for(VectorId target_id, std::span<const float> target,
                                                      std::vector<VectorId> ids, WorkClock& clock);

  void spawn(UpdateTask task);
  void task_finished(OpId op, Micros now);
  void op_failed(OpId op, const std::string& what, Micros now);
  void replace_entry_point(std::span<const VectorId> ids);

  GraphIndex& index_;
  EngineConfig cfg_;
  TaskQueue queue_;

  mutable std::mutex ops_mu_;
  struct OpEntry {
    OpStatus status;
    std::uint64_t outstanding = 0;
  };
  std::vector<OpEntry> ops_;

  mutable std::mutex commit_mu_;
  std::vector<CommitRecord> commits_;

  std::atomic<std::uint64_t> slices_{0};
  std::atomic<std::uint64_t> yields_{0};
  std::atomic<std::uint64_t> commits_count_{0};
  std::atomic<std::uint64_t> restarts_{0};
  std::atomic<std::uint64_t> prune_iterations_{0};
  std::atomic<std::uint64_t> failures_{0};
};

/// Stall hook that runs one update slice per idle window: budget from the
/// per-batch-size table, scaled by the tuner's ratio. In k-sparse mode only
/// every K-th stall of this thread is eligible.
class CoExecHook final : public search::StallHook {
 public:
  CoExecHook(UpdateEngine& engine, budget::BudgetTable& table, tuner::Tuner& tuner);

  bool on_stall(std::uint32_t batch_size, WorkClock& clock) override;
  void on_hop_complete(const search::HopRecord& hop) override;

  void set_enabled(bool enabled) noexcept { enabled_ = enabled; }
  std::uint64_t stalls() const noexcept { return stalls_; }
  std::uint64_t slices() const noexcept { return slices_; }

 private:
  UpdateEngine& engine_;
  budget::BudgetTable& table_;
  tuner::Tuner& tuner_;
  bool enabled_ = true;
  std::uint64_t stalls_ = 0;
  std::uint64_t slices_ = 0;
};

/// Applies every commit in order to `before` after checking that each one
/// replaced the replayed list, and that its written list equals the
/// recomputation from its frozen pool (prune) or the old list plus one id
/// (append). Returns the
/// resulting adjacency, or an error message on the first mismatch.
struct ReplayResult {
  std::vector<std::vector<VectorId>> adjacency;
  std::optional<std::string> mismatch;
};
ReplayResult replay_commits(std::vector<std::vector<VectorId>> before, std::span<const CommitRecord> log,
                            double alpha, std::uint32_t degree_bound);

void write_op_log_csv(std::ostream& out, std::span<const OpStatus> ops);

}  // namespace lios::update
