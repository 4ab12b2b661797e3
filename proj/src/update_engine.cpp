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

#include "lios/update_engine.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace lios::update {

namespace {

bool contains(std::span<const VectorId> ids, VectorId id) {
  return std::find(ids.begin(), ids.end(), id) != ids.end();
}

bool expired(Micros start, Micros budget, const WorkClock& clock) { return clock.now() - start >= budget; }

}  // namespace

const char* to_string(TaskKind k) noexcept {
  switch (k) {
    case TaskKind::kInsertSelf: return "insert_self";
    case TaskKind::kInsertReverseRepair: return "insert_reverse_repair";
    case TaskKind::kDeleteRepair: return "delete_repair";
    case TaskKind::kDeleteScan: return "delete_scan";
  }
  return "?";
}

std::vector<UpdateOp> parse_workload(std::istream& in, std::uint32_t dim) {
  std::vector<UpdateOp> ops;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    const std::string where = "workload line " + std::to_string(lineno);
    if (tag == "I") {
      Vector v;
      float x;
      while (ls >> x) v.push_back(x);
      if (!ls.eof()) throw Error(ErrorCode::kMalformedInput, where + ": bad vector component");
      if (v.size() != dim) throw Error(ErrorCode::kDimensionMismatch, where + ": wrong vector length");
      ops.emplace_back(InsertOp{std::move(v)});
    } else if (tag == "D") {
      std::vector<VectorId> ids;
      long long id;
      while (ls >> id) {
        if (id < 0 || id >= static_cast<long long>(kInvalidId)) throw Error(ErrorCode::kMalformedInput, where + ": bad id");
        ids.push_back(static_cast<VectorId>(id));
      }
      if (!ls.eof() || ids.empty()) throw Error(ErrorCode::kMalformedInput, where + ": bad delete ids");
      ops.emplace_back(DeleteOp{std::move(ids)});
    } else {
      throw Error(ErrorCode::kMalformedInput, where + ": unknown op '" + tag + "'");
    }
  }
  return ops;
}

// ---------------------------------------------------------------------------
// TaskQueue

void TaskQueue::push(UpdateTask task) {
  std::lock_guard lock(mu_);
  ++created_;
  tasks_.push_back(std::move(task));
}

std::optional<UpdateTask> TaskQueue::try_pop() {
  std::lock_guard lock(mu_);
  if (tasks_.empty()) return std::nullopt;
  UpdateTask t = std::move(tasks_.front());
  tasks_.pop_front();
  ++in_flight_;
  return t;
}

void TaskQueue::requeue(UpdateTask task) {
  std::lock_guard lock(mu_);
  --in_flight_;
  tasks_.push_back(std::move(task));
}

void TaskQueue::finish() {
  std::lock_guard lock(mu_);
  --in_flight_;
  ++completed_;
}

std::size_t TaskQueue::pending_count() const {
  std::lock_guard lock(mu_);
  return tasks_.size() + in_flight_;
}

std::size_t TaskQueue::queued() const {
  std::lock_guard lock(mu_);
  return tasks_.size();
}

std::uint64_t TaskQueue::created() const {
  std::lock_guard lock(mu_);
  return created_;
}

std::uint64_t TaskQueue::completed() const {
  std::lock_guard lock(mu_);
  return completed_;
}

// ---------------------------------------------------------------------------
// UpdateEngine

UpdateEngine::UpdateEngine(GraphIndex& index, EngineConfig cfg) : index_(index), cfg_(cfg) {
  if (cfg_.insert_beam_width == 0) throw Error(ErrorCode::kInvalidArgument, "insert beam width must be positive");
}

OpId UpdateEngine::decompose_insert(std::span<const float> v, Micros now) {
  const VectorId id = index_.allocate(v);
  UpdateTask task;
  task.kind = TaskKind::kInsertSelf;
  task.subject = id;
  task.vector.assign(v.begin(), v.end());
  OpId op;
  {
    std::lock_guard lock(ops_mu_);
    op = ops_.size();
    OpEntry e;
    e.status = OpStatus{op, true, id, 1, now, std::nullopt, false, {}};
    e.outstanding = 1;
    ops_.push_back(std::move(e));
  }
  task.op = op;
  queue_.push(std::move(task));
  return op;
}

OpId UpdateEngine::decompose_delete(std::span<const VectorId> ids, Micros now) {
  if (ids.empty()) throw Error(ErrorCode::kInvalidArgument, "delete needs at least one id");
  std::vector<VectorId> sorted(ids.begin(), ids.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw Error(ErrorCode::kInvalidArgument, "duplicate id in delete");
  }
  index_.mark_deleted(sorted);
  replace_entry_point(sorted);

  UpdateTask task;
  task.kind = TaskKind::kDeleteScan;
  task.deleted = std::make_shared<const std::vector<VectorId>>(std::move(sorted));
  OpId op;
  {
    std::lock_guard lock(ops_mu_);
    op = ops_.size();
    OpEntry e;
    e.status = OpStatus{op, false, kInvalidId, ids.size(), now, std::nullopt, false, {}};
    e.outstanding = 1;
    ops_.push_back(std::move(e));
  }
  task.op = op;
  queue_.push(std::move(task));
  return op;
}

OpId UpdateEngine::submit(const UpdateOp& op, Micros now) {
  if (const auto* ins = std::get_if<InsertOp>(&op)) return decompose_insert(ins->vector, now);
  return decompose_delete(std::get<DeleteOp>(op).ids, now);
}

void UpdateEngine::replace_entry_point(std::span<const VectorId> /*ids*/) {
  const VectorId entry = index_.entry_point();
  if (entry == kInvalidId || !index_.is_deleted(entry)) return;
  for (VectorId v : index_.read_node(entry).neighbors) {
    if (!index_.is_deleted(v)) {
      index_.set_entry_point(v);
      return;
    }
  }
  const std::uint64_t n = index_.count();
  for (std::uint64_t v = 0; v < n; ++v) {
    if (!index_.is_deleted(static_cast<VectorId>(v))) {
      index_.set_entry_point(static_cast<VectorId>(v));
      return;
    }
  }
  index_.set_entry_point(kInvalidId);
}

void UpdateEngine::spawn(UpdateTask task) {
  {
    std::lock_guard lock(ops_mu_);
    ++ops_[task.op].outstanding;
  }
  queue_.push(std::move(task));
}

void UpdateEngine::task_finished(OpId op, Micros now) {
  std::lock_guard lock(ops_mu_);
  OpEntry& e = ops_[op];
  if (--e.outstanding == 0) e.status.drained = now;
}

void UpdateEngine::op_failed(OpId op, const std::string& what, Micros now) {
  ++failures_;
  std::lock_guard lock(ops_mu_);
  OpEntry& e = ops_[op];
  if (!e.status.failed) e.status.error = what;
  e.status.failed = true;
  if (--e.outstanding == 0) e.status.drained = now;
}

SliceResult UpdateEngine::run_slice(Micros budget, WorkClock& clock) {
  if (!(budget > Micros{0})) return {};
  auto task = queue_.try_pop();
  if (!task) return {};
  ++slices_;
  const Micros start = clock.now();
  Step step;
  try {
    step = execute(*task, start, budget, clock);
  } catch (const std::exception& e) {
    queue_.finish();
    op_failed(task->op, std::string(to_string(task->kind)) + ": " + e.what(), clock.now());
    return {true, false};
  }
  switch (step) {
    case Step::kYield:
      ++yields_;
      queue_.requeue(std::move(*task));
      return {true, false};
    case Step::kVectorDone:
      queue_.requeue(std::move(*task));
      return {true, true};
    case Step::kTaskDone:
      break;
  }
  const OpId op = task->op;
  queue_.finish();
  task_finished(op, clock.now());
  return {true, true};
}

void UpdateEngine::drain(WorkClock& clock) {
  while (run_slice(kUnbounded, clock).ran) {
  }
}

UpdateEngine::Step UpdateEngine::execute(UpdateTask& task, Micros start, Micros budget, WorkClock& clock) {
  switch (task.kind) {
    case TaskKind::kInsertSelf: return insert_self(task, start, budget, clock);
    case TaskKind::kInsertReverseRepair: return reverse_repair(task, start, budget, clock);
    case TaskKind::kDeleteRepair: return delete_repair(task, start, budget, clock);
    case TaskKind::kDeleteScan: return delete_scan(task, start, budget, clock);
  }
  return Step::kTaskDone;
}

std::optional<std::vector<VectorId>> UpdateEngine::run_prune(UpdateTask& task, Micros start, Micros budget,
                                                              WorkClock& clock) {
  prune::PruneTaskState& st = *task.prune_state;
  if (st.pool->empty()) return std::vector<VectorId>{};
  const Micros remaining = budget - (clock.now() - start);
  if (!(remaining > Micros{0})) return std::nullopt;
  const std::uint64_t before = st.iterations;
  auto outcome = prune::prune_slice(st, remaining, clock);
  prune_iterations_ += st.iterations - before;
  if (std::holds_alternative<prune::Yielded>(outcome)) return std::nullopt;
  return std::get<prune::Completed>(std::move(outcome)).neighbors;
}

bool UpdateEngine::commit(const UpdateTask& task, VectorId target, const std::vector<VectorId>& result,
                          CommitKind kind, WorkClock& clock) {
  clock.charge(Work::kRecordDecode);
  const bool written = index_.update_neighbors(target, [&](const NodeRecord& cur) -> std::optional<std::vector<VectorId>> {
    if (cur.neighbors != task.base_neighbors) return std::nullopt;
    for (VectorId v : result) {
      if (!contains(task.base_neighbors, v) && index_.is_deleted(v)) return std::nullopt;
    }
    if (cfg_.record_commits) {
      CommitRecord rec{task.op, task.kind, target, kind, cur.neighbors, nullptr, {}, result};
      if (kind == CommitKind::kPrune) {
        rec.pool = task.prune_state->pool;
      } else {
        rec.list = result;
      }
      std::lock_guard lock(commit_mu_);
      commits_.push_back(std::move(rec));
    }
    return result;
  });
  if (written) {
    ++commits_count_;
  } else {
    ++restarts_;
  }
  return written;
}

std::shared_ptr<const prune::CandidatePool> UpdateEngine::pool_for(VectorId target_id, std::span<const float> target,
                                                                  std::vector<VectorId> ids, WorkClock& clock) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  ids.erase(std::remove(ids.begin(), ids.end(), target_id), ids.end());
  std::vector<Vector> vectors;
  vectors.reserve(ids.size());
  for (VectorId v : ids) vectors.push_back(index_.read_node(v).vector);
  clock.charge(Work::kRecordDecode, ids.size());
  clock.charge(Work::kDistance, ids.size());
  return std::make_shared<const prune::CandidatePool>(prune::CandidatePool::build(target, ids, vectors));
}

UpdateEngine::Step UpdateEngine::insert_self(UpdateTask& task, Micros start, Micros budget, WorkClock& clock) {
  const IndexConfig& cfg = index_.config();
  if (!task.prune_state) {
    if (index_.entry_point() == kInvalidId) {
      // First live vector: nothing to link to.
      task.base_neighbors.clear();
      task.prune_state = prune::PruneTaskState{std::make_shared<const prune::CandidatePool>(), cfg.alpha_prune,
                                               cfg.degree_bound, std::nullopt, 0};
      if (!commit(task, task.subject, {}, CommitKind::kAppend, clock)) return Step::kYield;
      index_.set_entry_point(task.subject);
      return Step::kTaskDone;
    }
    if (!task.search) {
      const search::QueryParams params{1, std::max(cfg.build_pool, 1u), cfg_.insert_beam_width};
      task.search = std::make_shared<search::BeamSearch>(index_, task.vector, params, clock);
    }
    task.search->rebind(clock);
    while (!task.search->finished()) {
      if (expired(start, budget, clock)) return Step::kYield;
      task.search->step(nullptr, nullptr);
    }
    std::vector<prune::Candidate> cands;
    for (const auto& e : task.search->expanded()) {
      if (e.id != task.subject && !index_.is_deleted(e.id)) cands.push_back(prune::Candidate{e.id, e.distance});
    }
    std::sort(cands.begin(), cands.end(), prune::closer);
    std::vector<float> flat;
    flat.reserve(cands.size() * cfg.dim);
    for (const auto& c : cands) {
      const auto it = std::find_if(task.search->expanded().begin(), task.search->expanded().end(),
                                   [&](const search::ExpandedNode& e) { return e.id == c.id; });
      flat.insert(flat.end(), it->vector.begin(), it->vector.end());
    }
    auto pool = std::make_shared<const prune::CandidatePool>(
        prune::CandidatePool::from_sorted(task.vector, std::move(cands), std::move(flat)));
    task.search.reset();
    task.base_neighbors.clear();
    task.prune_state = prune::PruneTaskState{std::move(pool), cfg.alpha_prune, cfg.degree_bound, std::nullopt, 0};
  }

  auto result = run_prune(task, start, budget, clock);
  if (!result) return Step::kYield;
  if (!commit(task, task.subject, *result, CommitKind::kPrune, clock)) {
    // A chosen neighbor was deleted meanwhile: prune again without it.
    const prune::CandidatePool& old = *task.prune_state->pool;
    std::vector<prune::Candidate> cands;
    std::vector<float> flat;
    for (std::size_t i = 0; i < old.size(); ++i) {
      if (index_.is_deleted(old[i].id)) continue;
      cands.push_back(old[i]);
      flat.insert(flat.end(), old.vector(i).begin(), old.vector(i).end());
    }
    task.prune_state = prune::PruneTaskState{
        std::make_shared<const prune::CandidatePool>(
            prune::CandidatePool::from_sorted(old.target(), std::move(cands), std::move(flat))),
        cfg.alpha_prune, cfg.degree_bound, std::nullopt, 0};
    return Step::kYield;
  }
  task.kind = TaskKind::kInsertReverseRepair;
  task.pending_vectors = std::move(*result);
  task.pending_pos = 0;
  task.prune_state.reset();
  task.vector.clear();
  task.vector.shrink_to_fit();
  return task.pending_vectors.empty() ? Step::kTaskDone : Step::kVectorDone;
}

UpdateEngine::Step UpdateEngine::reverse_repair(UpdateTask& task, Micros start, Micros budget, WorkClock& clock) {
  const IndexConfig& cfg = index_.config();
  const VectorId n = task.pending_vectors[task.pending_pos];
  auto advance = [&] {
    task.prune_state.reset();
    ++task.pending_pos;
    return task.pending_pos >= task.pending_vectors.size() ? Step::kTaskDone : Step::kVectorDone;
  };

  if (!task.prune_state) {
    if (expired(start, budget, clock)) return Step::kYield;
    if (index_.is_deleted(n) || index_.is_deleted(task.subject)) return advance();
    NodeRecord rec = index_.read_node(n);
    clock.charge(Work::kRecordDecode);
    task.base_neighbors = rec.neighbors;
    if (contains(rec.neighbors, task.subject)) return advance();
    if (rec.neighbors.size() < cfg.degree_bound) {
      std::vector<VectorId> list = rec.neighbors;
      list.push_back(task.subject);
      if (!commit(task, n, list, CommitKind::kAppend, clock)) return Step::kYield;
      return advance();
    }
    std::vector<VectorId> ids = rec.neighbors;
    ids.push_back(task.subject);
    task.prune_state = prune::PruneTaskState{pool_for(n, rec.vector, std::move(ids), clock), cfg.alpha_prune,
                                             cfg.degree_bound, std::nullopt, 0};
  }

  auto result = run_prune(task, start, budget, clock);
  if (!result) return Step::kYield;
  if (!commit(task, n, *result, CommitKind::kPrune, clock)) {
    task.prune_state.reset();
    return Step::kYield;
  }
  return advance();
}

UpdateEngine::Step UpdateEngine::delete_repair(UpdateTask& task, Micros start, Micros budget, WorkClock& clock) {
  const IndexConfig& cfg = index_.config();
  const VectorId x = task.subject;
  if (!task.prune_state) {
    if (expired(start, budget, clock)) return Step::kYield;
    if (index_.is_deleted(x)) return Step::kTaskDone;
    NodeRecord rec = index_.read_node(x);
    clock.charge(Work::kRecordDecode);
    std::set<VectorId> cand;
    bool affected = false;
    for (VectorId y : rec.neighbors) {
      if (!index_.is_deleted(y)) {
        cand.insert(y);
        continue;
      }
      affected = true;
      const NodeRecord dead = index_.read_node(y);
      clock.charge(Work::kRecordDecode);
      for (VectorId z : dead.neighbors) {
        if (z != x && !index_.is_deleted(z)) cand.insert(z);
      }
    }
    if (!affected) return Step::kTaskDone;
    task.base_neighbors = rec.neighbors;
    task.prune_state = prune::PruneTaskState{pool_for(x, rec.vector, {cand.begin(), cand.end()}, clock),
                                             cfg.alpha_prune, cfg.degree_bound, std::nullopt, 0};
  }

  auto result = run_prune(task, start, budget, clock);
  if (!result) return Step::kYield;
  if (!commit(task, x, *result, CommitKind::kPrune, clock)) {
    task.prune_state.reset();
    return Step::kYield;
  }
  return Step::kTaskDone;
}

UpdateEngine::Step UpdateEngine::delete_scan(UpdateTask& task, Micros start, Micros budget, WorkClock& clock) {
  const std::vector<VectorId>& ids = *task.deleted;
  const std::uint64_t n = index_.count();
  while (task.scan_cursor < n) {
    if (expired(start, budget, clock)) return Step::kYield;
    const auto x = static_cast<VectorId>(task.scan_cursor++);
    clock.charge(Work::kRecordScan);
    if (index_.is_deleted(x)) continue;
    const NodeRecord rec = index_.read_node(x);
    const bool hit = std::any_of(rec.neighbors.begin(), rec.neighbors.end(),
                                 [&](VectorId v) { return std::binary_search(ids.begin(), ids.end(), v); });
    if (!hit) continue;
    UpdateTask repair;
    repair.kind = TaskKind::kDeleteRepair;
    repair.op = task.op;
    repair.subject = x;
    spawn(std::move(repair));
  }
  return Step::kTaskDone;
}

std::vector<OpStatus> UpdateEngine::ops() const {
  std::lock_guard lock(ops_mu_);
  std::vector<OpStatus> out;
  out.reserve(ops_.size());
  for (const auto& e : ops_) out.push_back(e.status);
  return out;
}

bool UpdateEngine::all_ops_complete() const {
  std::lock_guard lock(ops_mu_);
  return std::all_of(ops_.begin(), ops_.end(), [](const OpEntry& e) { return e.status.drained.has_value(); });
}

EngineCounters UpdateEngine::counters() const {
  return EngineCounters{slices_.load(),   yields_.load(),           commits_count_.load(),
                        restarts_.load(), prune_iterations_.load(), failures_.load()};
}

std::vector<CommitRecord> UpdateEngine::commits() const {
  std::lock_guard lock(commit_mu_);
  return commits_;
}

// ---------------------------------------------------------------------------

CoExecHook::CoExecHook(UpdateEngine& engine, budget::BudgetTable& table, tuner::Tuner& tuner)
    : engine_(engine), table_(table), tuner_(tuner) {}

bool CoExecHook::on_stall(std::uint32_t batch_size, WorkClock& clock) {
  ++stalls_;
  if (!enabled_) return false;
  const budget::BudgetConfig& cfg = table_.config();
  if (cfg.mode == budget::Mode::kKSparse && stalls_ % cfg.k_sparse != 0) return false;
  const auto tau = table_.get_budget(batch_size);
  if (!tau) return false;
  const Micros slice = tuner_.effective_budget(*tau);
  if (!(slice > Micros{0})) return false;
  const bool ran = engine_.run_slice(slice, clock).ran;
  if (ran) ++slices_;
  return ran;
}

void CoExecHook::on_hop_complete(const search::HopRecord& hop) {
  if (hop.cache_hits < hop.batch_size) table_.record_sample(hop.window, hop.batch_size);
}

// ---------------------------------------------------------------------------

ReplayResult replay_commits(std::vector<std::vector<VectorId>> before, std::span<const CommitRecord> log,
                            double alpha, std::uint32_t degree_bound) {
  ReplayResult out;
  for (std::size_t k = 0; k < log.size(); ++k) {
    const CommitRecord& c = log[k];
    if (c.subject >= before.size()) before.resize(c.subject + 1);
    auto fail = [&](const char* why) {
      out.mismatch = "commit " + std::to_string(k) + " (" + to_string(c.task) + " of " + std::to_string(c.subject) +
                     "): " + why;
    };
    if (before[c.subject] != c.base) {
      fail("replaced list differs from the replayed graph");
      break;
    }
    std::vector<VectorId> expected;
    if (c.kind == CommitKind::kPrune) {
      expected = prune::prune_monolithic(*c.pool, alpha, degree_bound);
    } else {
      expected = c.list;
      const bool one_more = c.list.size() == c.base.size() + 1 &&
                            std::equal(c.base.begin(), c.base.end(), c.list.begin());
      if (!one_more && !(c.base.empty() && c.list.empty())) {
        fail("append is not the old list plus one id");
        break;
      }
    }
    if (expected != c.written || c.written.size() > degree_bound) {
      fail("written list differs from its recomputation");
      break;
    }
    before[c.subject] = std::move(expected);
  }
  out.adjacency = std::move(before);
  return out;
}

void write_op_log_csv(std::ostream& out, std::span<const OpStatus> ops) {
  out << "op_id,kind,vectors,enqueue_us,drain_us,failed\n";
  for (const auto& s : ops) {
    out << s.id << ',' << (s.is_insert ? "insert" : "delete") << ',' << s.vectors << ',' << s.enqueued.count() << ',';
    if (s.drained) out << s.drained->count();
    out << ',' << (s.failed ? 1 : 0) << '\n';
  }
}

}  // namespace lios::update
