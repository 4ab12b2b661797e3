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

#include "lios/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "lios/dataset.hpp"

namespace lios::bench {

void WorkloadSpec::set_theta(double theta) {
  budget.theta = theta;
  if (theta > 0) tuner.theta = theta;
}

std::size_t WorkloadSpec::effective_warmup() const noexcept {
  return warmup_queries != 0 ? warmup_queries : std::size_t{tuner.recording_epochs} * tuner.epoch_queries;
}

void WorkloadSpec::validate() const {
  if (search_threads < 1) throw Error(ErrorCode::kInvalidArgument, "need at least one search thread");
  if (delete_fraction < 0 || delete_fraction > 1 || insert_fraction < 0 || insert_fraction > 1) {
    throw Error(ErrorCode::kInvalidArgument, "update fractions must be in [0,1]");
  }
  if (query_count < 1) throw Error(ErrorCode::kInvalidArgument, "need at least one query");
  query.validate();
  budget.validate();
  tuner.validate();
  if (!virtual_time && device_kind == DeviceKind::kFile && device_path.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "file device needs a path");
  }
  if (virtual_time && device_kind == DeviceKind::kFile) {
    throw Error(ErrorCode::kInvalidArgument, "virtual time runs on the simulated device only");
  }
}

// ---------------------------------------------------------------------------
// Preparation

Prepared prepare(std::vector<Vector> all, const WorkloadSpec& spec) {
  if (all.size() <= spec.query_count + 1) {
    throw Error(ErrorCode::kInvalidArgument, "dataset too small for the held-out queries");
  }
  std::vector<Vector> queries(all.end() - static_cast<std::ptrdiff_t>(spec.query_count), all.end());
  all.resize(all.size() - spec.query_count);
  const double insert_fraction = spec.has_updates() ? spec.insert_fraction : 0.0;
  const auto base_n =
      static_cast<std::size_t>(std::llround(static_cast<double>(all.size()) / (1.0 + insert_fraction)));
  std::vector<Vector> inserts(all.begin() + static_cast<std::ptrdiff_t>(base_n), all.end());
  all.resize(base_n);
  return prepare(std::move(all), std::move(inserts), std::move(queries), spec);
}

Prepared prepare(std::vector<Vector> base, std::vector<Vector> inserts, std::vector<Vector> queries,
                 const WorkloadSpec& spec) {
  spec.validate();
  if (base.empty()) throw Error(ErrorCode::kEmptyIndex, "no base vectors");
  Prepared p;
  p.index_cfg = spec.index;
  p.index_cfg.dim = static_cast<std::uint32_t>(base.front().size());
  p.index_cfg.capacity = base.size() + inserts.size();
  p.image = std::make_unique<io::SimDevice>(spec.device);
  auto index = build_index(base, p.index_cfg, *p.image);
  p.compressed = std::make_unique<CompressedVectors>(index->compressed().clone());
  p.base = std::move(base);
  p.inserts = std::move(inserts);
  p.queries = std::move(queries);
  return p;
}

// ---------------------------------------------------------------------------
// Shared run state

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct PlannedPhase {
  std::string name;
  bool update = false;
  std::vector<update::UpdateOp> ops;
  std::size_t vectors = 0;
  std::size_t queries = 0;  // completions that end a search-only phase
};

std::vector<PlannedPhase> plan_phases(const Prepared& prep, const WorkloadSpec& spec) {
  std::vector<PlannedPhase> plan;
  if (!spec.has_updates()) {
    plan.push_back(PlannedPhase{"search", false, {}, 0, spec.search_queries});
    return plan;
  }
  if (spec.effective_warmup() > 0) plan.push_back(PlannedPhase{"warmup", false, {}, 0, spec.effective_warmup()});

  PlannedPhase del{"delete", true, {}, 0, 0};
  const auto n_del = static_cast<std::size_t>(std::llround(spec.delete_fraction * static_cast<double>(prep.base.size())));
  if (n_del > 0) {
    std::vector<VectorId> ids(prep.base.size());
    std::iota(ids.begin(), ids.end(), VectorId{0});
    std::mt19937_64 rng(mix(spec.seed, 0xde1));
    std::shuffle(ids.begin(), ids.end(), rng);
    ids.resize(std::min(n_del, ids.size() - 1));
    std::sort(ids.begin(), ids.end());
    const std::size_t batch = spec.delete_batch == 0 ? ids.size() : spec.delete_batch;
    for (std::size_t i = 0; i < ids.size(); i += batch) {
      const auto end = std::min(ids.size(), i + batch);
      del.ops.emplace_back(update::DeleteOp{{ids.begin() + static_cast<std::ptrdiff_t>(i),
                                             ids.begin() + static_cast<std::ptrdiff_t>(end)}});
    }
    del.vectors = ids.size();
  }
  PlannedPhase ins{"insert", true, {}, 0, 0};
  const auto n_ins = std::min(
      prep.inserts.size(),
      static_cast<std::size_t>(std::llround(spec.insert_fraction * static_cast<double>(prep.base.size()))));
  for (std::size_t i = 0; i < n_ins; ++i) ins.ops.emplace_back(update::InsertOp{prep.inserts[i]});
  ins.vectors = n_ins;

  if (spec.order == PhaseOrder::kDeleteThenInsert) {
    if (del.vectors) plan.push_back(std::move(del));
    if (ins.vectors) plan.push_back(std::move(ins));
  } else {
    if (ins.vectors) plan.push_back(std::move(ins));
    if (del.vectors) plan.push_back(std::move(del));
  }
  return plan;
}

struct Env {
  std::unique_ptr<io::SimDevice> sim;
  std::unique_ptr<io::FileDevice> file;
  io::BlockDevice* device = nullptr;
  std::unique_ptr<GraphIndex> index;
  std::unique_ptr<update::UpdateEngine> engine;
  std::unique_ptr<budget::BudgetTable> table;
  std::unique_ptr<tuner::Tuner> tuner;
};

Env make_env(const Prepared& prep, const WorkloadSpec& spec, bool baseline, const RunOptions& opts) {
  Env env;
  env.sim = prep.image->clone(spec.device);
  env.device = env.sim.get();
  if (spec.device_kind == DeviceKind::kFile) {
    env.sim->save_image(spec.device_path);
    env.file = std::make_unique<io::FileDevice>(spec.device_path, spec.device.block_size, spec.device.queue_depth, 4,
                                                spec.device.cache_records);
    env.device = env.file.get();
  }
  env.index = GraphIndex::open(*env.device, prep.compressed->clone());
  env.engine = std::make_unique<update::UpdateEngine>(*env.index, update::EngineConfig{4, opts.record_commits});
  env.table = std::make_unique<budget::BudgetTable>(spec.budget);
  env.tuner = std::make_unique<tuner::Tuner>(spec.tuner);
  if (baseline || spec.budget.theta == 0) env.tuner->pin_alpha(0.0);
  return env;
}

/// Passes stalls through only while an update phase is running, and logs
/// idle windows.
class GatedHook final : public search::StallHook {
 public:
  GatedHook(update::CoExecHook& inner, const std::atomic<bool>& active, const std::atomic<double>& from,
            std::vector<IdleRecord>& log, std::mutex& log_mu)
      : inner_(inner), active_(active), from_(from), log_(log), log_mu_(log_mu) {}

  bool on_stall(std::uint32_t batch_size, WorkClock& clock) override {
    if (!active_.load(std::memory_order_acquire) || clock.now().count() < from_.load(std::memory_order_acquire)) {
      return false;
    }
    return inner_.on_stall(batch_size, clock);
  }

  void on_hop_complete(const search::HopRecord& hop) override {
    inner_.on_hop_complete(hop);
    if (hop.cache_hits < hop.batch_size) {
      std::lock_guard lock(log_mu_);
      log_.push_back(IdleRecord{hop.batch_size, hop.window.count()});
    }
  }

 private:
  update::CoExecHook& inner_;
  const std::atomic<bool>& active_;
  const std::atomic<double>& from_;
  std::vector<IdleRecord>& log_;
  std::mutex& log_mu_;
};

QueryRecord make_record(std::uint32_t phase, std::uint32_t thread, Micros start, const search::SearchStats& st) {
  QueryRecord r{phase, thread, start.count(), st.latency.count(), st.hops, st.io_count, 0.0, 0.0, st.slices_run};
  for (const auto& h : st.hop_log) {
    r.stall_us += h.stall.count();
    r.window_us += h.window.count();
  }
  return r;
}

/// Infinite shuffled stream of query indices for one search thread.
class QueryStream {
 public:
  QueryStream(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) { reshuffle(); }
  std::size_t next() {
    if (pos_ == order_.size()) reshuffle();
    return order_[pos_++];
  }

 private:
  void reshuffle() {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), rng_);
    pos_ = 0;
  }
  std::vector<std::size_t> order_;
  std::mt19937_64 rng_;
  std::size_t pos_ = 0;
};

// Phase bookkeeping shared by both runners.
class PhaseDriver {
 public:
  PhaseDriver(std::vector<PlannedPhase> plan, Env& env, RunTrace& out, const RunOptions& opts)
      : plan_(std::move(plan)), env_(env), out_(out), opts_(opts) {}

  bool done() const noexcept { return current_ >= plan_.size(); }
  std::uint32_t current() const noexcept { return static_cast<std::uint32_t>(current_); }
  const PlannedPhase& phase() const { return plan_[current_]; }

  std::atomic<bool> updates_active{false};
  std::atomic<double> active_from{0.0};
  std::atomic<std::uint64_t> completed_in_phase{0};

  void begin(Micros t) {
    const PlannedPhase& p = plan_[current_];
    out_.phases.push_back(PhaseSpan{p.name, p.update, t.count(), t.count(), p.vectors});
    completed_in_phase = 0;
    if (!p.update) {
      updates_active = false;
      return;
    }
    if (opts_.keep_artifacts && !captured_) {
      before_ = env_.index->adjacency();
      captured_ = true;
    }
    first_op_ = env_.engine->ops().size();
    for (const auto& op : p.ops) env_.engine->submit(op, t);
    active_from = t.count();
    updates_active = true;
  }

  /// Ends the phase if its completion condition holds; returns the end time.
  std::optional<Micros> check(Micros now) {
    const PlannedPhase& p = plan_[current_];
    if (!p.update) {
      if (completed_in_phase.load() < p.queries) return std::nullopt;
      return finish(now);
    }
    if (env_.engine->pending_count() != 0) return std::nullopt;
    const auto ops = env_.engine->ops();
    Micros end{out_.phases.back().start_us};
    for (std::size_t i = first_op_; i < ops.size(); ++i) {
      if (!ops[i].drained) return std::nullopt;
      end = std::max(end, *ops[i].drained);
    }
    return finish(end);
  }

  std::vector<std::vector<VectorId>> take_before() { return std::move(before_); }

 private:
  Micros finish(Micros end) {
    out_.phases.back().end_us = end.count();
    updates_active = false;
    ++current_;
    return end;
  }

  std::vector<PlannedPhase> plan_;
  Env& env_;
  RunTrace& out_;
  const RunOptions& opts_;
  std::size_t current_ = 0;
  std::size_t first_op_ = 0;
  bool captured_ = false;
  std::vector<std::vector<VectorId>> before_;
};

// ---------------------------------------------------------------------------
// Virtual-time discrete-event runner: every thread is an actor with its own
// clock; the actor furthest behind always moves next (ties by lower id).

void run_virtual(const Prepared& prep, const WorkloadSpec& spec, Env& env, PhaseDriver& driver, RunTrace& out) {
  struct SearchActor {
    explicit SearchActor(const WorkCosts& costs) : clock(costs) {}
    VirtualWorkClock clock;
    std::unique_ptr<io::IoHandle> handle;
    std::unique_ptr<update::CoExecHook> coexec;
    std::unique_ptr<GatedHook> hook;
    std::unique_ptr<search::BeamSearch> current;
    std::optional<QueryStream> stream;
    Micros started{0};
    std::uint32_t phase = 0;
  };
  struct UpdateActor {
    explicit UpdateActor(const WorkCosts& costs) : clock(costs) {}
    VirtualWorkClock clock;
  };

  std::mutex idle_mu;
  std::vector<std::unique_ptr<SearchActor>> searchers;
  for (std::uint32_t t = 0; t < spec.search_threads; ++t) {
    auto a = std::make_unique<SearchActor>(spec.costs);
    a->handle = env.device->open_handle(a->clock);
    a->coexec = std::make_unique<update::CoExecHook>(*env.engine, *env.table, *env.tuner);
    a->hook = std::make_unique<GatedHook>(*a->coexec, driver.updates_active, driver.active_from, out.idle, idle_mu);
    a->stream.emplace(prep.queries.size(), mix(spec.seed, 0x5000 + t));
    searchers.push_back(std::move(a));
  }
  std::vector<std::unique_ptr<UpdateActor>> updaters;
  for (std::uint32_t t = 0; t < spec.update_threads; ++t) updaters.push_back(std::make_unique<UpdateActor>(spec.costs));

  constexpr Micros kIdlePoll{20.0};
  const Micros limit{spec.max_virtual_seconds * 1e6};
  driver.begin(Micros{0});

  while (!driver.done()) {
    std::size_t pick = 0;
    Micros best = Micros{std::numeric_limits<double>::infinity()};
    const std::size_t actors = searchers.size() + updaters.size();
    for (std::size_t k = 0; k < actors; ++k) {
      const Micros t = k < searchers.size() ? searchers[k]->clock.now() : updaters[k - searchers.size()]->clock.now();
      if (t < best) {
        best = t;
        pick = k;
      }
    }
    if (best > limit) {
      out.complete = false;
      out.error = "virtual time limit reached";
      break;
    }

    Micros now;
    if (pick < searchers.size()) {
      SearchActor& a = *searchers[pick];
      if (!a.current) {
        a.phase = driver.current();
        a.started = a.clock.now();
        a.current = std::make_unique<search::BeamSearch>(*env.index, prep.queries[a.stream->next()], spec.query,
                                                         a.clock);
      }
      try {
        a.current->step(a.handle.get(), a.hook.get());
      } catch (const Error&) {
        ++out.search_failures;
        env.tuner->observe_failure();
        a.current.reset();
      }
      if (a.current && a.current->finished()) {
        const auto& st = a.current->stats();
        out.queries.push_back(make_record(a.phase, static_cast<std::uint32_t>(pick), a.started, st));
        env.tuner->observe_query(st.latency);
        if (env.tuner->epoch_ready()) env.tuner->close_epoch();
        if (a.phase == driver.current()) ++driver.completed_in_phase;
        a.current.reset();
      }
      now = a.clock.now();
    } else {
      UpdateActor& a = *updaters[pick - searchers.size()];
      if (!env.engine->run_slice(kUnbounded, a.clock).ran) a.clock.advance(kIdlePoll);
      now = a.clock.now();
    }

    if (auto end = driver.check(now)) {
      if (driver.done()) break;
      driver.begin(*end);
      if (driver.phase().update) {
        for (auto& u : updaters) u->clock.set(std::max(u->clock.now(), *end));
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Wall-time runner: real threads, the calling thread acts as controller.

void run_wall(const Prepared& prep, const WorkloadSpec& spec, Env& env, PhaseDriver& driver, RunTrace& out) {
  SteadyWorkClock control_clock;
  std::atomic<bool> stop{false};
  std::atomic<std::uint32_t> phase{0};
  std::mutex idle_mu;
  std::mutex rec_mu;
  std::atomic<std::uint64_t> failures{0};

  const auto t0 = std::chrono::steady_clock::now();
  driver.begin(control_clock.now());
  std::vector<std::thread> threads;
  for (std::uint32_t t = 0; t < spec.search_threads; ++t) {
    threads.emplace_back([&, t] {
      SteadyWorkClock clock;
      auto handle = env.device->open_handle(clock);
      update::CoExecHook coexec(*env.engine, *env.table, *env.tuner);
      GatedHook hook(coexec, driver.updates_active, driver.active_from, out.idle, idle_mu);
      QueryStream stream(prep.queries.size(), mix(spec.seed, 0x5000 + t));
      std::vector<QueryRecord> local;
      while (!stop.load(std::memory_order_acquire)) {
        const std::uint32_t ph = phase.load();
        const Micros started = clock.now();
        try {
          search::BeamSearch s(*env.index, prep.queries[stream.next()], spec.query, clock);
          s.run(handle.get(), &hook);
          local.push_back(make_record(ph, t, started, s.stats()));
          env.tuner->observe_query(s.stats().latency);
          if (ph == phase.load()) ++driver.completed_in_phase;
        } catch (const Error&) {
          ++failures;
          env.tuner->observe_failure();
        }
      }
      std::lock_guard lock(rec_mu);
      out.queries.insert(out.queries.end(), local.begin(), local.end());
    });
  }
  for (std::uint32_t t = 0; t < spec.update_threads; ++t) {
    threads.emplace_back([&] {
      SteadyWorkClock clock;
      while (!stop.load(std::memory_order_acquire)) {
        if (!env.engine->run_slice(kUnbounded, clock).ran) std::this_thread::sleep_for(std::chrono::microseconds(50));
      }
    });
  }

  const Micros limit{spec.max_virtual_seconds * 1e6};
  while (!driver.done()) {
    std::this_thread::sleep_for(std::chrono::microseconds(200));
    if (env.tuner->epoch_ready()) env.tuner->close_epoch();
    const Micros now = control_clock.now();
    if (now - Micros{out.phases.front().start_us} > limit) {
      out.complete = false;
      out.error = "time limit reached";
      break;
    }
    if (auto end = driver.check(now)) {
      if (driver.done()) break;
      phase = driver.current();
      driver.begin(control_clock.now());
    }
  }
  stop = true;
  for (auto& th : threads) th.join();
  out.search_failures = failures.load();
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::sort(out.queries.begin(), out.queries.end(), [](const QueryRecord& a, const QueryRecord& b) {
    return a.start_us < b.start_us || (a.start_us == b.start_us && a.thread < b.thread);
  });
}

double measure_recall(const Prepared& prep, const WorkloadSpec& spec, const GraphIndex& index,
                      std::span<const update::OpStatus> ops) {
  const std::size_t nq = std::min(spec.recall_queries, prep.queries.size());
  if (nq == 0) return 0.0;
  std::vector<Vector> by_id(index.count());
  std::vector<bool> live(index.count(), false);
  for (std::size_t i = 0; i < prep.base.size(); ++i) by_id[i] = prep.base[i];
  std::size_t next_insert = 0;
  for (const auto& op : ops) {
    if (op.is_insert && op.assigned != kInvalidId) by_id[op.assigned] = prep.inserts[next_insert++];
  }
  for (std::size_t i = 0; i < by_id.size(); ++i) {
    live[i] = !by_id[i].empty() && !index.is_deleted(static_cast<VectorId>(i));
  }
  for (auto& v : by_id) {
    if (v.empty()) v.assign(index.config().dim, 0.0f);
  }
  std::span<const Vector> queries(prep.queries.data(), nq);
  const auto truth = data::ground_truth(by_id, queries, spec.query.k, live);
  std::vector<std::vector<VectorId>> found;
  VirtualWorkClock clock;
  for (const auto& q : queries) {
    search::BeamSearch s(index, q, spec.query, clock);
    const auto res = s.run(nullptr, nullptr);
    std::vector<VectorId> ids;
    for (const auto& n : res.neighbors) ids.push_back(n.id);
    found.push_back(std::move(ids));
  }
  return data::recall_at_k(found, truth, spec.query.k);
}

}  // namespace

RunTrace run_once(const Prepared& prep, const WorkloadSpec& spec, bool force_baseline, RunOptions opts) {
  spec.validate();
  RunTrace out;
  out.baseline = force_baseline || spec.baseline;
  Env env = make_env(prep, spec, out.baseline, opts);
  PhaseDriver driver(plan_phases(prep, spec), env, out, opts);
  try {
    if (spec.virtual_time) {
      run_virtual(prep, spec, env, driver, out);
    } else {
      run_wall(prep, spec, env, driver, out);
    }
  } catch (const std::exception& e) {
    out.complete = false;
    out.error = e.what();
  }
  out.tuner = env.tuner->trace();
  out.ops = env.engine->ops();
  out.counters = env.engine->counters();
  out.tasks_created = env.engine->queue().created();
  out.tasks_completed = env.engine->queue().completed();
  for (const auto& op : out.ops) {
    if (op.failed) {
      out.complete = false;
      if (out.error.empty()) out.error = op.error;
    }
  }
  if (out.complete) out.recall = measure_recall(prep, spec, *env.index, out.ops);
  if (opts.keep_artifacts) {
    RunArtifacts art;
    art.before = driver.take_before();
    art.commits = env.engine->commits();
    art.index = std::move(env.index);
    art.device = std::move(env.sim);
    out.artifacts = std::move(art);
  }
  return out;
}

MetricsReport run_workload(const Prepared& prep, const WorkloadSpec& spec) {
  const RunTrace run = run_once(prep, spec, spec.baseline);
  if (spec.paired && !spec.baseline && spec.has_updates()) {
    const RunTrace base = run_once(prep, spec, true);
    return build_report(spec, run, &base);
  }
  return build_report(spec, run, nullptr);
}

}  // namespace lios::bench
