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
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lios/budget.hpp"
#include "lios/clock.hpp"
#include "lios/graph_index.hpp"
#include "lios/io.hpp"
#include "lios/search.hpp"
#include "lios/tuner.hpp"
#include "lios/update_engine.hpp"

namespace lios::bench {

enum class PhaseOrder { kDeleteThenInsert, kInsertThenDelete };
enum class DeviceKind { kSim, kFile };

/// JSON device profile: {"latency": "constant"|"lognormal"|"empirical",
/// "constant_us", "mu", "sigma", "empirical_file", "concurrency_penalty_us",
/// "seed", "queue_depth", "cache_records", "block_size"}; absent keys keep defaults.
io::DeviceProfile load_device_profile(const std::filesystem::path& path);
io::DeviceProfile parse_device_profile(const std::string& json_text, const std::filesystem::path& base_dir = {});

struct WorkloadSpec {
  std::uint32_t search_threads = 4;
  std::uint32_t update_threads = 1;
  double delete_fraction = 0.05;
  double insert_fraction = 0.05;
  std::size_t delete_batch = 0;  // ids per delete op; 0 puts them all in one op
  search::QueryParams query;
  IndexConfig index;
  io::DeviceProfile device;
  DeviceKind device_kind = DeviceKind::kSim;
  std::filesystem::path device_path;  // file device backing store
  budget::BudgetConfig budget;
  tuner::TunerConfig tuner;
  std::uint64_t seed = 1;
  std::size_t query_count = 200;     // held-out queries cycled by every search thread
  std::size_t warmup_queries = 0;    // 0: the tuner's recording length
  std::size_t search_queries = 2000; // length of a pure search run
  PhaseOrder order = PhaseOrder::kDeleteThenInsert;
  bool virtual_time = true;
  bool baseline = false;  // force alpha = 0
  bool paired = true;     // also run the forced-baseline twin and report speedup
  WorkCosts costs = WorkCosts::desk_defaults();
  std::size_t recall_queries = 100;
  double max_virtual_seconds = 600.0;

  /// Zero pins alpha to 0; the tuner keeps its previous positive theta.
  void set_theta(double theta);
  bool has_updates() const noexcept {
    return update_threads > 0 && (delete_fraction > 0 || insert_fraction > 0);
  }
  std::size_t effective_warmup() const noexcept;
  void validate() const;
};

/// Base vectors (indexed), vectors to insert, held-out queries, and the
/// built index image every run starts from.
struct Prepared {
  std::vector<Vector> base;
  std::vector<Vector> inserts;
  std::vector<Vector> queries;
  IndexConfig index_cfg;
  std::unique_ptr<io::SimDevice> image;
  std::unique_ptr<CompressedVectors> compressed;
};

/// Holds out `query_count` vectors from the tail, then splits the rest so
/// that inserts = insert_fraction * base.
Prepared prepare(std::vector<Vector> all, const WorkloadSpec& spec);
/// Same, with the three sets given explicitly.
Prepared prepare(std::vector<Vector> base, std::vector<Vector> inserts, std::vector<Vector> queries,
                 const WorkloadSpec& spec);

struct QueryRecord {
  std::uint32_t phase;
  std::uint32_t thread;
  double start_us;
  double latency_us;
  std::uint32_t hops;
  std::uint32_t ios;
  double stall_us;   // summed per-hop stall
  double window_us;  // summed per-hop I/O window
  std::uint32_t slices;
};

struct PhaseSpan {
  std::string name;
  bool update = false;
  double start_us = 0;
  double end_us = 0;
  std::size_t vectors = 0;
};

struct IdleRecord {
  std::uint32_t batch_size;
  double window_us;
};

struct RunArtifacts {
  std::unique_ptr<io::SimDevice> device;
  std::unique_ptr<GraphIndex> index;
  std::vector<std::vector<VectorId>> before;  // adjacency when updates began
  std::vector<update::CommitRecord> commits;
};

struct RunTrace {
  bool baseline = false;
  std::vector<PhaseSpan> phases;
  std::vector<QueryRecord> queries;
  std::vector<tuner::TraceRow> tuner;
  std::vector<IdleRecord> idle;
  std::vector<update::OpStatus> ops;
  update::EngineCounters counters;
  std::uint64_t tasks_created = 0;
  std::uint64_t tasks_completed = 0;
  std::uint64_t search_failures = 0;
  std::optional<double> recall;
  double wall_seconds = 0;
  bool complete = true;
  std::string error;
  std::optional<RunArtifacts> artifacts;
};

struct RunOptions {
  bool keep_artifacts = false;
  bool record_commits = false;
};

/// One run of the workload. `force_baseline` pins alpha to 0.
RunTrace run_once(const Prepared& prep, const WorkloadSpec& spec, bool force_baseline, RunOptions opts = {});

// ---------------------------------------------------------------------------
// Report

struct Estimate {
  double value = 0;
  double lo = 0;
  double hi = 0;
};

/// Mean with a 1.96 * s / sqrt(n) half-width (sample standard deviation).
Estimate mean_ci(std::span<const double> xs);
/// Nearest-rank quantile with an order-statistic 95% interval.
Estimate quantile_ci(std::span<const double> xs, double p);

struct LatencySummary {
  std::size_t count = 0;
  Estimate mean;
  Estimate p95;
  Estimate p99;
};
std::optional<LatencySummary> summarize(std::span<const double> latencies_us);

struct PhaseReport {
  std::string name;
  bool update = false;
  double duration_us = 0;
  std::size_t vectors = 0;
  std::optional<LatencySummary> latency;
  std::optional<double> qps;
  std::optional<double> update_throughput;  // vectors per second
  std::optional<double> mean_stall_us;
  std::optional<double> idle_ratio;
  // Filled when a paired baseline ran.
  std::optional<double> baseline_duration_us;
  std::optional<LatencySummary> baseline_latency;
  std::optional<double> baseline_mean_stall_us;
  std::optional<double> speedup;
  std::optional<double> latency_degradation;  // mean ratio minus 1
  std::optional<double> stall_inflation;      // mean per-hop stall ratio minus 1
};

struct MetricsReport {
  static constexpr int kSchemaVersion = 1;
  bool virtual_time = true;
  bool complete = true;
  std::string error;
  double theta = 0;
  std::uint32_t search_threads = 0;
  std::uint32_t update_threads = 0;
  std::uint64_t seed = 0;
  std::vector<PhaseReport> phases;
  std::optional<double> recall;
  std::size_t recall_queries = 0;
  std::optional<double> wall_seconds;
  update::EngineCounters counters;
  std::string tuner_trace_file;
  // Companion data, written as CSV.
  std::vector<tuner::TraceRow> tuner_trace;
  std::vector<QueryRecord> samples;
  std::vector<QueryRecord> baseline_samples;
  std::vector<IdleRecord> idle;
};

MetricsReport build_report(const WorkloadSpec& spec, const RunTrace& run, const RunTrace* baseline);

/// Runs the workload (and its baseline twin when requested) and reports.
MetricsReport run_workload(const Prepared& prep, const WorkloadSpec& spec);

std::string report_to_json(const MetricsReport& report);
/// Parses the JSON part back (companion CSV data is not included).
MetricsReport report_from_json(const std::string& text);

/// Writes `path` (JSON) and `<stem>_latency.csv`, `<stem>_tuner.csv`,
/// `<stem>_idle.csv` next to it.
void emit_report(const MetricsReport& report, const std::filesystem::path& path);

}  // namespace lios::bench
