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

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "lios/bench.hpp"

namespace lios::bench {

using nlohmann::json;

namespace {

constexpr double kZ = 1.96;

}  // namespace

Estimate mean_ci(std::span<const double> xs) {
  if (xs.empty()) return {};
  const double n = static_cast<double>(xs.size());
  double sum = 0;
  for (double x : xs) sum += x;
  const double mean = sum / n;
  if (xs.size() < 2) return {mean, mean, mean};
  double ss = 0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double half = kZ * std::sqrt(ss / (n - 1)) / std::sqrt(n);
  return {mean, mean - half, mean + half};
}

Estimate quantile_ci(std::span<const double> xs, double p) {
  if (xs.empty()) return {};
  std::vector<double> s(xs.begin(), xs.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  auto at_rank = [&](double rank) {
    const auto r = static_cast<std::size_t>(std::clamp(rank, 1.0, n));
    return s[r - 1];
  };
  const double half = kZ * std::sqrt(n * p * (1 - p));
  return {at_rank(std::ceil(p * n)), at_rank(std::floor(n * p - half)), at_rank(std::ceil(n * p + half))};
}

std::optional<LatencySummary> summarize(std::span<const double> latencies_us) {
  if (latencies_us.empty()) return std::nullopt;
  return LatencySummary{latencies_us.size(), mean_ci(latencies_us), quantile_ci(latencies_us, 0.95),
                        quantile_ci(latencies_us, 0.99)};
}

namespace {

struct PhaseStats {
  std::vector<double> latencies;
  double stall = 0;
  double latency_sum = 0;
  std::uint64_t hops = 0;
};

PhaseStats collect(const RunTrace& run, std::uint32_t phase) {
  PhaseStats s;
  for (const auto& q : run.queries) {
    if (q.phase != phase) continue;
    s.latencies.push_back(q.latency_us);
    s.stall += q.stall_us;
    s.latency_sum += q.latency_us;
    s.hops += q.hops;
  }
  return s;
}

}  // namespace

MetricsReport build_report(const WorkloadSpec& spec, const RunTrace& run, const RunTrace* baseline) {
  MetricsReport r;
  r.virtual_time = spec.virtual_time;
  r.complete = run.complete && (baseline == nullptr || baseline->complete);
  r.error = !run.error.empty() ? run.error : (baseline ? baseline->error : "");
  r.theta = spec.budget.theta;
  r.search_threads = spec.search_threads;
  r.update_threads = spec.update_threads;
  r.seed = spec.seed;
  r.recall = run.recall;
  r.recall_queries = std::min(spec.recall_queries, spec.query_count);
  if (!spec.virtual_time) r.wall_seconds = run.wall_seconds;
  r.counters = run.counters;
  r.tuner_trace = run.tuner;
  r.samples = run.queries;
  if (baseline) r.baseline_samples = baseline->queries;
  r.idle = run.idle;

  for (std::size_t i = 0; i < run.phases.size(); ++i) {
    const PhaseSpan& span = run.phases[i];
    PhaseReport p;
    p.name = span.name;
    p.update = span.update;
    p.duration_us = span.end_us - span.start_us;
    p.vectors = span.vectors;
    const PhaseStats s = collect(run, static_cast<std::uint32_t>(i));
    p.latency = summarize(s.latencies);
    if (p.duration_us > 0 && !s.latencies.empty()) {
      p.qps = static_cast<double>(s.latencies.size()) / (p.duration_us * 1e-6);
    }
    if (span.update && p.duration_us > 0) p.update_throughput = static_cast<double>(span.vectors) / (p.duration_us * 1e-6);
    if (s.hops > 0) p.mean_stall_us = s.stall / static_cast<double>(s.hops);
    if (s.latency_sum > 0) p.idle_ratio = std::clamp(s.stall / s.latency_sum, 0.0, 1.0);

    if (baseline && i < baseline->phases.size() && baseline->phases[i].name == span.name) {
      const PhaseSpan& bspan = baseline->phases[i];
      const PhaseStats b = collect(*baseline, static_cast<std::uint32_t>(i));
      p.baseline_duration_us = bspan.end_us - bspan.start_us;
      p.baseline_latency = summarize(b.latencies);
      if (b.hops > 0) p.baseline_mean_stall_us = b.stall / static_cast<double>(b.hops);
      if (span.update && p.duration_us > 0) p.speedup = *p.baseline_duration_us / p.duration_us;
      if (p.latency && p.baseline_latency && p.baseline_latency->mean.value > 0) {
        p.latency_degradation = p.latency->mean.value / p.baseline_latency->mean.value - 1.0;
      }
      if (p.mean_stall_us && p.baseline_mean_stall_us && *p.baseline_mean_stall_us > 0) {
        p.stall_inflation = *p.mean_stall_us / *p.baseline_mean_stall_us - 1.0;
      }
    }
    r.phases.push_back(std::move(p));
  }
  return r;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

template <typename T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> get_opt(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

json to_json(const Estimate& e) { return json{{"value", e.value}, {"ci_low", e.lo}, {"ci_high", e.hi}}; }
Estimate estimate_from(const json& j) {
  return {j.at("value").get<double>(), j.at("ci_low").get<double>(), j.at("ci_high").get<double>()};
}

json to_json(const std::optional<LatencySummary>& s) {
  if (!s) return nullptr;
  return json{{"count", s->count}, {"mean_us", to_json(s->mean)}, {"p95_us", to_json(s->p95)}, {"p99_us", to_json(s->p99)}};
}

std::optional<LatencySummary> summary_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  const json& s = j.at(key);
  return LatencySummary{s.at("count").get<std::size_t>(), estimate_from(s.at("mean_us")), estimate_from(s.at("p95_us")),
                        estimate_from(s.at("p99_us"))};
}

}  // namespace

std::string report_to_json(const MetricsReport& r) {
  json phases = json::array();
  for (const auto& p : r.phases) {
    phases.push_back(json{
        {"name", p.name},
        {"update", p.update},
        {"duration_us", p.duration_us},
        {"vectors", p.vectors},
        {"latency", to_json(p.latency)},
        {"qps", opt(p.qps)},
        {"update_throughput", opt(p.update_throughput)},
        {"mean_stall_us", opt(p.mean_stall_us)},
        {"idle_ratio", opt(p.idle_ratio)},
        {"baseline_duration_us", opt(p.baseline_duration_us)},
        {"baseline_latency", to_json(p.baseline_latency)},
        {"baseline_mean_stall_us", opt(p.baseline_mean_stall_us)},
        {"speedup", opt(p.speedup)},
        {"latency_degradation", opt(p.latency_degradation)},
        {"stall_inflation", opt(p.stall_inflation)},
    });
  }
  json doc{
      {"schema_version", MetricsReport::kSchemaVersion},
      {"virtual_time", r.virtual_time},
      {"complete", r.complete},
      {"error", r.error},
      {"theta", r.theta},
      {"search_threads", r.search_threads},
      {"update_threads", r.update_threads},
      {"seed", r.seed},
      {"phases", phases},
      {"recall", opt(r.recall)},
      {"recall_queries", r.recall_queries},
      {"counters",
       {{"slices", r.counters.slices},
        {"yields", r.counters.yields},
        {"commits", r.counters.commits},
        {"restarts", r.counters.restarts},
        {"prune_iterations", r.counters.prune_iterations},
        {"failures", r.counters.failures}}},
      {"tuner_trace", r.tuner_trace_file},
  };
  if (r.wall_seconds) doc["wall_seconds"] = *r.wall_seconds;
  return doc.dump(2);
}

MetricsReport report_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedInput, std::string("report: ") + e.what());
  }
  try {
    if (doc.at("schema_version").get<int>() != MetricsReport::kSchemaVersion) {
      throw Error(ErrorCode::kMalformedInput, "report: unsupported schema version");
    }
    MetricsReport r;
    r.virtual_time = doc.at("virtual_time").get<bool>();
    r.complete = doc.at("complete").get<bool>();
    r.error = doc.at("error").get<std::string>();
    r.theta = doc.at("theta").get<double>();
    r.search_threads = doc.at("search_threads").get<std::uint32_t>();
    r.update_threads = doc.at("update_threads").get<std::uint32_t>();
    r.seed = doc.at("seed").get<std::uint64_t>();
    r.recall = get_opt<double>(doc, "recall");
    r.recall_queries = doc.at("recall_queries").get<std::size_t>();
    r.wall_seconds = get_opt<double>(doc, "wall_seconds");
    r.tuner_trace_file = doc.at("tuner_trace").get<std::string>();
    const json& c = doc.at("counters");
    r.counters = update::EngineCounters{c.at("slices").get<std::uint64_t>(),  c.at("yields").get<std::uint64_t>(),
                                        c.at("commits").get<std::uint64_t>(), c.at("restarts").get<std::uint64_t>(),
                                        c.at("prune_iterations").get<std::uint64_t>(),
                                        c.at("failures").get<std::uint64_t>()};
    for (const json& j : doc.at("phases")) {
      PhaseReport p;
      p.name = j.at("name").get<std::string>();
      p.update = j.at("update").get<bool>();
      p.duration_us = j.at("duration_us").get<double>();
      p.vectors = j.at("vectors").get<std::size_t>();
      p.latency = summary_from(j, "latency");
      p.qps = get_opt<double>(j, "qps");
      p.update_throughput = get_opt<double>(j, "update_throughput");
      p.mean_stall_us = get_opt<double>(j, "mean_stall_us");
      p.idle_ratio = get_opt<double>(j, "idle_ratio");
      p.baseline_duration_us = get_opt<double>(j, "baseline_duration_us");
      p.baseline_latency = summary_from(j, "baseline_latency");
      p.baseline_mean_stall_us = get_opt<double>(j, "baseline_mean_stall_us");
      p.speedup = get_opt<double>(j, "speedup");
      p.latency_degradation = get_opt<double>(j, "latency_degradation");
      p.stall_inflation = get_opt<double>(j, "stall_inflation");
      r.phases.push_back(std::move(p));
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedInput, std::string("report: ") + e.what());
  }
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kDeviceError, "cannot write " + path.string());
  out.precision(10);
  return out;
}

void write_samples(std::ostream& out, const char* run, std::span<const QueryRecord> rows) {
  for (const auto& q : rows) {
    out << run << ',' << q.phase << ',' << q.thread << ',' << q.start_us << ',' << q.latency_us << ',' << q.hops << ','
        << q.ios << ',' << q.stall_us << ',' << q.window_us << ',' << q.slices << '\n';
  }
}

}  // namespace

void emit_report(const MetricsReport& report, const std::filesystem::path& path) {
  const auto dir = path.parent_path();
  if (!dir.empty()) std::filesystem::create_directories(dir);
  const std::string stem = path.stem().string();
  const auto sibling = [&](const std::string& suffix) { return dir / (stem + suffix); };

  MetricsReport copy = report;
  copy.tuner_trace_file = sibling("_tuner.csv").filename().string();
  {
    auto out = open_out(path);
    out << report_to_json(copy) << '\n';
  }
  {
    auto out = open_out(sibling("_latency.csv"));
    out << "run,phase,thread,start_us,latency_us,hops,ios,stall_us,window_us,slices\n";
    write_samples(out, "coexec", report.samples);
    write_samples(out, "baseline", report.baseline_samples);
  }
  {
    auto out = open_out(sibling("_tuner.csv"));
    tuner::write_trace_csv(out, report.tuner_trace);
  }
  {
    auto out = open_out(sibling("_idle.csv"));
    out << "batch_size,window_us\n";
    for (const auto& i : report.idle) out << i.batch_size << ',' << i.window_us << '\n';
  }
}

}  // namespace lios::bench
