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

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "lios/bench.hpp"
#include "lios/dataset.hpp"

namespace {

using namespace lios;

struct CommonArgs {
  std::string dataset;
  std::string synthetic;
  std::size_t limit = 0;
  std::uint64_t seed = 1;
  std::string device = "sim";
  std::string device_profile;
  std::uint32_t R = 16;
  std::uint32_t L = 100;
  std::uint32_t L_build = 32;
  std::uint32_t W = 4;
  std::uint32_t K = 10;
  double alpha = 1.2;
};

data::DatasetSpec dataset_spec(const CommonArgs& a) {
  if (!a.synthetic.empty()) return data::DatasetSpec::parse_synthetic(a.synthetic, a.seed);
  if (a.dataset.empty()) throw Error(ErrorCode::kInvalidArgument, "give --dataset or --synthetic");
  data::DatasetSpec s;
  const std::string ext = std::filesystem::path(a.dataset).extension().string();
  s.source = ext == ".bvecs" ? data::DatasetSpec::Source::kBvecs : data::DatasetSpec::Source::kFvecs;
  s.path = a.dataset;
  s.limit = a.limit;
  return s;
}

io::DeviceProfile device_profile(const CommonArgs& a) {
  io::DeviceProfile p = a.device_profile.empty() ? io::DeviceProfile{} : bench::load_device_profile(a.device_profile);
  p.seed = p.seed == 1 ? a.seed : p.seed;
  return p;
}

IndexConfig index_config(const CommonArgs& a) {
  IndexConfig cfg;
  cfg.degree_bound = a.R;
  cfg.build_pool = a.L_build;
  cfg.alpha_prune = a.alpha;
  return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--dataset", a.dataset, "fvecs or bvecs file");
  cmd->add_option("--synthetic", a.synthetic, "n,dim,clusters Gaussian mixture");
  cmd->add_option("--limit", a.limit, "use only the first N vectors of --dataset");
  cmd->add_option("--seed", a.seed, "seed for data, queries and the device");
  cmd->add_option("--device", a.device, "sim or file")->check(CLI::IsMember({"sim", "file"}));
  cmd->add_option("--device-profile", a.device_profile, "JSON latency profile for the simulated device");
  cmd->add_option("--R", a.R, "degree bound");
  cmd->add_option("--L", a.L, "search pool size");
  cmd->add_option("--L-build", a.L_build, "build pool size");
  cmd->add_option("--W", a.W, "beam width");
  cmd->add_option("--K", a.K, "neighbors per query");
  cmd->add_option("--alpha", a.alpha, "pruning alpha");
}

int cmd_build(const CommonArgs& a, const std::string& out) {
  const auto vectors = data::load_vectors(dataset_spec(a));
  if (vectors.empty()) throw Error(ErrorCode::kEmptyIndex, "dataset is empty");
  io::SimDevice device(device_profile(a));
  auto index = build_index(vectors, index_config(a), device);
  device.save_image(out);
  index->compressed().save(out + ".cvq");
  std::cout << "built " << index->count() << " vectors, dim " << index->config().dim << ", R "
            << index->config().degree_bound << " -> " << out << '\n';
  return 0;
}

int cmd_search(const CommonArgs& a, const std::string& index_path, const std::string& queries_path,
               const std::string& out_path) {
  std::unique_ptr<io::BlockDevice> device;
  if (a.device == "file") {
    device = std::make_unique<io::FileDevice>(index_path, device_profile(a).block_size);
  } else {
    auto sim = std::make_unique<io::SimDevice>(device_profile(a));
    sim->load_image(index_path);
    device = std::move(sim);
  }
  auto index = GraphIndex::open(*device, CompressedVectors::load(index_path + ".cvq"));
  const auto queries = data::read_fvecs(queries_path);
  search::QueryParams params{a.K, a.L, a.W};
  params.validate();

  std::unique_ptr<WorkClock> clock;
  if (a.device == "file") {
    clock = std::make_unique<SteadyWorkClock>();
  } else {
    clock = std::make_unique<VirtualWorkClock>(WorkCosts::desk_defaults());
  }
  auto handle = device->open_handle(*clock);
  std::vector<std::vector<VectorId>> found;
  double latency = 0;
  std::uint64_t ios = 0;
  for (const auto& q : queries) {
    const auto res = search::beam_search(*index, q, params, *handle, *clock);
    std::vector<VectorId> ids;
    for (const auto& n : res.neighbors) ids.push_back(n.id);
    found.push_back(std::move(ids));
    latency += res.stats.latency.count();
    ios += res.stats.io_count;
  }

  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) throw Error(ErrorCode::kDeviceError, "cannot write " + out_path);
    out = &file;
  }
  for (std::size_t i = 0; i < found.size(); ++i) {
    *out << i;
    for (VectorId id : found[i]) *out << ',' << id;
    *out << '\n';
  }
  const double n = static_cast<double>(std::max<std::size_t>(queries.size(), 1));
  std::cerr << queries.size() << " queries, mean latency " << latency / n << " us, mean I/Os "
            << static_cast<double>(ios) / n << '\n';
  if (!a.dataset.empty() || !a.synthetic.empty()) {
    const auto base = data::load_vectors(dataset_spec(a));
    const auto truth = data::ground_truth(base, queries, a.K);
    std::cerr << "recall@" << a.K << " " << data::recall_at_k(found, truth, a.K) << '\n';
  }
  return 0;
}

struct BenchArgs {
  double theta = 0.05;
  std::uint32_t search_threads = 4;
  std::uint32_t update_threads = 1;
  double delete_fraction = 0.05;
  double insert_fraction = 0.05;
  std::string mode = "per-batch";
  std::uint32_t k_sparse = 8;
  std::string report = "report.json";
  std::string device_path;
  std::string order = "delete-insert";
  std::size_t queries = 200;
  std::size_t warmup = 0;
  bool baseline = false;
  bool virtual_time = false;
  bool no_pair = false;
};

int cmd_bench(const CommonArgs& a, const BenchArgs& b) {
  bench::WorkloadSpec spec;
  spec.search_threads = b.search_threads;
  spec.update_threads = b.update_threads;
  spec.delete_fraction = b.delete_fraction;
  spec.insert_fraction = b.insert_fraction;
  spec.query = search::QueryParams{a.K, a.L, a.W};
  spec.index = index_config(a);
  spec.device = device_profile(a);
  spec.device_kind = a.device == "file" ? bench::DeviceKind::kFile : bench::DeviceKind::kSim;
  spec.device_path = b.device_path.empty() ? b.report + ".img" : b.device_path;
  spec.set_theta(b.theta);
  spec.budget.mode = b.mode == "k-sparse" ? budget::Mode::kKSparse : budget::Mode::kPerBatch;
  spec.budget.k_sparse = b.k_sparse;
  if (spec.budget.mode == budget::Mode::kKSparse) spec.budget.min_samples = std::max<std::size_t>(spec.budget.min_samples, b.k_sparse);
  spec.seed = a.seed;
  spec.query_count = b.queries;
  spec.warmup_queries = b.warmup;
  spec.order = b.order == "insert-delete" ? bench::PhaseOrder::kInsertThenDelete : bench::PhaseOrder::kDeleteThenInsert;
  spec.virtual_time = b.virtual_time;
  spec.baseline = b.baseline;
  spec.paired = !b.no_pair;
  spec.validate();

  auto prep = bench::prepare(data::load_vectors(dataset_spec(a)), spec);
  const auto report = bench::run_workload(prep, spec);
  bench::emit_report(report, b.report);

  for (const auto& p : report.phases) {
    std::cout << p.name << ": " << p.duration_us / 1000.0 << " ms";
    if (p.latency) std::cout << ", mean latency " << p.latency->mean.value << " us (n=" << p.latency->count << ")";
    if (p.speedup) std::cout << ", speedup " << *p.speedup;
    if (p.latency_degradation) std::cout << ", degradation " << *p.latency_degradation * 100 << "%";
    std::cout << '\n';
  }
  if (report.recall) std::cout << "recall@" << a.K << " " << *report.recall << '\n';
  if (!report.complete) {
    std::cerr << "incomplete run: " << report.error << '\n';
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Disk-resident graph index with update work run inside search I/O stalls"};
  app.require_subcommand(1);

  CommonArgs build_args;
  std::string build_out = "index.lios";
  auto* build = app.add_subcommand("build", "build an index image from a dataset");
  add_common(build, build_args);
  build->add_option("--out", build_out, "index image path (compressed vectors go to <out>.cvq)");

  CommonArgs search_args;
  std::string index_path;
  std::string queries_path;
  std::string search_out;
  auto* search = app.add_subcommand("search", "query an index image");
  add_common(search, search_args);
  search->add_option("--index", index_path, "index image")->required();
  search->add_option("--queries", queries_path, "fvecs query file")->required();
  search->add_option("--out", search_out, "write result ids here instead of stdout");

  CommonArgs bench_common;
  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "paired co-execution benchmark");
  add_common(bench, bench_common);
  bench->add_option("--theta", bench_args.theta, "latency overrun bound");
  bench->add_option("--search-threads", bench_args.search_threads);
  bench->add_option("--update-threads", bench_args.update_threads);
  bench->add_option("--delete-fraction", bench_args.delete_fraction);
  bench->add_option("--insert-fraction", bench_args.insert_fraction);
  bench->add_option("--mode", bench_args.mode)->check(CLI::IsMember({"per-batch", "k-sparse"}));
  bench->add_option("--k-sparse", bench_args.k_sparse, "K for k-sparse mode");
  bench->add_option("--phase-order", bench_args.order)->check(CLI::IsMember({"delete-insert", "insert-delete"}));
  bench->add_option("--queries", bench_args.queries, "held-out query count");
  bench->add_option("--warmup", bench_args.warmup, "pure-search queries before updates (0: tuner recording length)");
  bench->add_option("--report", bench_args.report, "JSON report path");
  bench->add_option("--device-path", bench_args.device_path, "backing file for --device file");
  bench->add_flag("--baseline", bench_args.baseline, "force alpha = 0");
  bench->add_flag("--virtual-time", bench_args.virtual_time, "discrete-event run on the simulator clock");
  bench->add_flag("--no-pair", bench_args.no_pair, "skip the paired baseline run");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*build) return cmd_build(build_args, build_out);
    if (*search) return cmd_search(search_args, index_path, queries_path, search_out);
    if (*bench) return cmd_bench(bench_common, bench_args);
  } catch (const lios::Error& e) {
    std::cerr << "error (" << lios::to_string(e.code()) << "): " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
