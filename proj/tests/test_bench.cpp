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


#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

#include "lios/bench.hpp"
#include "lios/dataset.hpp"
#include "lios/distance.hpp"
#include "support.hpp"

namespace {

using namespace lios;

std::vector<std::byte> fvecs_bytes(const std::vector<std::vector<float>>& rows) {
  std::vector<std::byte> out;
  auto put = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const std::byte*>(p);
    out.insert(out.end(), b, b + n);
  };
  for (const auto& r : rows) {
    const auto d = static_cast<std::uint32_t>(r.size());
    put(&d, 4);
    put(r.data(), r.size() * 4);
  }
  return out;
}

std::filesystem::path temp_path(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

}  // namespace

TEST_CASE("fvecs parsing") {
  auto one = data::parse_fvecs(fvecs_bytes({{1.0f, 2.0f}}));
  REQUIRE(one.size() == 1);
  CHECK(one[0] == Vector{1.0f, 2.0f});

  auto bytes = fvecs_bytes({{1, 2, 3}, {4, 5, 6}});
  CHECK(data::parse_fvecs(bytes, 1).size() == 1);
  auto truncated = bytes;
  truncated.resize(truncated.size() - 2);
  CHECK_THROWS_AS(data::parse_fvecs(truncated), Error);
  truncated.resize(4 + 12 + 2);
  CHECK_THROWS_AS(data::parse_fvecs(truncated), Error);
  CHECK_THROWS_AS(data::parse_fvecs(fvecs_bytes({{1, 2}, {1, 2, 3}})), Error);
  CHECK_THROWS_AS(data::parse_fvecs(fvecs_bytes({{}})), Error);
}

TEST_CASE("bvecs parsing promotes bytes") {
  std::vector<std::byte> raw;
  const std::uint32_t d = 3;
  raw.resize(4);
  std::memcpy(raw.data(), &d, 4);
  raw.push_back(std::byte{0});
  raw.push_back(std::byte{7});
  raw.push_back(std::byte{255});
  auto v = data::parse_bvecs(raw);
  REQUIRE(v.size() == 1);
  CHECK(v[0] == Vector{0.0f, 7.0f, 255.0f});
}

TEST_CASE("fvecs file round trip") {
  auto data = testing::uniform_vectors(30, 5, 41);
  const auto path = temp_path("lios_roundtrip.fvecs");
  data::write_fvecs(path, data);
  CHECK(data::read_fvecs(path) == data);
  CHECK(data::read_fvecs(path, 7).size() == 7);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(data::read_fvecs(path), Error);
}

TEST_CASE("synthetic data is seeded") {
  auto a = data::load_vectors(data::DatasetSpec::synthetic(1000, 16, 8, 5));
  auto b = data::load_vectors(data::DatasetSpec::synthetic(1000, 16, 8, 5));
  auto c = data::load_vectors(data::DatasetSpec::synthetic(1000, 16, 8, 6));
  CHECK(a == b);
  CHECK(a != c);
  CHECK(a.size() == 1000);
  CHECK(a[0].size() == 16);
  auto spec = data::DatasetSpec::parse_synthetic("200,4,2", 9);
  CHECK(spec.n == 200);
  CHECK(spec.dim == 4);
  CHECK(spec.clusters == 2);
  CHECK_THROWS_AS(data::DatasetSpec::parse_synthetic("200,4", 9), Error);
  CHECK_THROWS_AS(data::DatasetSpec::parse_synthetic("200,4,2,1", 9), Error);
}

TEST_CASE("ground truth") {
  auto base = testing::uniform_vectors(1000, 6, 42);
  auto q = testing::uniform_vectors(100, 6, 43);
  auto truth = data::ground_truth(base, std::vector<Vector>{base[17]}, 3);
  CHECK(truth[0][0] == 17);

  std::vector<Vector> small(base.begin(), base.begin() + 20);
  auto all = data::ground_truth(small, std::vector<Vector>{q[0]}, 20)[0];
  CHECK(all.size() == 20);
  for (std::size_t k = 1; k < all.size(); ++k) {
    CHECK(l2_squared(q[0], small[all[k - 1]]) <= l2_squared(q[0], small[all[k]]));
  }

  // Independent quadratic scan with a full sort.
  auto fast = data::ground_truth(base, q, 10);
  for (std::size_t i = 0; i < q.size(); ++i) {
    std::vector<std::pair<double, VectorId>> d;
    for (VectorId id = 0; id < base.size(); ++id) d.emplace_back(l2_squared(q[i], base[id]), id);
    std::sort(d.begin(), d.end());
    for (std::size_t k = 0; k < 10; ++k) CHECK(fast[i][k] == d[k].second);
  }

  std::vector<bool> live(20, true);
  live[all[0]] = false;
  auto masked = data::ground_truth(small, std::vector<Vector>{q[0]}, 1, live)[0];
  CHECK(masked[0] == all[1]);
}

TEST_CASE("recall at k") {
  std::vector<std::vector<VectorId>> truth{{1, 2, 3}, {4, 5, 6}};
  std::vector<std::vector<VectorId>> found{{3, 2, 9}, {4, 5, 6}};
  CHECK(data::recall_at_k(found, truth, 3) == doctest::Approx((2.0 / 3.0 + 1.0) / 2.0));
  CHECK_THROWS_AS(data::recall_at_k(found, std::vector<std::vector<VectorId>>{{1}}, 1), Error);
}

TEST_CASE("mean confidence interval from a sample file") {
  const auto path = temp_path("lios_samples.txt");
  {
    std::ofstream out(path);
    out << "2\n4\n4\n4\n5\n5\n7\n9\n";
  }
  std::vector<double> xs;
  std::ifstream in(path);
  for (double x; in >> x;) xs.push_back(x);
  std::filesystem::remove(path);
  // mean 5, sample variance 32/7, half-width 1.96 * sqrt(32/7) / sqrt(8).
  const auto e = bench::mean_ci(xs);
  const double half = 1.96 * std::sqrt(32.0 / 7.0) / std::sqrt(8.0);
  CHECK(e.value == doctest::Approx(5.0));
  CHECK(e.hi - e.value == doctest::Approx(half));
  CHECK(e.value - e.lo == doctest::Approx(half));
  CHECK(half == doctest::Approx(1.4816).epsilon(1e-4));

  const auto one = bench::mean_ci(std::vector<double>{3.0});
  CHECK(one.lo == 3.0);
  CHECK(one.hi == 3.0);
}

TEST_CASE("quantile interval brackets the estimate") {
  std::vector<double> xs;
  for (int k = 1; k <= 1000; ++k) xs.push_back(k);
  const auto q = bench::quantile_ci(xs, 0.95);
  CHECK(q.value == 950.0);
  CHECK(q.lo <= q.value);
  CHECK(q.hi >= q.value);
  CHECK(q.lo >= 930.0);
  CHECK(q.hi <= 970.0);
  CHECK_FALSE(bench::summarize(std::vector<double>{}).has_value());
}

TEST_CASE("report schema round trip and nulls for empty phases") {
  bench::MetricsReport r;
  r.theta = 0.05;
  r.search_threads = 4;
  r.update_threads = 1;
  r.seed = 9;
  r.recall = 0.97;
  r.recall_queries = 100;
  r.counters.slices = 12;
  r.counters.restarts = 2;
  bench::PhaseReport full;
  full.name = "delete";
  full.update = true;
  full.duration_us = 1234.5;
  full.vectors = 50;
  full.latency = bench::summarize(std::vector<double>{100, 110, 120, 130});
  full.qps = 3000;
  full.speedup = 1.8;
  full.latency_degradation = 0.02;
  bench::PhaseReport empty;
  empty.name = "insert";
  empty.update = true;
  r.phases = {full, empty};

  const auto text = bench::report_to_json(r);
  const auto doc = nlohmann::json::parse(text);
  CHECK(doc.at("phases").at(1).at("latency").is_null());
  CHECK(doc.at("phases").at(1).at("qps").is_null());
  CHECK(doc.at("phases").at(1).at("speedup").is_null());

  const auto back = bench::report_from_json(text);
  CHECK(bench::report_to_json(back) == text);
  REQUIRE(back.phases.size() == 2);
  CHECK(back.phases[0].latency->mean.value == doctest::Approx(115.0));
  CHECK_FALSE(back.phases[1].latency.has_value());
  CHECK(back.recall == r.recall);
  CHECK(back.counters.restarts == 2);
  CHECK_THROWS_AS(bench::report_from_json("{\"schema_version\": 99}"), Error);
  CHECK_THROWS_AS(bench::report_from_json("not json"), Error);
}

TEST_CASE("device profile parsing") {
  auto p = bench::parse_device_profile(R"({"latency": "constant", "constant_us": 80, "queue_depth": 32})");
  CHECK(p.latency.kind == io::LatencyModel::Kind::kConstant);
  CHECK(p.latency.constant_us == 80.0);
  CHECK(p.queue_depth == 32);
  auto ln = bench::parse_device_profile(R"({"latency": "lognormal", "mu": 4.0, "sigma": 0.3, "seed": 5})");
  CHECK(ln.latency.kind == io::LatencyModel::Kind::kLognormal);
  CHECK(ln.latency.sigma == 0.3);
  CHECK(ln.seed == 5);
  CHECK_THROWS_AS(bench::parse_device_profile(R"({"latency": "weird"})"), Error);
  CHECK_THROWS_AS(bench::parse_device_profile("[1, 2"), Error);
}

TEST_CASE("workload validation") {
  bench::WorkloadSpec spec;
  CHECK_NOTHROW(spec.validate());
  spec.delete_fraction = 1.5;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = bench::WorkloadSpec{};
  spec.search_threads = 0;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = bench::WorkloadSpec{};
  spec.set_theta(0.1);
  CHECK(spec.budget.theta == 0.1);
  CHECK(spec.tuner.theta == 0.1);
}

TEST_CASE("pure search run reports recall and no co-execution metrics") {
  bench::WorkloadSpec spec;
  spec.update_threads = 0;
  spec.search_threads = 2;
  spec.query_count = 50;
  spec.search_queries = 300;
  spec.recall_queries = 50;
  spec.index.degree_bound = 12;
  auto prep = bench::prepare(data::gaussian_mixture(1050, 8, 4, 3), spec);
  CHECK(prep.queries.size() == 50);
  CHECK(prep.inserts.empty());
  const auto report = bench::run_workload(prep, spec);
  CHECK(report.complete);
  REQUIRE(report.recall.has_value());
  CHECK(*report.recall >= 0.9);
  for (const auto& p : report.phases) {
    CHECK_FALSE(p.update);
    CHECK_FALSE(p.speedup.has_value());
    CHECK_FALSE(p.update_throughput.has_value());
    REQUIRE(p.latency.has_value());
  }
  CHECK(report.counters.slices == 0);
}

TEST_CASE("small paired run emits a complete report") {
  bench::WorkloadSpec spec;
  spec.search_threads = 4;
  spec.query_count = 50;
  spec.recall_queries = 50;
  spec.index.degree_bound = 12;
  spec.tuner.epoch_queries = 100;
  auto prep = bench::prepare(data::gaussian_mixture(2100, 8, 4, 4), spec);
  CHECK(prep.inserts.size() == static_cast<std::size_t>(0.05 * static_cast<double>(prep.base.size()) + 0.5));
  const auto report = bench::run_workload(prep, spec);
  CHECK(report.complete);
  bool saw_update = false;
  for (const auto& p : report.phases) {
    if (!p.update) continue;
    saw_update = true;
    REQUIRE(p.speedup.has_value());
    CHECK(*p.speedup > 0.0);
    CHECK(p.update_throughput.has_value());
  }
  CHECK(saw_update);
  REQUIRE(report.recall.has_value());
  CHECK(*report.recall >= 0.9);

  const auto dir = temp_path("lios_report_test");
  std::filesystem::remove_all(dir);
  bench::emit_report(report, dir / "run.json");
  CHECK(std::filesystem::exists(dir / "run.json"));
  CHECK(std::filesystem::exists(dir / "run_latency.csv"));
  CHECK(std::filesystem::exists(dir / "run_tuner.csv"));
  CHECK(std::filesystem::exists(dir / "run_idle.csv"));
  std::ifstream in(dir / "run.json");
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(bench::report_from_json(text).phases.size() == report.phases.size());
  std::filesystem::remove_all(dir);
}

TEST_CASE("virtual runs are deterministic") {
  bench::WorkloadSpec spec;
  spec.search_threads = 3;
  spec.query_count = 40;
  spec.recall_queries = 20;
  spec.index.degree_bound = 10;
  spec.tuner.epoch_queries = 60;
  spec.paired = false;
  auto prep = bench::prepare(data::gaussian_mixture(1040, 6, 4, 5), spec);
  const auto a = bench::run_once(prep, spec, false);
  const auto b = bench::run_once(prep, spec, false);
  REQUIRE(a.queries.size() == b.queries.size());
  for (std::size_t k = 0; k < a.queries.size(); ++k) {
    CHECK(a.queries[k].latency_us == b.queries[k].latency_us);
    CHECK(a.queries[k].slices == b.queries[k].slices);
  }
  CHECK(a.counters.commits == b.counters.commits);
}

TEST_CASE("zero theta holds co-execution back") {
  bench::WorkloadSpec spec;
  spec.search_threads = 4;
  spec.query_count = 50;
  spec.recall_queries = 20;
  spec.index.degree_bound = 12;
  spec.tuner.epoch_queries = 100;
  spec.set_theta(0.0);
  auto prep = bench::prepare(data::gaussian_mixture(2100, 8, 4, 6), spec);
  const auto report = bench::run_workload(prep, spec);
  CHECK(report.complete);
  for (const auto& p : report.phases) {
    if (!p.update || !p.latency_degradation) continue;
    CHECK(*p.latency_degradation <= 0.01);
    CHECK(*p.speedup >= 0.9);
  }
}
