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

#include <random>

#include "lios/prune.hpp"
#include "support.hpp"

namespace {

using namespace lios;
using namespace lios::prune;

// Six candidates around p = (0, 0) with alpha = 1 and R = 3: c0 covers c1 and
// c3, c2 covers nothing, c4 is the third pick.
std::shared_ptr<const CandidatePool> worked_pool() {
  const std::vector<Vector> pts = {{1.0f, 0.0f},  {1.1f, 0.1f},  {0.0f, 1.2f},
                                   {1.3f, -0.1f}, {-1.4f, 0.0f}, {0.0f, -1.5f}};
  const std::vector<VectorId> ids = {0, 1, 2, 3, 4, 5};
  return std::make_shared<const CandidatePool>(CandidatePool::build(Vector{0.0f, 0.0f}, ids, pts));
}

std::shared_ptr<const CandidatePool> random_pool(std::mt19937_64& rng, std::size_t n, std::uint32_t dim) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  Vector target(dim);
  for (auto& x : target) x = u(rng);
  std::vector<Vector> vecs(n, Vector(dim));
  std::vector<VectorId> ids(n);
  for (std::size_t k = 0; k < n; ++k) {
    ids[k] = static_cast<VectorId>(k * 3 + 1);
    for (auto& x : vecs[k]) x = u(rng);
  }
  return std::make_shared<const CandidatePool>(CandidatePool::build(target, ids, vecs));
}

// Reference selection written independently from the library loop.
std::vector<VectorId> reference_prune(const CandidatePool& pool, double alpha, std::uint32_t R) {
  std::vector<std::size_t> picked;
  std::vector<bool> gone(pool.size(), false);
  for (std::size_t i = 0; i < pool.size() && picked.size() < R; ++i) {
    if (gone[i]) continue;
    picked.push_back(i);
    for (std::size_t j = i + 1; j < pool.size(); ++j) {
      if (alpha * pool.pair_distance(i, j) <= pool[j].dist) gone[j] = true;
    }
  }
  std::vector<VectorId> out;
  for (auto i : picked) out.push_back(pool[i].id);
  return out;
}

}  // namespace

TEST_CASE("monolithic prune degenerate pools") {
  CHECK(prune_monolithic(CandidatePool{}, 1.2, 4).empty());
  auto one = CandidatePool::build(Vector{0.0f}, std::vector<VectorId>{9}, std::vector<Vector>{{2.0f}});
  CHECK(prune_monolithic(one, 1.2, 1) == std::vector<VectorId>{9});
  CHECK(prune_monolithic(one, 1.2, 16) == std::vector<VectorId>{9});
}

TEST_CASE("candidate pool sorts by distance then id and drops duplicates") {
  auto pool = CandidatePool::build(Vector{0.0f, 0.0f}, std::vector<VectorId>{5, 3, 5, 8},
                                   std::vector<Vector>{{1, 0}, {0, 1}, {1, 0}, {2, 0}});
  REQUIRE(pool.size() == 3);
  CHECK(pool[0].id == 3);
  CHECK(pool[1].id == 5);
  CHECK(pool[2].id == 8);
  CHECK_THROWS_AS(CandidatePool::from_sorted(Vector{0.0f}, {{2, 2.0f}, {1, 1.0f}}, {2.0f, 1.0f}), Error);
}

TEST_CASE("worked example: first window yields the documented checkpoint") {
  PruneTaskState st{worked_pool(), 1.0, 3, std::nullopt, 0};
  VirtualWorkClock clock(WorkCosts::prune_only(1.0));
  auto out = prune_slice(st, Micros{7}, clock);
  REQUIRE(std::holds_alternative<Yielded>(out));
  const auto& cp = std::get<Yielded>(out).checkpoint;
  CHECK(cp.result == std::vector<std::uint32_t>{0, 2});
  CHECK(cp.done == std::vector<bool>{true, true, true, true, false, false});
  CHECK(cp.i == 2);
  CHECK(cp.j == 5);

  auto rest = prune_slice(st, kUnbounded, clock);
  REQUIRE(std::holds_alternative<Completed>(rest));
  CHECK(std::get<Completed>(rest).neighbors == std::vector<VectorId>{0, 2, 4});
  CHECK(prune_monolithic(*worked_pool(), 1.0, 3) == std::vector<VectorId>{0, 2, 4});
}

TEST_CASE("unbounded budget completes in one slice") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 200; ++t) {
    auto pool = random_pool(rng, 1 + rng() % 64, 2 + rng() % 6);
    const std::uint32_t R = 1 + rng() % 16;
    PruneTaskState st{pool, 1.2, R, std::nullopt, 0};
    VirtualWorkClock clock(WorkCosts::prune_only());
    auto out = prune_slice(st, kUnbounded, clock);
    REQUIRE(std::holds_alternative<Completed>(out));
    CHECK(std::get<Completed>(out).neighbors == prune_monolithic(*pool, 1.2, R));
  }
}

TEST_CASE("monolithic prune matches an independent reference and the selection postcondition") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 500; ++t) {
    auto pool = random_pool(rng, rng() % 65, 2 + rng() % 6);
    const std::uint32_t R = 1 + rng() % 16;
    const double alpha = 1.0 + static_cast<double>(rng() % 5) / 10.0;
    const auto got = prune_monolithic(*pool, alpha, R);
    CHECK(got == reference_prune(*pool, alpha, R));
    CHECK(got.size() <= R);
    if (!pool->empty()) CHECK(got.front() == (*pool)[0].id);
  }
}

TEST_CASE("randomized sliced prune equals monolithic") {
  std::mt19937_64 rng(2026);
  for (int t = 0; t < 1000; ++t) {
    auto pool = random_pool(rng, 1 + rng() % 64, 2 + rng() % 8);
    const std::uint32_t R = 1 + rng() % 16;
    const double alpha = 1.0 + static_cast<double>(rng() % 4) / 10.0;
    PruneTaskState st{pool, alpha, R, std::nullopt, 0};
    VirtualWorkClock clock(WorkCosts::prune_only());
    std::optional<std::vector<VectorId>> done;
    for (int slices = 0; !done; ++slices) {
      REQUIRE(slices < 10000);
      auto out = prune_slice(st, Micros{static_cast<double>(1 + rng() % 3)}, clock);
      if (auto* c = std::get_if<Completed>(&out)) done = c->neighbors;
    }
    CHECK(*done == prune_monolithic(*pool, alpha, R));
  }
}

TEST_CASE("ten iterations under a budget of three take four slices") {
  // Five mutually distant candidates: 4 + 3 + 2 + 1 inner iterations.
  const std::vector<Vector> pts = {{1, 0, 0, 0}, {0, 1.1f, 0, 0}, {0, 0, 1.2f, 0}, {0, 0, 0, 1.3f}, {-1.4f, 0, 0, 0}};
  auto pool = std::make_shared<const CandidatePool>(
      CandidatePool::build(Vector(4, 0.0f), std::vector<VectorId>{0, 1, 2, 3, 4}, pts));
  PruneTaskState st{pool, 1.2, 8, std::nullopt, 0};
  VirtualWorkClock clock(WorkCosts::prune_only());
  int slices = 0;
  int yields = 0;
  std::vector<VectorId> result;
  for (;;) {
    ++slices;
    auto out = prune_slice(st, Micros{3}, clock);
    if (auto* c = std::get_if<Completed>(&out)) {
      result = c->neighbors;
      break;
    }
    ++yields;
  }
  CHECK(st.iterations == 10);
  CHECK(slices == 4);
  CHECK(yields == 3);
  CHECK(result == prune_monolithic(*pool, 1.2, 8));
}

TEST_CASE("checkpoint serialization round-trips and resumes identically") {
  std::mt19937_64 rng(77);
  for (int t = 0; t < 300; ++t) {
    auto pool = random_pool(rng, 2 + rng() % 63, 3);
    const std::uint32_t R = 1 + rng() % 16;
    PruneTaskState a{pool, 1.2, R, std::nullopt, 0};
    VirtualWorkClock clock(WorkCosts::prune_only());
    auto out = prune_slice(a, Micros{1 + static_cast<double>(rng() % 4)}, clock);
    auto* y = std::get_if<Yielded>(&out);
    if (y == nullptr) continue;
    const auto bytes = y->checkpoint.serialize();
    const auto back = PruneCheckpoint::deserialize(bytes, pool->size());
    CHECK(back == y->checkpoint);
    PruneTaskState b{pool, 1.2, R, std::nullopt, 0};
    restore(back, b);
    auto ra = prune_slice(a, kUnbounded, clock);
    auto rb = prune_slice(b, kUnbounded, clock);
    CHECK(std::get<Completed>(ra).neighbors == std::get<Completed>(rb).neighbors);
    CHECK(std::get<Completed>(rb).neighbors == prune_monolithic(*pool, 1.2, R));
  }
}

TEST_CASE("corrupt checkpoints are rejected") {
  PruneTaskState st{worked_pool(), 1.0, 3, std::nullopt, 0};
  PruneCheckpoint good{{0, 2}, {true, true, true, true, false, false}, 2, 5};
  CHECK_NOTHROW(validate(good, 6, 3));

  auto expect_corrupt = [&](PruneCheckpoint cp) {
    try {
      restore(cp, st);
      FAIL("accepted a corrupt checkpoint");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kCorruptCheckpoint);
    }
  };
  auto bad = good;
  bad.done.pop_back();
  expect_corrupt(bad);
  bad = good;
  bad.j = 2;
  expect_corrupt(bad);
  bad = good;
  bad.i = 7;
  expect_corrupt(bad);
  bad = good;
  bad.done[2] = false;
  expect_corrupt(bad);
  bad = good;
  bad.result = {0, 2, 4, 5};
  expect_corrupt(bad);
  CHECK_THROWS_AS(PruneCheckpoint::deserialize(std::vector<std::byte>(3), 6), Error);
}

TEST_CASE("non-positive slice budgets are refused") {
  PruneTaskState st{worked_pool(), 1.0, 3, std::nullopt, 0};
  VirtualWorkClock clock(WorkCosts::prune_only());
  CHECK_THROWS_AS(prune_slice(st, Micros{0}, clock), Error);
}
