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

#include "lios/budget.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace lios::budget {

namespace {

void check_samples(std::span<const double> samples, std::span<const bool> scheduled, double theta) {
  if (samples.empty()) throw Error(ErrorCode::kInsufficientSamples, "no idle samples to solve over");
  if (!scheduled.empty() && scheduled.size() != samples.size()) {
    throw Error(ErrorCode::kInvalidArgument, "schedule mask length differs from sample count");
  }
  if (!(theta >= 0)) throw Error(ErrorCode::kInvalidArgument, "theta must be non-negative");
  for (double s : samples) {
    if (!(s >= 0) || !std::isfinite(s)) throw Error(ErrorCode::kInvalidArgument, "idle samples must be finite and >= 0");
  }
}

bool is_scheduled(std::span<const bool> scheduled, std::size_t i) { return scheduled.empty() || scheduled[i]; }

// Sums instead of means: both sides share the 1/N factor.
bool feasible(std::span<const double> samples, std::span<const bool> scheduled, double allowance_sum, double tau) {
  double over = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (is_scheduled(scheduled, i) && tau > samples[i]) over += tau - samples[i];
  }
  return over <= allowance_sum + 1e-9 * std::max(1.0, allowance_sum);
}

}  // namespace

double mean_overrun(std::span<const double> samples, std::span<const bool> scheduled, double tau) {
  if (samples.empty()) return 0.0;
  double over = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (is_scheduled(scheduled, i)) over += std::max(0.0, tau - samples[i]);
  }
  return over / static_cast<double>(samples.size());
}

double mean_overrun(std::span<const double> samples, const std::vector<bool>& scheduled, double tau) {
  std::unique_ptr<bool[]> flags(new bool[scheduled.size()]);
  std::copy(scheduled.begin(), scheduled.end(), flags.get());
  return mean_overrun(samples, std::span<const bool>(flags.get(), scheduled.size()), tau);
}

double overrun_allowance(std::span<const double> samples, double theta) {
  if (samples.empty()) return 0.0;
  double sum = 0.0;
  for (double s : samples) sum += s;
  return theta * sum / static_cast<double>(samples.size());
}

double search_upper_bound(std::span<const double> samples, std::span<const bool> scheduled, double theta) {
  double sum = 0.0;
  double sched_sum = 0.0;
  double sched_max = 0.0;
  std::size_t sched_n = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    sum += samples[i];
    if (is_scheduled(scheduled, i)) {
      sched_sum += samples[i];
      sched_max = std::max(sched_max, samples[i]);
      ++sched_n;
    }
  }
  if (sched_n == 0) throw Error(ErrorCode::kInsufficientSamples, "no scheduled interval in the window");
  // Past the largest scheduled sample: (s/N)(tau - mean_s) <= theta * mean.
  const double linear_cap = sched_sum / static_cast<double>(sched_n) + theta * sum / static_cast<double>(sched_n);
  return std::max(sched_max, linear_cap);
}

double solve_masked(std::span<const double> samples, std::span<const bool> scheduled, double theta, double epsilon) {
  check_samples(samples, scheduled, theta);
  if (!(epsilon > 0)) throw Error(ErrorCode::kInvalidArgument, "epsilon must be positive");
  double sum = 0.0;
  for (double s : samples) sum += s;
  const double allowance_sum = theta * sum;
  const double upper = search_upper_bound(samples, scheduled, theta);
  if (feasible(samples, scheduled, allowance_sum, upper)) return upper;

  // Bisect over the grid {k * epsilon}; tau = 0 is always feasible.
  std::uint64_t lo = 0;
  auto hi = static_cast<std::uint64_t>(std::ceil(upper / epsilon));
  while (hi - lo > 1) {
    const std::uint64_t mid = lo + (hi - lo) / 2;
    if (static_cast<double>(mid) * epsilon < upper &&
        feasible(samples, scheduled, allowance_sum, static_cast<double>(mid) * epsilon)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return static_cast<double>(lo) * epsilon;
}

double solve_budget(std::span<const double> samples, double theta, double epsilon) {
  return solve_masked(samples, {}, theta, epsilon);
}

std::vector<bool> ksparse_mask(std::size_t n, std::uint32_t k_sparse) {
  if (k_sparse == 0) throw Error(ErrorCode::kInvalidArgument, "K_sparse must be at least 1");
  std::vector<bool> mask(n, false);
  for (std::size_t i = k_sparse - 1; i < n; i += k_sparse) mask[i] = true;
  return mask;
}

double solve_budget_ksparse(std::span<const double> samples, double theta, std::uint32_t k_sparse, double epsilon) {
  if (k_sparse == 0) throw Error(ErrorCode::kInvalidArgument, "K_sparse must be at least 1");
  if (samples.size() < k_sparse) {
    throw Error(ErrorCode::kInsufficientSamples, "k-sparse solve needs at least K_sparse samples");
  }
  const auto mask = ksparse_mask(samples.size(), k_sparse);
  // std::vector<bool> has no contiguous storage; widen for the span API.
  std::unique_ptr<bool[]> flags(new bool[mask.size()]);
  std::copy(mask.begin(), mask.end(), flags.get());
  return solve_masked(samples, std::span<const bool>(flags.get(), mask.size()), theta, epsilon);
}

void BudgetConfig::validate() const {
  if (!(theta >= 0)) throw Error(ErrorCode::kInvalidArgument, "theta must be non-negative");
  if (window == 0 || min_samples == 0 || min_samples > window) {
    throw Error(ErrorCode::kInvalidArgument, "need 0 < N_min <= N");
  }
  if (buckets == 0) throw Error(ErrorCode::kInvalidArgument, "B_u must be at least 1");
  if (k_sparse == 0) throw Error(ErrorCode::kInvalidArgument, "K_sparse must be at least 1");
  if (mode == Mode::kKSparse && min_samples < k_sparse) {
    throw Error(ErrorCode::kInvalidArgument, "N_min must cover at least one k-sparse interval");
  }
  if (resolve_period == 0) throw Error(ErrorCode::kInvalidArgument, "resolve period must be positive");
  if (!(epsilon_us > 0)) throw Error(ErrorCode::kInvalidArgument, "epsilon must be positive");
}

void SampleWindow::push(double duration_us) {
  if (data_.size() < capacity_) {
    data_.push_back(duration_us);
    return;
  }
  data_[head_] = duration_us;
  head_ = (head_ + 1) % capacity_;
}

std::vector<double> SampleWindow::ordered() const {
  std::vector<double> out;
  out.reserve(data_.size());
  for (std::size_t k = 0; k < data_.size(); ++k) out.push_back(data_[(head_ + k) % data_.size()]);
  return out;
}

BudgetTable::BudgetTable(BudgetConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  const std::uint32_t n = cfg_.mode == Mode::kKSparse ? 1 : cfg_.buckets;
  for (std::uint32_t b = 0; b < n; ++b) buckets_.push_back(std::make_unique<Bucket>(cfg_.window));
}

std::uint32_t BudgetTable::bucket_for(std::uint32_t batch_size) const noexcept {
  if (cfg_.mode == Mode::kKSparse) return 1;
  return std::clamp<std::uint32_t>(batch_size, 1, cfg_.buckets);
}

BudgetTable::Bucket& BudgetTable::bucket(std::uint32_t batch_size) const {
  return *buckets_[bucket_for(batch_size) - 1];
}

void BudgetTable::resolve_locked(Bucket& b) {
  const auto samples = b.window.ordered();
  double tau;
  if (cfg_.mode == Mode::kKSparse) {
    tau = solve_budget_ksparse(samples, cfg_.theta, cfg_.k_sparse, cfg_.epsilon_us);
  } else {
    tau = solve_budget(samples, cfg_.theta, cfg_.epsilon_us);
  }
  b.tau.store(tau, std::memory_order_release);
  b.since_solve = 0;
  b.solved_once = true;
}

void BudgetTable::record_sample(Micros duration, std::uint32_t batch_size) {
  if (batch_size == 0) throw Error(ErrorCode::kInvalidArgument, "batch size must be at least 1");
  Bucket& b = bucket(batch_size);
  std::lock_guard lock(b.mu);
  b.window.push(std::max(0.0, duration.count()));
  ++b.since_solve;
  if (b.window.size() >= cfg_.min_samples && (!b.solved_once || b.since_solve >= cfg_.resolve_period)) {
    resolve_locked(b);
  }
}

std::optional<Micros> BudgetTable::get_budget(std::uint32_t batch_size) const {
  const double tau = bucket(batch_size).tau.load(std::memory_order_acquire);
  if (tau < 0) return std::nullopt;
  return Micros{tau};
}

std::size_t BudgetTable::sample_count(std::uint32_t batch_size) const {
  Bucket& b = bucket(batch_size);
  std::lock_guard lock(b.mu);
  return b.window.size();
}

std::vector<double> BudgetTable::window_snapshot(std::uint32_t batch_size) const {
  Bucket& b = bucket(batch_size);
  std::lock_guard lock(b.mu);
  return b.window.ordered();
}

void BudgetTable::resolve_all() {
  for (auto& b : buckets_) {
    std::lock_guard lock(b->mu);
    if (b->window.size() >= cfg_.min_samples) resolve_locked(*b);
  }
}

}  // namespace lios::budget
