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
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "lios/common.hpp"

namespace lios::budget {

/// Left side of the overrun constraint: (1/N) * sum over scheduled samples of
/// max(0, tau - sample). An empty mask schedules every sample.
double mean_overrun(std::span<const double> samples, std::span<const bool> scheduled, double tau);
double mean_overrun(std::span<const double> samples, const std::vector<bool>& scheduled, double tau);

/// Right side: theta * mean(samples).
double overrun_allowance(std::span<const double> samples, double theta);

/// Upper end of the search range. For tau at or above every scheduled sample
/// the constraint is linear, which caps all feasible values.
double search_upper_bound(std::span<const double> samples, std::span<const bool> scheduled, double theta);

/// Largest tau in [0, upper bound] meeting the constraint, found by bisection
/// to within `epsilon` and always rounded down to a feasible value.
double solve_masked(std::span<const double> samples, std::span<const bool> scheduled, double theta,
                    double epsilon = 0.5);

/// Every sample is a scheduled interval.
double solve_budget(std::span<const double> samples, double theta, double epsilon = 0.5);

/// Only every k-th sample in arrival order (1-based positions k, 2k, ...) is a
/// scheduled interval; the allowance still averages over all samples.
/// Needs at least k samples.
double solve_budget_ksparse(std::span<const double> samples, double theta, std::uint32_t k_sparse,
                            double epsilon = 0.5);

std::vector<bool> ksparse_mask(std::size_t n, std::uint32_t k_sparse);

enum class Mode { kPerBatch, kKSparse };

struct BudgetConfig {
  double theta = 0.05;
  std::size_t window = 256;       // N
  std::size_t min_samples = 32;   // N_min
  double epsilon_us = 0.5;
  std::uint32_t buckets = 8;      // B_u
  Mode mode = Mode::kPerBatch;
  std::uint32_t k_sparse = 8;
  std::size_t resolve_period = 64;

  void validate() const;
};

/// Ring buffer of the most recent idle durations for one bucket.
class SampleWindow {
 public:
  explicit SampleWindow(std::size_t capacity) : capacity_(capacity) {}

  void push(double duration_us);
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  /// Oldest first.
  std::vector<double> ordered() const;

 private:
  std::size_t capacity_;
  std::vector<double> data_;
  std::size_t head_ = 0;  // next slot to overwrite once full
};

/// Per-batch-size sample history and solved budgets, shared by all search
/// threads. get_budget() is a single atomic load; recording takes the
/// bucket's mutex and re-solves inline every `resolve_period` samples.
///
/// In k-sparse mode all samples share bucket 1.
class BudgetTable {
 public:
  explicit BudgetTable(BudgetConfig cfg);

  const BudgetConfig& config() const noexcept { return cfg_; }

  /// Batch sizes above B_u clamp to bucket B_u.
  std::uint32_t bucket_for(std::uint32_t batch_size) const noexcept;

  void record_sample(Micros duration, std::uint32_t batch_size);

  /// Latest solved budget, or nullopt while the bucket has fewer than N_min samples.
  std::optional<Micros> get_budget(std::uint32_t batch_size) const;

  std::size_t sample_count(std::uint32_t batch_size) const;
  std::vector<double> window_snapshot(std::uint32_t batch_size) const;

  /// Forces a solve of every bucket with enough samples.
  void resolve_all();

 private:
  struct Bucket {
    explicit Bucket(std::size_t n) : window(n) {}
    mutable std::mutex mu;
    SampleWindow window;
    std::size_t since_solve = 0;
    bool solved_once = false;
    std::atomic<double> tau{-1.0};
  };

  void resolve_locked(Bucket& b);
  Bucket& bucket(std::uint32_t batch_size) const;

  BudgetConfig cfg_;
  std::vector<std::unique_ptr<Bucket>> buckets_;
};

}  // namespace lios::budget
