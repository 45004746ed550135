// Copyright 2026 The routeadapt Authors
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

// Multistart REINFORCE pretraining with a shared per-instance baseline.

#ifndef ROUTEADAPT_TRAINER_HPP_
#define ROUTEADAPT_TRAINER_HPP_

#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "policy.hpp"

namespace routeadapt {

struct TrainConfig {
  Task task = Task::kTsp;
  std::size_t n_train = 20;
  std::size_t batch_instances = 64;
  std::size_t multistart = 20;
  std::size_t epochs = 40;
  std::size_t steps_per_epoch = 100;
  double learning_rate = 1e-4;
  std::uint64_t seed = 1;
  PolicyConfig policy;  // task is overwritten by `task`
  // Instances per recorded tape. Gradients are reduced over chunks in a
  // fixed order, so results do not depend on `workers`.
  std::size_t chunk_instances = 16;
  std::size_t workers = 1;  // 0 = all hardware threads

  void validate() const;
};

struct TrainLogRow {
  std::size_t epoch = 0;
  std::size_t step = 0;  // global, 1-based
  double mean_cost = 0.0;  // mean objective over every sampled trajectory
  double loss = 0.0;
};

struct TrainResult {
  Policy policy;
  std::vector<TrainLogRow> log;
};

using TrainObserver = std::function<void(const TrainLogRow&)>;

// Surrogate whose gradient is the shared-baseline REINFORCE estimate:
//   -(1/R) sum_r w_r (reward_r - b_g) log p_r,
// with b_g the plain mean reward of row group g (`group` consecutive rows)
// and R the row count. `weights` defaults to 1.
ad::Tensor reinforce_surrogate(const ad::Tensor& log_probs, std::span<const double> rewards,
                               std::size_t group, std::span<const double> weights = {});

// Per-row rewards (-cost, or prize for OP).
std::vector<double> rewards_of(Task task, std::span<const Solution> solutions);

// One gradient step on `policy` for a batch of instances. Returns the log row
// (epoch left at 0). Throws kTrainingDiverged on a non-finite loss or gradient.
TrainLogRow train_step(Policy& policy, Adam& optimizer, const TrainConfig& config,
                       std::span<const Instance> batch, std::uint64_t step_seed,
                       std::size_t step_index);

// Fresh instances every step, seeded from (seed, step, index).
TrainResult pretrain(const TrainConfig& config, const TrainObserver& observer = {});
// Continues from an existing policy.
TrainResult pretrain(const TrainConfig& config, Policy initial, const TrainObserver& observer);

// CSV header epoch,step,mean_cost,loss.
void write_train_log(std::ostream& os, std::span<const TrainLogRow> rows);

struct ValidationReport {
  std::vector<double> objectives;
  double mean_objective = 0.0;
  std::optional<double> mean_baseline;
  std::optional<double> mean_gap_pct;  // mean of per-instance gaps
};

// Greedy multistart evaluation. With `require_baseline`, a baseline column of
// matching length must be supplied (kConfiguration otherwise).
ValidationReport validate(const Policy& policy, std::span<const Instance> dataset,
                          std::span<const double> baseline = {}, bool require_baseline = false,
                          const GreedyOptions& options = {});

}  // namespace routeadapt

#endif  // ROUTEADAPT_TRAINER_HPP_
