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

#include "trainer.hpp"

#include <cmath>
#include <string>

#include "errors.hpp"
#include "eval.hpp"
#include "instance_io.hpp"
#include "parallel.hpp"

namespace routeadapt {

namespace {

// Seed-hierarchy tags.
constexpr std::uint64_t kInitTag = 0x1;
constexpr std::uint64_t kStepTag = 0x2;
constexpr std::uint64_t kInstanceTag = 0x3;

struct ChunkResult {
  std::vector<std::vector<double>> grads;
  double loss = 0.0;
  double cost_sum = 0.0;
  std::size_t rows = 0;
};

}  // namespace

void TrainConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) fail(ErrorCode::kConfiguration, std::string(name) + " must be positive");
  };
  positive(n_train, "n_train");
  positive(batch_instances, "batch_instances");
  positive(multistart, "multistart");
  positive(epochs, "epochs");
  positive(steps_per_epoch, "steps_per_epoch");
  positive(chunk_instances, "chunk_instances");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    fail(ErrorCode::kConfiguration, "learning_rate must be positive");
  }
  PolicyConfig p = policy;
  p.task = task;
  p.validate();
}

ad::Tensor reinforce_surrogate(const ad::Tensor& log_probs, std::span<const double> rewards,
                               std::size_t group, std::span<const double> weights) {
  const std::size_t rows = rewards.size();
  if (group == 0 || rows == 0 || rows % group != 0 || log_probs.size() != rows) {
    fail(ErrorCode::kDimension, "rewards must form whole groups matching the log-probabilities");
  }
  if (!weights.empty() && weights.size() != rows) {
    fail(ErrorCode::kDimension, "weights must match rewards");
  }
  std::vector<double> coef(rows);
  for (std::size_t g = 0; g < rows / group; ++g) {
    double b = 0.0;
    for (std::size_t r = g * group; r < (g + 1) * group; ++r) b += rewards[r];
    b /= static_cast<double>(group);
    for (std::size_t r = g * group; r < (g + 1) * group; ++r) {
      const double w = weights.empty() ? 1.0 : weights[r];
      coef[r] = -w * (rewards[r] - b) / static_cast<double>(rows);
    }
  }
  return ad::sum(ad::mul(log_probs, ad::Tensor(log_probs.shape(), std::move(coef))));
}

std::vector<double> rewards_of(Task task, std::span<const Solution> solutions) {
  std::vector<double> r;
  r.reserve(solutions.size());
  for (const auto& s : solutions) r.push_back(reward_of(task, s.objective));
  return r;
}

TrainLogRow train_step(Policy& policy, Adam& optimizer, const TrainConfig& config,
                       std::span<const Instance> batch, std::uint64_t step_seed,
                       std::size_t step_index) {
  const std::size_t chunk = config.chunk_instances;
  const std::size_t chunks = (batch.size() + chunk - 1) / chunk;
  const std::size_t total_rows = batch.size() * config.multistart;
  std::vector<ChunkResult> results(chunks);
  DecodeConfig decode;
  decode.multistart = config.multistart;

  parallel_for(chunks, config.workers, [&](std::size_t c) {
    const auto slice = batch.subspan(c * chunk, std::min(chunk, batch.size() - c * chunk));
    ad::Tape tape;
    const ParamView theta = policy.params.bind(tape);
    const PreparedBatch prepared = prepare(theta, policy.config, slice, 1);
    Rng rng(derive_seed(step_seed, c));
    const RolloutBatch roll = rollout(theta, policy.config, prepared, decode, {}, rng);
    const auto rewards = rewards_of(policy.config.task, roll.solutions);
    ChunkResult& out = results[c];
    out.rows = roll.solutions.size();
    for (const auto& s : roll.solutions) out.cost_sum += s.objective;
    // Rescale so chunk losses add up to the batch surrogate.
    const ad::Tensor loss = ad::scale(
        reinforce_surrogate(roll.log_probs, rewards, config.multistart),
        static_cast<double>(out.rows) / static_cast<double>(total_rows));
    out.loss = loss.item();
    out.grads = theta.gradients(tape.backward(loss));
  });

  TrainLogRow row;
  row.step = step_index;
  std::vector<std::vector<double>> grads = std::move(results[0].grads);
  double cost_sum = 0.0;
  for (std::size_t c = 0; c < chunks; ++c) {
    row.loss += results[c].loss;
    cost_sum += results[c].cost_sum;
    if (c == 0) continue;
    for (std::size_t k = 0; k < grads.size(); ++k) {
      for (std::size_t e = 0; e < grads[k].size(); ++e) grads[k][e] += results[c].grads[k][e];
    }
  }
  row.mean_cost = cost_sum / static_cast<double>(total_rows);
  bool finite = std::isfinite(row.loss) && std::isfinite(row.mean_cost);
  for (const auto& g : grads) {
    for (double v : g) finite = finite && std::isfinite(v);
  }
  if (!finite) {
    fail(ErrorCode::kTrainingDiverged,
         "non-finite loss or gradient at step " + std::to_string(step_index));
  }
  optimizer.step(policy.params, grads);
  return row;
}

TrainResult pretrain(const TrainConfig& config, const TrainObserver& observer) {
  config.validate();
  PolicyConfig pc = config.policy;
  pc.task = config.task;
  return pretrain(config, Policy::init(pc, derive_seed(config.seed, kInitTag)), observer);
}

TrainResult pretrain(const TrainConfig& config, Policy initial, const TrainObserver& observer) {
  config.validate();
  if (initial.config.task != config.task) {
    fail(ErrorCode::kConfiguration, "initial policy task does not match the training task");
  }
  TrainResult result{std::move(initial), {}};
  Adam optimizer(config.learning_rate);
  const std::size_t total = config.epochs * config.steps_per_epoch;
  std::vector<Instance> batch(config.batch_instances);
  for (std::size_t step = 1; step <= total; ++step) {
    const std::uint64_t step_seed = derive_seed(derive_seed(config.seed, kStepTag), step);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      batch[i] = generate(config.task, config.n_train, derive_seed(derive_seed(step_seed, kInstanceTag), i));
    }
    TrainLogRow row = train_step(result.policy, optimizer, config, batch, step_seed, step);
    row.epoch = (step - 1) / config.steps_per_epoch + 1;
    result.log.push_back(row);
    if (observer) observer(row);
  }
  return result;
}

void write_train_log(std::ostream& os, std::span<const TrainLogRow> rows) {
  os << "epoch,step,mean_cost,loss\n";
  for (const auto& r : rows) {
    os << r.epoch << ',' << r.step << ',' << format_double(r.mean_cost) << ','
       << format_double(r.loss) << '\n';
  }
}

ValidationReport validate(const Policy& policy, std::span<const Instance> dataset,
                          std::span<const double> baseline, bool require_baseline,
                          const GreedyOptions& options) {
  if (dataset.empty()) fail(ErrorCode::kArgument, "validation dataset is empty");
  if (require_baseline && baseline.empty()) {
    fail(ErrorCode::kConfiguration, "validation requires a baseline objective column");
  }
  if (!baseline.empty() && baseline.size() != dataset.size()) {
    fail(ErrorCode::kConfiguration, "baseline column length does not match the dataset");
  }
  ValidationReport report;
  for (const auto& s : solve_greedy(policy.params.constant(), policy.config, dataset, options)) {
    report.objectives.push_back(s.objective);
    report.mean_objective += s.objective;
  }
  const double n = static_cast<double>(dataset.size());
  report.mean_objective /= n;
  if (!baseline.empty()) {
    double mb = 0.0, mg = 0.0;
    for (std::size_t i = 0; i < baseline.size(); ++i) {
      mb += baseline[i];
      mg += gap_percent(report.objectives[i], baseline[i], maximizes(policy.config.task));
    }
    report.mean_baseline = mb / n;
    report.mean_gap_pct = mg / n;
  }
  return report;
}

}  // namespace routeadapt
