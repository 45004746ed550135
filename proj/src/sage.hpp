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

// Test-time adaptation. SAGE trains a per-instance residual adapter on the
// glimpse query with a shared-baseline policy gradient plus imitation of the
// best sample, while the locality weight and the temperature decay
// geometrically. EAS is the same loop with the bias off and unit temperature;
// active search fine-tunes a private copy of every policy weight instead.

#ifndef ROUTEADAPT_SAGE_HPP_
#define ROUTEADAPT_SAGE_HPP_

#include <optional>
#include <ostream>
#include <span>
#include <string_view>
#include <vector>

#include "policy.hpp"

namespace routeadapt {

enum class AdaptMode { kSage, kEas, kActiveSearch };

std::string_view adapt_mode_name(AdaptMode mode);
AdaptMode parse_adapt_mode(std::string_view name);

struct SageConfig {
  std::size_t iterations = 200;  // K
  // Samples per iteration M = multistart x augmentations.
  std::size_t multistart = 50;
  std::size_t augmentations = 1;
  double lambda = 0.005;
  double delta = 3.2e-3;  // adapter learning rate (Adam)
  double alpha0 = 1.0;
  double alpha_k = 0.3;
  double temp0 = 1.0;
  double temp_k = 0.3;
  AdaptMode mode = AdaptMode::kSage;
  // Imitate the best trajectory found so far instead of the iteration's best.
  bool global_incumbent = false;
  std::size_t adapter_hidden = 128;
  std::uint64_t seed = 1;
  // Instances adapted jointly in one stacked pass (equal node counts only).
  std::size_t batch_instances = 8;
  std::size_t workers = 1;

  std::size_t samples() const { return multistart * augmentations; }
  void validate() const;
};

// The configuration actually run by a mode: EAS and active search force the
// bias off and unit temperature.
SageConfig effective_config(const SageConfig& config);

struct HistoryRow {
  std::size_t k = 0;
  double best_cost = 0.0;  // incumbent objective after iteration k
  double mean_cost = 0.0;  // mean objective of iteration k's samples
  double alpha = 0.0;      // schedule state after iteration k
  double temperature = 0.0;
};

struct AdaptState {
  std::size_t k = 0;
  double alpha = 0.0;
  double temperature = 1.0;
  double gamma1 = 1.0;
  double gamma2 = 1.0;
  Solution best;
  std::vector<HistoryRow> history;
};

// (end / start)^(1 / K); 1 when start == end or K == 0.
double decay_factor(double start, double end, std::size_t iterations);
AdaptState initial_state(const SageConfig& config);
// alpha *= gamma1, temperature *= gamma2, k += 1. Requires k < K.
AdaptState schedule_step(AdaptState state, const SageConfig& config);

struct AdaptResult {
  Solution zero_shot;  // greedy multistart before any update
  Solution best;
  std::vector<HistoryRow> history;  // rows k = 0..K
  ParamSet eta;                     // adapter (SAGE/EAS)
  std::optional<Policy> tuned;      // private policy copy (active search)
};

// Adapts each instance independently; results depend only on (seed, position
// in `instances`, instance), never on batching or worker count. `transform`
// is the optional scale-conditioned embedding map (SAGE only).
std::vector<AdaptResult> adapt(std::span<const Instance> instances, const SageConfig& config,
                               const Policy& policy, const EmbeddingTransform& transform = {});

AdaptResult sage(const Instance& instance, const SageConfig& config, const Policy& policy,
                 const EmbeddingTransform& transform = {});
AdaptResult eas(const Instance& instance, const SageConfig& config, const Policy& policy);
AdaptResult active_search(const Instance& instance, const SageConfig& config,
                          const Policy& policy);

// Greedy multistart zero-shot solution under `config`'s starting schedule.
Solution zero_shot(const Instance& instance, const SageConfig& config, const Policy& policy,
                   const EmbeddingTransform& transform = {});

// Per-row loss coefficients on sampled log-probabilities: the shared-baseline
// policy gradient over each instance's samples, divided by their count, and
// -lambda on each instance's best sample when `imitate_best` is set. Returns
// the best row offset within each instance.
std::vector<std::size_t> adaptation_coefficients(Task task, const RolloutBatch& roll,
                                                 double lambda, bool imitate_best,
                                                 std::vector<double>& coef);

// Embeddings after adaptation: the adapter applied residually to the node
// embeddings, h + g_eta(h). Used as distillation targets.
ad::Tensor adapted_embeddings(const ParamSet& eta, const ad::Tensor& h);

// CSV header k,best_cost,mean_cost,alpha,temperature.
void write_history_csv(std::ostream& os, std::span<const HistoryRow> history);

}  // namespace routeadapt

#endif  // ROUTEADAPT_SAGE_HPP_
