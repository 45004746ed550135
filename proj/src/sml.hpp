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

// Scale meta-learner. A small network maps the problem size to an embedding
// offset and refines every node embedding residually:
//
//   h_S = h + combiner(h + scale_encoder(n / 100))
//
// The combiner's last layer starts at zero, so an untrained learner is the
// identity. Training mixes distillation towards embeddings adapted by SAGE
// with the zero-shot adaptation objective through the frozen policy.

#ifndef ROUTEADAPT_SML_HPP_
#define ROUTEADAPT_SML_HPP_

#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "policy.hpp"
#include "sage.hpp"

namespace routeadapt {

struct SmlConfig {
  std::size_t width = 128;   // must equal the policy embedding width
  std::size_t hidden = 128;
};

ParamSet init_sml(const SmlConfig& config, std::uint64_t seed);

// Width of the stored learner (columns of the combiner output).
std::size_t sml_width(const ParamSet& phi);

// Per-node map; `n` is the problem size. Throws kConfiguration on a width
// mismatch and kArgument for n < 2.
ad::Tensor apply_sml(const ParamView& phi, const ad::Tensor& h, std::size_t n);

// Hook for `prepare`. With `n_override`, the learner is told that size
// instead of the real one.
EmbeddingTransform sml_transform(const ParamView& phi,
                                 std::optional<std::size_t> n_override = std::nullopt);

struct DistillRecord {
  std::size_t id = 0;
  std::size_t n = 0;    // problem size
  ad::Tensor source;    // [nodes x d] encoder output
  ad::Tensor target;    // [nodes x d] adapter applied to `source`
};

struct DistillConfig {
  std::vector<std::size_t> scales = {30, 40, 50};
  std::size_t per_scale = 200;  // L
  SageConfig sage;              // iterations default to 50 below
  std::uint64_t seed = 7;

  DistillConfig() { sage.iterations = 50; }
};

// Adapts `per_scale` fresh instances per scale with SAGE (no learner) and
// stores (h, h + g_eta(h)). Errors are annotated with the record id.
std::vector<DistillRecord> build_distill_set(const Policy& policy, const DistillConfig& config);

// Instances used for record `id` (reproducible from the config).
Instance distill_instance(Task task, const DistillConfig& config, std::size_t id);

// One container file per scale plus manifest.json in `dir`.
void save_distill_set(const std::filesystem::path& dir, std::span<const DistillRecord> records,
                      const DistillConfig& config, Task task);
std::vector<DistillRecord> load_distill_set(const std::filesystem::path& dir);

// Mean over records of || apply_sml(h) - target || (Frobenius norm of the
// node-embedding matrix). Non-negative, zero iff every output matches.
ad::Tensor j_distil(const ParamView& phi, std::span<const DistillRecord> records);

// Frobenius distance between two embedding matrices.
double embedding_distance(const ad::Tensor& a, const ad::Tensor& b);

struct ZeroShotObjective {
  ad::Tensor loss;         // surrogate whose gradient ascends J_RL + lambda J_IL
  double mean_cost = 0.0;  // mean sampled objective
};

// Adaptation objective at iteration 0 with the learner in front of the frozen
// policy and no adapter: the sampling schedule sits at its start values.
// `instances` must share a node count.
ZeroShotObjective j_zero(const ParamView& phi, const Policy& policy,
                         std::span<const Instance> instances, const SageConfig& sage,
                         std::uint64_t seed);

struct SmlTrainConfig {
  double beta = 1.0;
  double learning_rate = 1e-3;
  std::size_t epochs = 20;
  std::size_t distil_batch = 32;   // records per step
  std::size_t zero_batch = 8;      // fresh instances per step for j_zero
  SageConfig sage;                 // M, lambda and the start schedule for j_zero
  std::uint64_t seed = 11;
  SmlConfig network;
};

struct SmlLogRow {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double distil = 0.0;
  double zero_cost = 0.0;
};

struct SmlResult {
  ParamSet phi;
  std::vector<SmlLogRow> log;
};

// Adam on J_distil + beta J_zero over shuffled record mini-batches. Records
// and the policy are never modified. Throws kTrainingDiverged with the epoch.
SmlResult train_sml(const Policy& policy, std::span<const DistillRecord> records,
                    const SmlTrainConfig& config);

// CSV header epoch,step,distil,zero_cost.
void write_sml_log(std::ostream& os, std::span<const SmlLogRow> rows);

}  // namespace routeadapt

#endif  // ROUTEADAPT_SML_HPP_
