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

// Attention encoder-decoder routing policy.
//
// The encoder is a stack of multi-head self-attention layers with instance
// normalisation. The decoder builds a contextual query from the mean node
// embedding, the depot (or first node) embedding and the last node's
// embedding, refines it with a masked multi-head glimpse, optionally adds a
// residual adapter output, and scores candidates with a clipped tanh
// compatibility. A locality penalty proportional to the distance from the
// current node is subtracted before the tempered softmax.

#ifndef ROUTEADAPT_POLICY_HPP_
#define ROUTEADAPT_POLICY_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "autodiff.hpp"
#include "domain.hpp"
#include "params.hpp"
#include "rng.hpp"

namespace routeadapt {

struct PolicyConfig {
  Task task = Task::kTsp;
  std::size_t embed_dim = 128;
  std::size_t heads = 8;
  std::size_t layers = 3;
  std::size_t ff_dim = 512;
  double clip_c = 10.0;

  std::size_t key_dim() const { return embed_dim / heads; }
  void validate() const;
};

// Static node features per task.
std::size_t node_feature_count(Task task);
// Dynamic decoder context features per task (remaining capacity, remaining
// route budget, prize still to collect).
std::size_t context_feature_count(Task task);

struct Policy {
  PolicyConfig config;
  ParamSet params;

  static Policy init(const PolicyConfig& config, std::uint64_t seed);
};

// Checkpoints carry the architecture as "meta.*" scalars next to the weights.
void save_policy(const Policy& policy, const std::filesystem::path& path);
Policy load_policy(const std::filesystem::path& path);

struct Embeddings {
  ad::Tensor h;       // [N x d]
  ad::Tensor h_mean;  // [1 x d]
};

Embeddings encode(const ParamView& theta, const PolicyConfig& config, const Instance& instance);

// Encodes equally sized instances in one stacked pass: [G*N x d].
ad::Tensor encode_stacked(const ParamView& theta, const PolicyConfig& config,
                          std::span<const std::shared_ptr<const Instance>> instances);

// One of the eight symmetries of the unit square; payloads are unchanged.
Instance augment(const Instance& instance, std::size_t index);

enum class DecodeMode { kSample, kGreedy };

struct DecodeConfig {
  double temperature = 1.0;
  double alpha = 0.0;
  DecodeMode mode = DecodeMode::kSample;
  std::size_t multistart = 1;
  std::size_t augmentations = 1;

  void validate() const;
};

// Residual adapter applied to the glimpse query: q <- q + g(q).
struct AdapterConfig {
  std::size_t width = 128;
  std::size_t hidden = 128;
};
ParamSet init_adapter(const AdapterConfig& config, std::uint64_t seed);
// q + relu(q W1 + b1) W2 + b2
ad::Tensor apply_adapter(const ParamView& eta, const ad::Tensor& q);
// Row block i of `q` (rows_per_instance rows each) goes through adapter i.
// A single adapter is shared by every row.
ad::Tensor apply_adapters(std::span<const ParamView> etas, const ad::Tensor& q,
                          std::size_t rows_per_instance);

// Optional hook between the encoder and the decoder (scale meta-learner).
// Receives the stacked node embeddings and the shared problem size.
using EmbeddingTransform = std::function<ad::Tensor(const ad::Tensor& h, std::size_t n)>;

// Encoder output for G = instances x augmentations views sharing a node
// count, ordered instance-major, with the decoder projections cached.
struct PreparedBatch {
  std::vector<std::shared_ptr<const Instance>> views;
  std::size_t instances = 0;
  std::size_t augmentations = 1;
  std::size_t nodes = 0;
  ad::Tensor h;                         // [G*N x d]
  ad::Tensor h_mean;                    // [G x d]
  std::vector<ad::Tensor> head_keys;    // H x [G*N x dk]
  std::vector<ad::Tensor> head_values;  // H x [G*N x dk]
  ad::Tensor logit_keys;                // [G*N x d]

  std::size_t groups() const { return views.size(); }
  const Instance& original(std::size_t i) const { return *views[i * augmentations]; }
};

PreparedBatch prepare(const ParamView& theta, const PolicyConfig& config,
                      std::span<const Instance> instances, std::size_t augmentations,
                      const EmbeddingTransform& transform = {});
PreparedBatch prepare(const ParamView& theta, const PolicyConfig& config,
                      const Instance& instance, std::size_t augmentations,
                      const EmbeddingTransform& transform = {});

struct StepOutput {
  ad::Tensor log_probs;            // [B x N], tape-tracked when parameters are
  std::vector<double> probs;       // [B x N]
  std::vector<std::uint8_t> mask;  // [B x N]
};

// Action distribution for each state (one row per state). `states` holds an
// equal number of rows per view, view-major. Terminal states get a single
// open entry at node 0 so they contribute an exact zero log-probability.
// `adapters` is empty, a single shared adapter, or one per instance.
StepOutput decode_step(const ParamView& theta, const PolicyConfig& config,
                       const PreparedBatch& batch, std::span<const RolloutState> states,
                       const DecodeConfig& decode, std::span<const ParamView> adapters = {});

struct RolloutBatch {
  // instances x augmentations x multistart solutions, instance-major.
  std::vector<Solution> solutions;
  // Sum over decoded steps of log p(a_t | s_t), one entry per solution.
  ad::Tensor log_probs;
  std::size_t per_instance = 0;

  std::span<const Solution> of_instance(std::size_t i) const {
    return std::span<const Solution>(solutions).subspan(i * per_instance, per_instance);
  }
};

// Start nodes for POMO-style multistart: all candidates when they fit into
// `count`, otherwise a random subset; cycled when `count` exceeds them.
std::vector<std::size_t> start_nodes(const Instance& instance, std::size_t count, Rng& rng);

// Decodes `decode.multistart` trajectories per view. Start nodes are drawn
// once per instance and shared by its augmentations.
RolloutBatch rollout(const ParamView& theta, const PolicyConfig& config,
                     const PreparedBatch& batch, const DecodeConfig& decode,
                     std::span<const ParamView> adapters, Rng& rng);
// As above with one generator per instance, so each instance's draws do not
// depend on the rest of the batch.
RolloutBatch rollout(const ParamView& theta, const PolicyConfig& config,
                     const PreparedBatch& batch, const DecodeConfig& decode,
                     std::span<const ParamView> adapters, std::span<Rng> rngs);

// Teacher-forced log-probabilities of complete trajectories, an equal number
// per view and view-major. The first action of each trajectory is the forced
// start and is not scored.
ad::Tensor score_trajectories(const ParamView& theta, const PolicyConfig& config,
                              const PreparedBatch& batch,
                              std::span<const std::vector<std::size_t>> trajectories,
                              const DecodeConfig& decode,
                              std::span<const ParamView> adapters = {});

// Index of the best solution (lowest index on ties).
std::size_t best_index(Task task, std::span<const Solution> solutions);

// Distinct start nodes: every city for TSP, every initially feasible
// customer otherwise.
std::size_t start_candidates(const Instance& instance);

struct GreedyOptions {
  std::size_t starts = 0;  // 0 = every start candidate
  std::size_t augmentations = 1;
  double alpha = 0.0;
  std::size_t batch_size = 32;
  std::size_t workers = 1;
  std::uint64_t seed = 0;  // only used when starts are subsampled
};

// Best greedy multistart solution per instance over starts and
// augmentations. Consecutive instances with equal node counts share a pass.
std::vector<Solution> solve_greedy(const ParamView& theta, const PolicyConfig& config,
                                   std::span<const Instance> instances,
                                   const GreedyOptions& options = {},
                                   const EmbeddingTransform& transform = {});

}  // namespace routeadapt

#endif  // ROUTEADAPT_POLICY_HPP_
