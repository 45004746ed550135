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

#include "sage.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "errors.hpp"
#include "instance_io.hpp"
#include "parallel.hpp"
#include "trainer.hpp"

namespace routeadapt {

namespace {

constexpr std::uint64_t kEtaTag = 0xE7A;
constexpr std::uint64_t kZeroShotTag = 0x2E50;

// Per-instance incumbent with the view it was sampled on.
struct Incumbent {
  Solution solution;
  std::size_t view = 0;
};

std::uint64_t instance_seed(const SageConfig& c, std::size_t index) {
  return derive_seed(c.seed, index);
}

bool all_zero(const std::vector<std::vector<double>>& grads) {
  for (const auto& g : grads) {
    for (double v : g) {
      if (v != 0.0) return false;
    }
  }
  return true;
}

void check_finite(const std::vector<std::vector<double>>& grads, double loss, std::size_t k,
                  std::size_t index) {
  bool ok = std::isfinite(loss);
  for (const auto& g : grads) {
    for (double v : g) ok = ok && std::isfinite(v);
  }
  if (!ok) {
    fail(ErrorCode::kAdaptationDiverged, "non-finite gradient at iteration " + std::to_string(k) +
                                             " (instance " + std::to_string(index) + ")");
  }
}

HistoryRow history_row(std::size_t k, const Incumbent& inc, std::span<const Solution> sols,
                       const AdaptState& state) {
  double mean = 0.0;
  for (const auto& s : sols) mean += s.objective;
  return HistoryRow{k, inc.solution.objective, mean / static_cast<double>(sols.size()),
                    state.alpha, state.temperature};
}

void take_better(Task task, Incumbent& inc, std::span<const Solution> sols, std::size_t per_view) {
  const std::size_t j = best_index(task, sols);
  if (better(task, sols[j].objective, inc.solution.objective)) {
    inc.solution = sols[j];
    inc.view = j / per_view;
  }
}

DecodeConfig greedy_decode(const SageConfig& c, std::span<const Instance> instances) {
  DecodeConfig d;
  d.mode = DecodeMode::kGreedy;
  d.alpha = c.alpha0;
  d.temperature = c.temp0;
  for (const auto& inst : instances) d.multistart = std::max(d.multistart, start_candidates(inst));
  d.augmentations = c.augmentations;
  return d;
}

DecodeConfig sample_decode(const SageConfig& c, const AdaptState& state) {
  DecodeConfig d;
  d.alpha = state.alpha;
  d.temperature = state.temperature;
  d.multistart = c.multistart;
  d.augmentations = c.augmentations;
  return d;
}

// SAGE / EAS on instances sharing a node count. `first` is the position of
// slice[0] in the caller's list.
void adapt_adapters(std::span<const Instance> slice, std::size_t first, const SageConfig& c,
                    const Policy& policy, const EmbeddingTransform& transform,
                    std::span<AdaptResult> out) {
  const std::size_t count = slice.size(), a_count = c.augmentations;
  const Task task = policy.config.task;
  const ParamView theta = policy.params.constant();
  const PreparedBatch batch = prepare(theta, policy.config, slice, a_count, transform);

  std::vector<ParamSet> etas;
  std::vector<Adam> adams;
  for (std::size_t i = 0; i < count; ++i) {
    etas.push_back(init_adapter(AdapterConfig{policy.config.embed_dim, c.adapter_hidden},
                                derive_seed(instance_seed(c, first + i), kEtaTag)));
    adams.emplace_back(c.delta);
  }
  AdaptState state = initial_state(c);

  // Zero-shot greedy pass (the adapters start as the identity).
  std::vector<Incumbent> inc(count);
  {
    std::vector<ParamView> views;
    for (const auto& e : etas) views.push_back(e.constant());
    std::vector<Rng> rngs;
    for (std::size_t i = 0; i < count; ++i) {
      rngs.emplace_back(derive_seed(instance_seed(c, first + i), kZeroShotTag));
    }
    const DecodeConfig d = greedy_decode(c, slice);
    const RolloutBatch roll = rollout(theta, policy.config, batch, d, views, rngs);
    for (std::size_t i = 0; i < count; ++i) {
      const auto sols = roll.of_instance(i);
      const std::size_t j = best_index(task, sols);
      inc[i] = Incumbent{sols[j], j / d.multistart};
      out[i].zero_shot = sols[j];
      out[i].history.push_back(history_row(0, inc[i], sols, state));
    }
  }

  std::vector<double> coef;
  for (std::size_t k = 1; k <= c.iterations; ++k) {
    ad::Tape tape;
    std::vector<ParamView> views;
    for (const auto& e : etas) views.push_back(e.bind(tape));
    std::vector<Rng> rngs;
    for (std::size_t i = 0; i < count; ++i) {
      rngs.emplace_back(derive_seed(instance_seed(c, first + i), k));
    }
    const DecodeConfig d = sample_decode(c, state);
    const RolloutBatch roll = rollout(theta, policy.config, batch, d, views, rngs);
    adaptation_coefficients(task, roll, c.lambda, !c.global_incumbent, coef);
    ad::Tensor loss =
        ad::sum(ad::mul(roll.log_probs, ad::Tensor(roll.log_probs.shape(), coef)));
    if (c.global_incumbent && c.lambda != 0.0) {
      // Imitate the incumbent (scored on the view where it was found),
      // falling back to this iteration's best when that is better.
      for (std::size_t i = 0; i < count; ++i) take_better(task, inc[i], roll.of_instance(i), c.multistart);
      std::vector<std::vector<std::size_t>> traj;
      std::vector<double> il(count * a_count, 0.0);
      for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t a = 0; a < a_count; ++a) traj.push_back(inc[i].solution.actions);
        il[i * a_count + inc[i].view] = -c.lambda;
      }
      const ad::Tensor lp = score_trajectories(theta, policy.config, batch, traj, d, views);
      loss = ad::add(loss, ad::sum(ad::mul(lp, ad::Tensor::vector(std::move(il)))));
    }
    const ad::Gradients grads = tape.backward(loss);
    for (std::size_t i = 0; i < count; ++i) {
      const auto g = views[i].gradients(grads);
      check_finite(g, loss.item(), k, first + i);
      // A zero gradient leaves the adapter untouched (no momentum drift).
      if (!all_zero(g)) adams[i].step(etas[i], g);
    }
    state = schedule_step(std::move(state), c);
    for (std::size_t i = 0; i < count; ++i) {
      const auto sols = roll.of_instance(i);
      take_better(task, inc[i], sols, c.multistart);
      out[i].history.push_back(history_row(k, inc[i], sols, state));
    }
  }
  for (std::size_t i = 0; i < count; ++i) {
    out[i].best = inc[i].solution;
    out[i].eta = std::move(etas[i]);
  }
}

AdaptResult adapt_active_search(const Instance& instance, std::size_t index, const SageConfig& c,
                                const Policy& policy) {
  AdaptResult out;
  Policy tuned = policy;
  Adam adam(c.delta);
  AdaptState state = initial_state(c);
  const Task task = policy.config.task;
  const std::span<const Instance> one(&instance, 1);
  Incumbent inc;
  {
    const ParamView theta = tuned.params.constant();
    const PreparedBatch batch = prepare(theta, tuned.config, one, c.augmentations);
    Rng rng(derive_seed(instance_seed(c, index), kZeroShotTag));
    const DecodeConfig d = greedy_decode(c, one);
    const RolloutBatch roll = rollout(theta, tuned.config, batch, d, {}, rng);
    const std::size_t j = best_index(task, roll.solutions);
    inc = Incumbent{roll.solutions[j], j / d.multistart};
    out.zero_shot = roll.solutions[j];
    out.history.push_back(history_row(0, inc, roll.solutions, state));
  }
  std::vector<double> coef;
  for (std::size_t k = 1; k <= c.iterations; ++k) {
    ad::Tape tape;
    const ParamView theta = tuned.params.bind(tape);
    const PreparedBatch batch = prepare(theta, tuned.config, one, c.augmentations);
    Rng rng(derive_seed(instance_seed(c, index), k));
    const DecodeConfig d = sample_decode(c, state);
    const RolloutBatch roll = rollout(theta, tuned.config, batch, d, {}, rng);
    adaptation_coefficients(task, roll, c.lambda, !c.global_incumbent, coef);
    ad::Tensor loss =
        ad::sum(ad::mul(roll.log_probs, ad::Tensor(roll.log_probs.shape(), coef)));
    if (c.global_incumbent && c.lambda != 0.0) {
      take_better(task, inc, roll.solutions, c.multistart);
      std::vector<std::vector<std::size_t>> traj(c.augmentations, inc.solution.actions);
      std::vector<double> il(c.augmentations, 0.0);
      il[inc.view] = -c.lambda;
      const ad::Tensor lp = score_trajectories(theta, tuned.config, batch, traj, d);
      loss = ad::add(loss, ad::sum(ad::mul(lp, ad::Tensor::vector(std::move(il)))));
    }
    const auto g = theta.gradients(tape.backward(loss));
    check_finite(g, loss.item(), k, index);
    if (!all_zero(g)) adam.step(tuned.params, g);
    state = schedule_step(std::move(state), c);
    take_better(task, inc, roll.solutions, c.multistart);
    out.history.push_back(history_row(k, inc, roll.solutions, state));
  }
  out.best = inc.solution;
  out.tuned = std::move(tuned);
  return out;
}

}  // namespace

std::string_view adapt_mode_name(AdaptMode mode) {
  switch (mode) {
    case AdaptMode::kSage: return "sage";
    case AdaptMode::kEas: return "eas";
    case AdaptMode::kActiveSearch: return "as";
  }
  return "?";
}

AdaptMode parse_adapt_mode(std::string_view name) {
  if (name == "sage") return AdaptMode::kSage;
  if (name == "eas") return AdaptMode::kEas;
  if (name == "as") return AdaptMode::kActiveSearch;
  fail(ErrorCode::kConfiguration, "unknown adaptation mode '" + std::string(name) +
                                      "' (expected sage, eas or as)");
}

void SageConfig::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorCode::kConfiguration, m); };
  if (multistart == 0) bad("multistart must be positive");
  if (augmentations == 0 || augmentations > 8) bad("augmentations must be in 1..8");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) bad("lambda must be non-negative");
  if (!(delta >= 0.0) || !std::isfinite(delta)) bad("delta must be non-negative");
  if (!(alpha0 >= 0.0) || !(alpha_k >= 0.0) || !std::isfinite(alpha0)) {
    bad("alpha endpoints must be non-negative");
  }
  if (alpha_k > alpha0) bad("alpha_k must not exceed alpha0");
  if ((alpha0 > 0.0) != (alpha_k > 0.0)) bad("alpha endpoints must both be positive or both zero");
  if (!(temp0 > 0.0) || !(temp_k > 0.0) || !std::isfinite(temp0)) {
    bad("temperature endpoints must be positive");
  }
  if (temp_k > temp0) bad("temp_k must not exceed temp0");
  if (batch_instances == 0) bad("batch_instances must be positive");
  if (adapter_hidden == 0) bad("adapter_hidden must be positive");
}

SageConfig effective_config(const SageConfig& config) {
  SageConfig c = config;
  if (c.mode != AdaptMode::kSage) {
    c.alpha0 = c.alpha_k = 0.0;
    c.temp0 = c.temp_k = 1.0;
  }
  return c;
}

double decay_factor(double start, double end, std::size_t iterations) {
  if (iterations == 0 || start == end) return 1.0;
  return std::pow(end / start, 1.0 / static_cast<double>(iterations));
}

AdaptState initial_state(const SageConfig& config) {
  AdaptState s;
  s.alpha = config.alpha0;
  s.temperature = config.temp0;
  s.gamma1 = decay_factor(config.alpha0, config.alpha_k, config.iterations);
  s.gamma2 = decay_factor(config.temp0, config.temp_k, config.iterations);
  return s;
}

AdaptState schedule_step(AdaptState state, const SageConfig& config) {
  if (state.k >= config.iterations) {
    fail(ErrorCode::kContract, "schedule already reached its final iteration");
  }
  state.alpha *= state.gamma1;
  state.temperature *= state.gamma2;
  ++state.k;
  return state;
}

std::vector<AdaptResult> adapt(std::span<const Instance> instances, const SageConfig& config,
                               const Policy& policy, const EmbeddingTransform& transform) {
  config.validate();
  if (transform && config.mode != AdaptMode::kSage) {
    fail(ErrorCode::kConfiguration, "the embedding transform is only used by sage mode");
  }
  for (const auto& inst : instances) {
    if (inst.task != policy.config.task) {
      fail(ErrorCode::kArgument, "instance task does not match the policy");
    }
    validate_instance(inst);
  }
  const SageConfig c = effective_config(config);
  std::vector<AdaptResult> out(instances.size());
  if (c.mode == AdaptMode::kActiveSearch) {
    parallel_for(instances.size(), c.workers, [&](std::size_t i) {
      out[i] = adapt_active_search(instances[i], i, c, policy);
    });
    return out;
  }
  std::vector<std::pair<std::size_t, std::size_t>> runs;
  for (std::size_t i = 0; i < instances.size();) {
    std::size_t j = i + 1;
    while (j < instances.size() && j - i < c.batch_instances &&
           instances[j].nodes() == instances[i].nodes()) {
      ++j;
    }
    runs.emplace_back(i, j);
    i = j;
  }
  parallel_for(runs.size(), c.workers, [&](std::size_t r) {
    const auto [lo, hi] = runs[r];
    adapt_adapters(instances.subspan(lo, hi - lo), lo, c, policy, transform,
                   std::span<AdaptResult>(out).subspan(lo, hi - lo));
  });
  return out;
}

AdaptResult sage(const Instance& instance, const SageConfig& config, const Policy& policy,
                 const EmbeddingTransform& transform) {
  SageConfig c = config;
  c.mode = AdaptMode::kSage;
  return std::move(adapt(std::span<const Instance>(&instance, 1), c, policy, transform)[0]);
}

AdaptResult eas(const Instance& instance, const SageConfig& config, const Policy& policy) {
  SageConfig c = config;
  c.mode = AdaptMode::kEas;
  return std::move(adapt(std::span<const Instance>(&instance, 1), c, policy)[0]);
}

AdaptResult active_search(const Instance& instance, const SageConfig& config,
                          const Policy& policy) {
  SageConfig c = config;
  c.mode = AdaptMode::kActiveSearch;
  return std::move(adapt(std::span<const Instance>(&instance, 1), c, policy)[0]);
}

Solution zero_shot(const Instance& instance, const SageConfig& config, const Policy& policy,
                   const EmbeddingTransform& transform) {
  SageConfig c = effective_config(config);
  c.iterations = 0;
  if (c.mode == AdaptMode::kActiveSearch) c.mode = AdaptMode::kEas;
  return adapt(std::span<const Instance>(&instance, 1), c, policy, transform)[0].zero_shot;
}

std::vector<std::size_t> adaptation_coefficients(Task task, const RolloutBatch& roll,
                                                 double lambda, bool imitate_best,
                                                 std::vector<double>& coef) {
  const std::size_t m = roll.per_instance;
  const std::size_t instances = roll.solutions.size() / m;
  coef.assign(roll.solutions.size(), 0.0);
  std::vector<std::size_t> best(instances);
  for (std::size_t i = 0; i < instances; ++i) {
    const auto sols = roll.of_instance(i);
    const auto rewards = rewards_of(task, sols);
    double b = 0.0;
    for (double r : rewards) b += r;
    b /= static_cast<double>(m);
    for (std::size_t j = 0; j < m; ++j) {
      coef[i * m + j] = -(rewards[j] - b) / static_cast<double>(m);
    }
    best[i] = best_index(task, sols);
    if (imitate_best) coef[i * m + best[i]] -= lambda;
  }
  return best;
}

ad::Tensor adapted_embeddings(const ParamSet& eta, const ad::Tensor& h) {
  return apply_adapter(eta.constant(), h);
}

void write_history_csv(std::ostream& os, std::span<const HistoryRow> history) {
  os << "k,best_cost,mean_cost,alpha,temperature\n";
  for (const auto& r : history) {
    os << r.k << ',' << format_double(r.best_cost) << ',' << format_double(r.mean_cost) << ','
       << format_double(r.alpha) << ',' << format_double(r.temperature) << '\n';
  }
}

}  // namespace routeadapt
