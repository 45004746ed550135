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

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "policy_oracles.hpp"
#include "sage.hpp"
#include "test_util.hpp"

namespace {

using namespace routeadapt;
using routeadapt::testing::code_of;
namespace rt = routeadapt::testing;

SageConfig quick_config() {
  SageConfig c;
  c.iterations = 6;
  c.multistart = 6;
  c.augmentations = 2;
  c.adapter_hidden = 8;
  c.delta = 1e-2;
  c.seed = 3;
  c.batch_instances = 4;
  return c;
}

std::vector<double> best_curve(const AdaptResult& r) {
  std::vector<double> v;
  for (const auto& h : r.history) v.push_back(h.best_cost);
  return v;
}

std::vector<double> mean_curve(const AdaptResult& r) {
  std::vector<double> v;
  for (const auto& h : r.history) v.push_back(h.mean_cost);
  return v;
}

}  // namespace

TEST_CASE("schedule endpoints and monotonicity") {
  SageConfig c;
  c.iterations = 200;
  AdaptState s = initial_state(c);
  CHECK(s.gamma1 == doctest::Approx(0.993998).epsilon(1e-6));
  std::vector<double> alphas = {s.alpha}, temps = {s.temperature};
  while (s.k < c.iterations) {
    s = schedule_step(s, c);
    alphas.push_back(s.alpha);
    temps.push_back(s.temperature);
  }
  CHECK(std::abs(s.alpha - 0.3) < 1e-9);
  CHECK(std::abs(s.temperature - 0.3) < 1e-9);
  for (std::size_t i = 1; i < alphas.size(); ++i) {
    CHECK(alphas[i] < alphas[i - 1]);
    CHECK(temps[i] < temps[i - 1]);
  }
  CHECK(code_of([&] { schedule_step(s, c); }) == ErrorCode::kContract);

  c.alpha_k = c.alpha0 = 0.5;
  const AdaptState flat = schedule_step(initial_state(c), c);
  CHECK(flat.gamma1 == 1.0);
  CHECK(flat.alpha == 0.5);
  CHECK(decay_factor(1.0, 0.3, 0) == 1.0);
}

TEST_CASE("configuration invariants") {
  SageConfig c = quick_config();
  c.alpha_k = 2.0;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kConfiguration);
  c = quick_config();
  c.temp_k = 0.0;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kConfiguration);
  c = quick_config();
  c.lambda = -1.0;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kConfiguration);
  c = quick_config();
  c.augmentations = 9;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kConfiguration);
  CHECK(parse_adapt_mode("eas") == AdaptMode::kEas);
  CHECK(code_of([] { parse_adapt_mode("sgbs"); }) == ErrorCode::kConfiguration);

  const Policy p = Policy::init(rt::small_policy_config(Task::kTsp), 1);
  const Instance inst = generate(Task::kTsp, 6, 1);
  const EmbeddingTransform identity = [](const ad::Tensor& h, std::size_t) { return h; };
  CHECK(code_of([&] { eas(inst, quick_config(), p); }) == ErrorCode::kOk);
  SageConfig e = quick_config();
  e.mode = AdaptMode::kEas;
  CHECK(code_of([&] { adapt(std::span<const Instance>(&inst, 1), e, p, identity); }) ==
        ErrorCode::kConfiguration);
  CHECK(code_of([&] { sage(generate(Task::kCvrp, 5, 1), quick_config(), p); }) ==
        ErrorCode::kArgument);
}

TEST_CASE("zero iterations return the zero-shot solution with an untouched adapter") {
  const Policy p = Policy::init(rt::small_policy_config(Task::kTsp), 2);
  const Instance inst = generate(Task::kTsp, 9, 4);
  SageConfig c = quick_config();
  c.iterations = 0;
  const AdaptResult r = sage(inst, c, p);
  CHECK(r.best.objective == r.zero_shot.objective);
  CHECK(r.best.actions == r.zero_shot.actions);
  REQUIRE(r.history.size() == 1);
  CHECK(r.history[0].k == 0);
  for (double v : r.eta.get("eta.l2.w").values()) CHECK(v == 0.0);
  CHECK(zero_shot(inst, c, p).objective == r.zero_shot.objective);
}

TEST_CASE("equal rewards without imitation leave the adapter unchanged") {
  const Policy p = Policy::init(rt::small_policy_config(Task::kTsp), 2);
  const Instance inst = rt::exact_triangle();
  SageConfig c = quick_config();
  c.lambda = 0.0;
  SageConfig none = c;
  none.iterations = 0;
  CHECK(sage(inst, c, p).eta.checksum() == sage(inst, none, p).eta.checksum());
  // With imitation on, the adapter does move.
  c.lambda = 0.5;
  CHECK(sage(inst, c, p).eta.checksum() != sage(inst, none, p).eta.checksum());
}

TEST_CASE("incumbent is monotone for every mode and task") {
  for (Task task : {Task::kTsp, Task::kCvrp, Task::kPctsp, Task::kOp}) {
    const Policy p = Policy::init(rt::small_policy_config(task), 5);
    std::vector<Instance> insts = {generate(task, 8, 1), generate(task, 8, 2)};
    for (AdaptMode mode : {AdaptMode::kSage, AdaptMode::kEas, AdaptMode::kActiveSearch}) {
      SageConfig c = quick_config();
      c.mode = mode;
      for (const AdaptResult& r : adapt(insts, c, p)) {
        REQUIRE(r.history.size() == c.iterations + 1);
        for (std::size_t k = 1; k < r.history.size(); ++k) {
          CHECK(!better(task, r.history[k - 1].best_cost, r.history[k].best_cost));
          CHECK(r.history[k].k == k);
        }
        CHECK(r.best.objective == r.history.back().best_cost);
        CHECK(r.best.feasible);
        CHECK(!better(task, r.zero_shot.objective, r.best.objective));
      }
    }
  }
}

TEST_CASE("sage with the schedule switched off reproduces eas bit for bit") {
  const Policy p = Policy::init(rt::small_policy_config(Task::kCvrp), 6);
  std::vector<Instance> insts = {generate(Task::kCvrp, 9, 1), generate(Task::kCvrp, 9, 2)};
  SageConfig s = quick_config();
  s.alpha0 = s.alpha_k = 0.0;
  s.temp0 = s.temp_k = 1.0;
  SageConfig e = quick_config();
  e.mode = AdaptMode::kEas;
  const auto a = adapt(insts, s, p);
  const auto b = adapt(insts, e, p);
  for (std::size_t i = 0; i < insts.size(); ++i) {
    CHECK(best_curve(a[i]) == best_curve(b[i]));
    CHECK(mean_curve(a[i]) == mean_curve(b[i]));
    CHECK(a[i].eta.checksum() == b[i].eta.checksum());
  }
}

TEST_CASE("results do not depend on batch composition or workers") {
  const Policy p = Policy::init(rt::small_policy_config(Task::kTsp), 7);
  const Instance a = generate(Task::kTsp, 10, 1);
  std::vector<Instance> ab = {a, generate(Task::kTsp, 10, 2), generate(Task::kTsp, 10, 3)};
  std::vector<Instance> ac = {a, generate(Task::kTsp, 10, 9), generate(Task::kTsp, 10, 8)};
  const std::uint64_t before = p.params.checksum();
  for (AdaptMode mode : {AdaptMode::kSage, AdaptMode::kActiveSearch}) {
    SageConfig c = quick_config();
    c.mode = mode;
    const auto r1 = adapt(ab, c, p);
    const auto r2 = adapt(ac, c, p);
    CHECK(best_curve(r1[0]) == best_curve(r2[0]));
    for (std::size_t k = 0; k < r1[0].history.size(); ++k) {
      CHECK(std::abs(r1[0].history[k].mean_cost - r2[0].history[k].mean_cost) < 1e-12);
    }
    c.batch_instances = 1;
    c.workers = 3;
    const auto r3 = adapt(ab, c, p);
    for (std::size_t i = 0; i < ab.size(); ++i) {
      for (std::size_t k = 0; k < r1[i].history.size(); ++k) {
        CHECK(std::abs(r1[i].history[k].mean_cost - r3[i].history[k].mean_cost) < 1e-12);
        CHECK(r1[i].history[k].best_cost == r3[i].history[k].best_cost);
      }
    }
  }
  CHECK(p.params.checksum() == before);
}

TEST_CASE("active search with a zero learning rate samples like the frozen policy") {
  const Policy p = Policy::init(rt::small_policy_config(Task::kTsp), 8);
  const Instance inst = generate(Task::kTsp, 9, 5);
  SageConfig c = quick_config();
  c.delta = 0.0;
  const AdaptResult as = active_search(inst, c, p);
  const AdaptResult frozen = eas(inst, c, p);
  REQUIRE(as.history.size() == frozen.history.size());
  for (std::size_t k = 0; k < as.history.size(); ++k) {
    CHECK(std::abs(as.history[k].mean_cost - frozen.history[k].mean_cost) < 1e-12);
  }
  REQUIRE(as.tuned);
  CHECK(as.tuned->params.checksum() == p.params.checksum());
  // With a learning rate the private copy moves and the original does not.
  c.delta = 1e-2;
  const std::uint64_t before = p.params.checksum();
  const AdaptResult moved = active_search(inst, c, p);
  CHECK(moved.tuned->params.checksum() != before);
  CHECK(p.params.checksum() == before);
}

TEST_CASE("one imitation step raises the best trajectory's log-probability") {
  const Policy p = Policy::init(rt::small_policy_config(Task::kTsp), 9);
  const auto theta = p.params.constant();
  std::size_t raised = 0, trials = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const Instance inst = generate(Task::kTsp, 10, 50 + seed);
    const PreparedBatch batch = prepare(theta, p.config, inst, 1);
    ParamSet eta = init_adapter(AdapterConfig{p.config.embed_dim, 8}, seed);
    DecodeConfig d;
    d.multistart = 8;
    Rng rng(seed);
    const std::vector<ParamView> frozen = {eta.constant()};
    const RolloutBatch roll = rollout(theta, p.config, batch, d, frozen, rng);
    const std::vector<std::vector<std::size_t>> best = {
        roll.solutions[best_index(Task::kTsp, roll.solutions)].actions};
    auto score = [&](const ParamSet& e) {
      const std::vector<ParamView> v = {e.constant()};
      return score_trajectories(theta, p.config, batch, best, d, v)[0];
    };
    const double before = score(eta);
    ad::Tape tape;
    const std::vector<ParamView> bound = {eta.bind(tape)};
    const ad::Tensor lp = score_trajectories(theta, p.config, batch, best, d, bound);
    const ad::Tensor loss = ad::scale(ad::sum(lp), -0.005);
    Adam adam(1e-3);
    adam.step(eta, bound[0].gradients(tape.backward(loss)));
    raised += score(eta) > before ? 1 : 0;
    ++trials;
  }
  CHECK(static_cast<double>(raised) >= 0.95 * static_cast<double>(trials));
}

TEST_CASE("non-finite weights raise an adaptation divergence error") {
  Policy p = Policy::init(rt::small_policy_config(Task::kTsp), 10);
  ad::Tensor w = p.params.get("dec.wl");
  std::vector<double> v = w.values();
  for (double& x : v) x = std::numeric_limits<double>::quiet_NaN();
  p.params.set("dec.wl", ad::Tensor(w.shape(), v));
  try {
    sage(generate(Task::kTsp, 6, 1), quick_config(), p);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kAdaptationDiverged);
    CHECK(std::string(e.what()).find("iteration 1") != std::string::npos);
  }
}

TEST_CASE("global incumbent imitation runs and keeps monotonicity") {
  const Policy p = Policy::init(rt::small_policy_config(Task::kOp), 11);
  SageConfig c = quick_config();
  c.global_incumbent = true;
  c.lambda = 0.1;
  std::vector<Instance> insts = {generate(Task::kOp, 9, 1), generate(Task::kOp, 9, 2)};
  for (AdaptMode mode : {AdaptMode::kSage, AdaptMode::kActiveSearch}) {
    c.mode = mode;
    for (const auto& r : adapt(insts, c, p)) {
      for (std::size_t k = 1; k < r.history.size(); ++k) {
        CHECK(r.history[k].best_cost >= r.history[k - 1].best_cost);
      }
    }
  }
}

TEST_CASE("history CSV and adapted embeddings") {
  const Policy p = Policy::init(rt::small_policy_config(Task::kTsp), 12);
  const AdaptResult r = sage(generate(Task::kTsp, 7, 1), quick_config(), p);
  std::ostringstream os;
  write_history_csv(os, r.history);
  const std::string csv = os.str();
  CHECK(csv.rfind("k,best_cost,mean_cost,alpha,temperature\n0,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 8);
  CHECK(r.history.back().alpha == doctest::Approx(0.3));

  const ParamSet fresh = init_adapter(AdapterConfig{p.config.embed_dim, 8}, 1);
  const ad::Tensor h = encode(p.params.constant(), p.config, generate(Task::kTsp, 7, 1)).h;
  CHECK(adapted_embeddings(fresh, h).values() == h.values());
  CHECK(adapted_embeddings(r.eta, h).values() != h.values());
}
