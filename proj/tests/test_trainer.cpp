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

#include <cmath>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "gradient_oracle.hpp"
#include "policy_oracles.hpp"
#include "test_util.hpp"
#include "trainer.hpp"

namespace {

using namespace routeadapt;
using routeadapt::testing::code_of;
namespace rt = routeadapt::testing;

TrainConfig tiny_config() {
  TrainConfig c;
  c.task = Task::kTsp;
  c.n_train = 8;
  c.batch_instances = 6;
  c.multistart = 8;
  c.epochs = 1;
  c.steps_per_epoch = 3;
  c.learning_rate = 1e-3;
  c.seed = 5;
  c.policy = rt::small_policy_config(Task::kTsp);
  c.chunk_instances = 2;
  return c;
}

}  // namespace

TEST_CASE("configuration is validated") {
  TrainConfig c = tiny_config();
  c.batch_instances = 0;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kConfiguration);
  c = tiny_config();
  c.learning_rate = 0.0;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kConfiguration);
  c = tiny_config();
  c.policy.heads = 3;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kConfiguration);
}

TEST_CASE("shared-baseline surrogate weights each row by its advantage") {
  ad::Tape tape;
  const ad::Tensor lp = tape.leaf(ad::Tensor::vector({-1.0, -2.0, -0.5, -0.7}));
  const std::vector<double> rewards = {1.0, 3.0, 5.0, 5.0};
  const ad::Tensor loss = reinforce_surrogate(lp, rewards, 2);
  const ad::Tensor g = tape.backward(loss).of(lp);
  // Group means 2 and 5, four rows.
  CHECK(g[0] == doctest::Approx(0.25));
  CHECK(g[1] == doctest::Approx(-0.25));
  CHECK(g[2] == 0.0);
  CHECK(g[3] == 0.0);
  CHECK(code_of([&] { reinforce_surrogate(lp, rewards, 3); }) == ErrorCode::kDimension);
}

TEST_CASE("equal rewards contribute zero gradient and leave parameters unchanged") {
  TrainConfig c = tiny_config();
  c.multistart = 3;
  Policy p = Policy::init(c.policy, 3);
  const std::uint64_t before = p.params.checksum();
  std::vector<Instance> batch = {rt::exact_triangle(), rt::exact_triangle()};
  Adam adam(1e-2);
  const TrainLogRow row = train_step(p, adam, c, batch, 7, 1);
  CHECK(row.loss == 0.0);
  CHECK(p.params.checksum() == before);
}

TEST_CASE("a zero learning rate leaves parameters bit-identical") {
  const TrainConfig c = tiny_config();
  Policy p = Policy::init(c.policy, 3);
  const std::uint64_t before = p.params.checksum();
  std::vector<Instance> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(generate(Task::kTsp, 8, 10 + i));
  Adam adam(0.0);
  train_step(p, adam, c, batch, 7, 1);
  CHECK(p.params.checksum() == before);
}

TEST_CASE("exhaustive policy gradient equals the shared-baseline estimator on 4-node TSP") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Policy p = Policy::init(rt::small_policy_config(Task::kTsp), 40 + seed);
    const Instance inst = generate(Task::kTsp, 4, seed);
    const rt::GradientComparison cmp = rt::exhaustive_gradient_check(p, inst);
    CHECK(cmp.trajectories == 24);
    CHECK(cmp.max_abs_diff < 1e-6);
    CHECK(cmp.gradient_norm > 1e-4);  // non-trivial gradient
  }
}

TEST_CASE("gradients do not depend on the worker count") {
  TrainConfig c = tiny_config();
  std::vector<Instance> batch;
  for (int i = 0; i < 5; ++i) batch.push_back(generate(Task::kTsp, 8, 20 + i));
  Policy a = Policy::init(c.policy, 1);
  Policy b = a;
  Adam adam_a(1e-3), adam_b(1e-3);
  c.workers = 1;
  const TrainLogRow ra = train_step(a, adam_a, c, batch, 9, 1);
  c.workers = 3;
  const TrainLogRow rb = train_step(b, adam_b, c, batch, 9, 1);
  CHECK(ra.loss == rb.loss);
  CHECK(ra.mean_cost == rb.mean_cost);
  CHECK(a.params.checksum() == b.params.checksum());
}

TEST_CASE("a non-finite parameter raises a divergence error naming the step") {
  const TrainConfig c = tiny_config();
  Policy p = Policy::init(c.policy, 1);
  ad::Tensor w = p.params.get("dec.wl");
  std::vector<double> v = w.values();
  v[0] = std::numeric_limits<double>::quiet_NaN();
  p.params.set("dec.wl", ad::Tensor(w.shape(), v));
  std::vector<Instance> batch = {generate(Task::kTsp, 8, 1)};
  Adam adam(1e-3);
  try {
    train_step(p, adam, c, batch, 1, 17);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kTrainingDiverged);
    CHECK(std::string(e.what()).find("step 17") != std::string::npos);
  }
}

TEST_CASE("short training lowers the sampled cost and reruns are identical") {
  TrainConfig c = tiny_config();
  c.n_train = 10;
  c.batch_instances = 16;
  c.multistart = 10;
  c.steps_per_epoch = 20;
  c.epochs = 3;
  c.chunk_instances = 8;
  c.policy.embed_dim = 16;
  c.policy.heads = 4;
  c.policy.ff_dim = 32;
  const TrainResult r = pretrain(c);
  REQUIRE(r.log.size() == 60);
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    first += r.log[i].mean_cost;
    last += r.log[50 + i].mean_cost;
    CHECK(std::isfinite(r.log[i].loss));
  }
  CHECK(last < first);
  CHECK(r.log.back().epoch == 3);

  c.epochs = 1;
  std::ostringstream a, b;
  write_train_log(a, pretrain(c).log);
  write_train_log(b, pretrain(c).log);
  CHECK(a.str() == b.str());
  CHECK(a.str().rfind("epoch,step,mean_cost,loss\n1,1,", 0) == 0);
}

TEST_CASE("validation reports gaps and requires a baseline when asked") {
  const Policy p = Policy::init(rt::small_policy_config(Task::kTsp), 2);
  std::vector<Instance> data = {generate(Task::kTsp, 6, 1), generate(Task::kTsp, 6, 2),
                                generate(Task::kTsp, 7, 3)};
  const ValidationReport plain = validate(p, data);
  REQUIRE(plain.objectives.size() == 3);
  CHECK(!plain.mean_gap_pct);
  CHECK(code_of([&] { validate(p, data, {}, true); }) == ErrorCode::kConfiguration);
  const ValidationReport self = validate(p, data, plain.objectives, true);
  CHECK(*self.mean_gap_pct == 0.0);
  std::vector<double> short_column = {1.0};
  CHECK(code_of([&] { validate(p, data, short_column); }) == ErrorCode::kConfiguration);
  CHECK(code_of([&] { validate(p, {}); }) == ErrorCode::kArgument);
}
