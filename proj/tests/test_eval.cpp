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
#include <functional>
#include <memory>
#include <sstream>

#include "doctest.h"
#include "eval.hpp"
#include "test_util.hpp"

namespace {

using namespace routeadapt;
using routeadapt::testing::code_of;

// Unpruned enumeration of every feasible complete sequence.
double brute_force_optimum(const Instance& inst) {
  bool have = false;
  double best = 0.0;
  std::function<void(const RolloutState&)> walk = [&](const RolloutState& s) {
    if (s.terminal()) {
      const double v = objective(inst, s.partial());
      if (!have || better(inst.task, v, best)) best = v;
      have = true;
      return;
    }
    const auto mask = s.feasible_mask();
    for (std::size_t j = 0; j < mask.size(); ++j) {
      if (!mask[j]) continue;
      RolloutState next = s;
      next.step(j);
      walk(next);
    }
  };
  walk(RolloutState(std::make_shared<const Instance>(inst)));
  return best;
}

Instance tsp_of(std::vector<Point> pts) {
  Instance inst;
  inst.task = Task::kTsp;
  inst.coords = std::move(pts);
  return inst;
}

}  // namespace

TEST_CASE("nearest neighbor walks collinear points in order") {
  const Instance inst = tsp_of({{0.0, 0.5}, {0.25, 0.5}, {0.5, 0.5}});
  const Solution s = nearest_neighbor(inst);
  CHECK(s.actions == std::vector<std::size_t>{0, 1, 2});
  CHECK(s.objective == doctest::Approx(1.0));
}

TEST_CASE("nearest neighbor respects CVRP capacity and never beats the optimum") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const Instance cvrp = generate(Task::kCvrp, 12, seed);
    const Solution s = nearest_neighbor(cvrp);
    CHECK(s.feasible);
    CHECK(!find_violation(cvrp, s.actions));
    const Instance tsp = generate(Task::kTsp, 8, seed);
    CHECK(nearest_neighbor(tsp).objective >= exact_small(tsp).objective - 1e-12);
  }
  CHECK(code_of([] { nearest_neighbor(generate(Task::kOp, 5, 1)); }) ==
        ErrorCode::kUnsupportedFeature);
}

TEST_CASE("two-opt keeps optimal tours, fixes crossings and never worsens") {
  const Instance square = tsp_of({{0, 0}, {1, 0}, {1, 1}, {0, 1}});
  const Solution opt = make_solution(square, {0, 1, 2, 3});
  CHECK(two_opt(square, opt).actions == opt.actions);
  const Solution crossed = make_solution(square, {0, 2, 1, 3});
  CHECK(crossed.objective > 4.5);
  CHECK(two_opt(square, crossed, 1).objective == doctest::Approx(4.0));

  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Instance inst = generate(Task::kTsp, 30, seed);
    const Solution nn = nearest_neighbor(inst);
    const Solution improved = two_opt(inst, nn);
    CHECK(improved.objective <= nn.objective + 1e-12);
    // Idempotent at a local optimum.
    CHECK(two_opt(inst, improved).actions == improved.actions);
  }
}

TEST_CASE("exact solver matches unpruned enumeration on every task") {
  CHECK(exact_small(tsp_of({{0, 0}, {1, 0}, {1, 1}, {0, 1}})).objective == doctest::Approx(4.0));
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    for (Task task : {Task::kTsp, Task::kCvrp, Task::kPctsp, Task::kOp}) {
      const Instance inst = generate(task, task == Task::kTsp ? 7 : 5, 100 + seed);
      const Solution s = exact_small(inst);
      CHECK(s.feasible);
      CHECK(s.objective == doctest::Approx(brute_force_optimum(inst)).epsilon(1e-12));
    }
  }
}

TEST_CASE("exact solver lower-bounds the heuristics and enforces its size limit") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Instance tsp = generate(Task::kTsp, 10, seed);
    const double opt = exact_small(tsp).objective;
    CHECK(two_opt(tsp, nearest_neighbor(tsp)).objective >= opt - 1e-12);
    const Instance cvrp = generate(Task::kCvrp, 7, seed);
    CHECK(nearest_neighbor(cvrp).objective >= exact_small(cvrp).objective - 1e-12);
  }
  CHECK(code_of([] { exact_small(generate(Task::kTsp, 11, 1)); }) == ErrorCode::kSize);
  CHECK(code_of([] { exact_small(generate(Task::kOp, 9, 1)); }) == ErrorCode::kSize);
}

TEST_CASE("gap metric reproduces published spot values") {
  CHECK(gap_percent(11.0, 10.0) == doctest::Approx(10.0));
  CHECK(gap_percent(7.5, 7.5) == 0.0);
  CHECK(std::round(gap_percent(22.001, 22.003) * 1000.0) / 1000.0 == doctest::Approx(-0.009));
  CHECK(std::abs(gap_percent(10.729, 10.687) - 0.39) <= 0.01);
  CHECK(std::round(gap_percent(98.762, 97.323, true) * 1000.0) / 1000.0 ==
        doctest::Approx(-1.479));
  CHECK(code_of([] { gap_percent(1.0, 0.0); }) == ErrorCode::kDomain);
}

TEST_CASE("gap table joins on instance ids") {
  const std::vector<MethodResult> base = {{"a", "nn", 10.0, 0.0}, {"b", "nn", 20.0, 0.0}};
  const std::vector<MethodResult> runs = {
      {"a", "sage", 9.0, 1.5}, {"b", "sage", 21.0, 2.5}, {"a", "eas", 10.0, 1.0}};
  const GapReport r = gap_table(runs, base);
  REQUIRE(r.rows.size() == 3);
  CHECK(r.rows[0].gap_pct == doctest::Approx(-10.0));
  CHECK(r.rows[1].gap_pct == doctest::Approx(5.0));
  CHECK(r.rows[2].gap_pct == 0.0);
  REQUIRE(r.summary.size() == 2);
  CHECK(r.summary[0].method == "sage");
  CHECK(r.summary[0].mean_gap_pct == doctest::Approx(-2.5));
  CHECK(r.summary[0].total_seconds == doctest::Approx(4.0));

  // The baseline against itself is exactly zero.
  for (const auto& row : gap_table(base, base).rows) CHECK(row.gap_pct == 0.0);

  const std::vector<MethodResult> orphan = {{"c", "sage", 1.0, 0.0}, {"d", "sage", 1.0, 0.0}};
  try {
    gap_table(orphan, base);
    FAIL("expected a join error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kJoin);
    CHECK(std::string(e.what()).find("c d") != std::string::npos);
  }

  std::ostringstream os;
  write_gap_csv(os, r);
  CHECK(os.str().rfind("instance,method,obj,obj_B,gap_pct,seconds\na,sage,9,10,-10,1.5\n", 0) ==
        0);
}
