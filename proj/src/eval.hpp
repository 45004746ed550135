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

// Reference heuristics, a tiny-instance exact solver and gap reporting.
// The heuristics stand in for external solvers, so absolute gaps against
// them are not comparable with published tables; only orderings are.

#ifndef ROUTEADAPT_EVAL_HPP_
#define ROUTEADAPT_EVAL_HPP_

#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "domain.hpp"

namespace routeadapt {

// Greedy nearest feasible node. TSP starts at node 0; CVRP returns to the
// depot when no customer fits. Deterministic (lowest index on ties).
Solution nearest_neighbor(const Instance& instance);

// First-improvement 2-opt on a TSP tour, at most `max_passes` sweeps.
Solution two_opt(const Instance& instance, const Solution& tour, std::size_t max_passes = 1000);

inline constexpr std::size_t kExactMaxTsp = 10;
inline constexpr std::size_t kExactMaxOther = 8;

// Global optimum by depth-first enumeration of feasible action sequences with
// bound pruning. Throws kSize above kExactMaxTsp / kExactMaxOther.
Solution exact_small(const Instance& instance);

// (obj - obj_b) / obj_b * 100 for minimisation. For maximisation the sign is
// flipped so that beating the baseline always reads as a negative gap.
double gap_percent(double obj, double obj_b, bool maximize = false);

struct MethodResult {
  std::string instance;
  std::string method;
  double obj = 0.0;
  double seconds = 0.0;
};

struct GapRow {
  std::string instance;
  std::string method;
  double obj = 0.0;
  double obj_b = 0.0;
  double gap_pct = 0.0;
  double seconds = 0.0;
};

struct GapSummary {
  std::string method;
  std::size_t count = 0;
  double mean_obj = 0.0;
  double mean_gap_pct = 0.0;
  double total_seconds = 0.0;
};

struct GapReport {
  std::vector<GapRow> rows;
  std::vector<GapSummary> summary;  // first-appearance order of methods
};

// Joins each run with the baseline row of the same instance id. Throws kJoin
// naming every id without a baseline.
GapReport gap_table(std::span<const MethodResult> runs, std::span<const MethodResult> baseline,
                    bool maximize = false);

// CSV with header instance,method,obj,obj_B,gap_pct,seconds.
void write_gap_csv(std::ostream& os, const GapReport& report);
void write_gap_summary_csv(std::ostream& os, const GapReport& report);

}  // namespace routeadapt

#endif  // ROUTEADAPT_EVAL_HPP_
