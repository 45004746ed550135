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

// Routing problems (TSP, CVRP, PCTSP, OP): instances, generation, the
// constructive rollout state with its feasibility mask, and objectives.
//
// Action conventions:
//  * TSP: a permutation of 0..N-1; the tour closes back to the first node.
//  * CVRP/PCTSP/OP: node 0 is the depot and the vehicle starts there
//    implicitly. Actions list every node visited afterwards and end with a
//    return to the depot (0). CVRP may return to the depot mid-route.

#ifndef ROUTEADAPT_DOMAIN_HPP_
#define ROUTEADAPT_DOMAIN_HPP_

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"

namespace routeadapt {

enum class Task { kTsp, kCvrp, kPctsp, kOp };

std::string_view task_name(Task task);
Task parse_task(std::string_view name);
bool has_depot(Task task);
// OP maximises collected prize; every other task minimises cost.
bool maximizes(Task task);

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

double distance(const Point& a, const Point& b);

struct Instance {
  Task task = Task::kTsp;
  std::vector<Point> coords;
  // Per-node payloads; empty when the task does not use them.
  std::vector<double> demands;    // CVRP, normalised by capacity
  std::vector<double> prizes;     // PCTSP, OP
  std::vector<double> penalties;  // PCTSP
  std::optional<double> capacity;    // CVRP, raw vehicle capacity
  std::optional<double> max_length;  // OP
  std::optional<double> min_prize;   // PCTSP
  std::uint64_t seed = 0;
  // Set for instances read from library files: original = scale * unit-square
  // length, original coordinate = offset + scale * unit coordinate.
  double scale = 1.0;
  Point offset;
  std::string name;

  std::size_t nodes() const { return coords.size(); }
  // Problem scale N: customers for depot tasks, cities for TSP.
  std::size_t problem_size() const;
  bool operator==(const Instance&) const = default;
};

// Throws kArgument with the violated invariant.
void validate_instance(const Instance& instance);

struct GenerateOptions {
  // Overrides for the task defaults; unset means "use the default rule".
  std::optional<double> capacity;
  std::optional<double> max_length;
  std::optional<double> min_prize;
};

// Default CVRP capacity for `n` customers: 50 at n = 100, otherwise
// round(25 + n / 20).
double default_capacity(std::size_t n);
// Default OP route budget: 4 * sqrt(n / 100).
double default_max_length(std::size_t n);
inline constexpr double kDefaultMinPrize = 1.0;

// `n` is the problem size (customers for depot tasks). Deterministic in seed.
Instance generate(Task task, std::size_t n, std::uint64_t seed,
                  const GenerateOptions& options = {});

struct Solution {
  std::vector<std::size_t> actions;
  // Natural objective: tour cost for TSP/CVRP/PCTSP, collected prize for OP.
  double objective = 0.0;
  bool feasible = false;
};

// Reward as maximised by the policy: -cost, or prize for OP.
double reward_of(Task task, double objective);
// True when objective `a` is strictly better than `b` for `task`.
bool better(Task task, double a, double b);

// Returns the first violated constraint, or nullopt for a feasible sequence.
std::optional<std::string> find_violation(const Instance& instance,
                                          std::span<const std::size_t> actions);
// Throws kFeasibilityViolation for infeasible sequences.
double objective(const Instance& instance, std::span<const std::size_t> actions);
Solution make_solution(const Instance& instance, std::vector<std::size_t> actions);

// Length of the closed route implied by `actions`.
double route_length(const Instance& instance, std::span<const std::size_t> actions);

inline constexpr std::size_t kNoNode = static_cast<std::size_t>(-1);

class RolloutState {
 public:
  explicit RolloutState(std::shared_ptr<const Instance> instance);

  const Instance& instance() const { return *instance_; }
  const std::vector<std::uint8_t>& visited() const { return visited_; }
  const std::vector<std::size_t>& partial() const { return partial_; }
  // kNoNode before the first TSP action.
  std::size_t current() const { return current_; }
  // First node of the trajectory (TSP) or depot.
  std::size_t first() const;
  double remaining_capacity() const { return remaining_capacity_; }
  double collected_prize() const { return collected_prize_; }
  double traveled_length() const { return traveled_length_; }
  std::size_t unvisited_customers() const { return unvisited_; }

  bool terminal() const;
  // 1 for allowed actions; throws kContract on a terminal state.
  std::vector<std::uint8_t> feasible_mask() const;
  void feasible_mask(std::span<std::uint8_t> out) const;
  // Throws kFeasibilityViolation naming the constraint.
  void step(std::size_t action);
  // Distance from the current node to every node; zeros before the first
  // action. Visited customers report 0.
  std::vector<double> locality_distances() const;
  void locality_distances(std::span<double> out) const;

  Solution to_solution() const;

 private:
  std::shared_ptr<const Instance> instance_;
  std::vector<std::uint8_t> visited_;
  std::vector<std::size_t> partial_;
  std::size_t current_ = kNoNode;
  double remaining_capacity_ = 1.0;
  double collected_prize_ = 0.0;
  double traveled_length_ = 0.0;
  std::size_t unvisited_ = 0;
  bool closed_ = false;
};

// Applies `actions` from the initial state; throws on the first infeasible
// step.
RolloutState replay(std::shared_ptr<const Instance> instance,
                    std::span<const std::size_t> actions);

}  // namespace routeadapt

#endif  // ROUTEADAPT_DOMAIN_HPP_
