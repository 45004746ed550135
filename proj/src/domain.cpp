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

#include "domain.hpp"

#include <algorithm>
#include <cmath>

#include "rng.hpp"

namespace routeadapt {

namespace {

// Slack for comparisons against capacity/budget after float accumulation.
constexpr double kTolerance = 1e-9;

}  // namespace

std::string_view task_name(Task task) {
  switch (task) {
    case Task::kTsp: return "tsp";
    case Task::kCvrp: return "cvrp";
    case Task::kPctsp: return "pctsp";
    case Task::kOp: return "op";
  }
  return "?";
}

Task parse_task(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "tsp") return Task::kTsp;
  if (lower == "cvrp" || lower == "vrp") return Task::kCvrp;
  if (lower == "pctsp") return Task::kPctsp;
  if (lower == "op") return Task::kOp;
  fail(ErrorCode::kArgument, "unknown task '" + std::string(name) + "'");
}

bool has_depot(Task task) { return task != Task::kTsp; }
bool maximizes(Task task) { return task == Task::kOp; }

double distance(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

std::size_t Instance::problem_size() const {
  return has_depot(task) && !coords.empty() ? coords.size() - 1 : coords.size();
}

void validate_instance(const Instance& inst) {
  const std::size_t n = inst.nodes();
  if (n < 2) fail(ErrorCode::kArgument, "instance needs at least 2 nodes");
  for (const auto& p : inst.coords) {
    if (!(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0)) {
      fail(ErrorCode::kArgument, "coordinate outside the unit square");
    }
  }
  auto need = [&](const std::vector<double>& v, const char* what) {
    if (v.size() != n) {
      fail(ErrorCode::kArgument, std::string(task_name(inst.task)) + " needs " +
                                     std::to_string(n) + " " + what);
    }
  };
  switch (inst.task) {
    case Task::kTsp: break;
    case Task::kCvrp:
      need(inst.demands, "demands");
      if (!inst.capacity || !(*inst.capacity > 0.0)) {
        fail(ErrorCode::kArgument, "cvrp needs a positive capacity");
      }
      if (inst.demands[0] != 0.0) fail(ErrorCode::kArgument, "depot demand must be 0");
      for (std::size_t i = 1; i < n; ++i) {
        if (!(inst.demands[i] > 0.0 && inst.demands[i] <= 1.0)) {
          fail(ErrorCode::kArgument, "normalised demand of node " + std::to_string(i) +
                                         " outside (0,1]");
        }
      }
      break;
    case Task::kPctsp:
      need(inst.prizes, "prizes");
      need(inst.penalties, "penalties");
      if (!inst.min_prize || *inst.min_prize < 0.0) {
        fail(ErrorCode::kArgument, "pctsp needs a non-negative min_prize");
      }
      break;
    case Task::kOp:
      need(inst.prizes, "prizes");
      if (inst.prizes[0] != 0.0) fail(ErrorCode::kArgument, "op depot prize must be 0");
      if (!inst.max_length || !(*inst.max_length > 0.0)) {
        fail(ErrorCode::kArgument, "op needs a positive max_length");
      }
      break;
  }
}

double default_capacity(std::size_t n) {
  if (n == 100) return 50.0;
  return std::round(25.0 + static_cast<double>(n) / 20.0);
}

double default_max_length(std::size_t n) {
  return 4.0 * std::sqrt(static_cast<double>(n) / 100.0);
}

Instance generate(Task task, std::size_t n, std::uint64_t seed, const GenerateOptions& options) {
  const std::size_t nodes = has_depot(task) ? n + 1 : n;
  if (nodes < 2) fail(ErrorCode::kArgument, "problem size must give at least 2 nodes");
  Rng rng(seed);
  Instance inst;
  inst.task = task;
  inst.seed = seed;
  inst.coords.resize(nodes);
  for (auto& p : inst.coords) {
    p.x = rng.uniform();
    p.y = rng.uniform();
  }
  switch (task) {
    case Task::kTsp: break;
    case Task::kCvrp: {
      const double capacity = options.capacity.value_or(default_capacity(n));
      inst.capacity = capacity;
      inst.demands.assign(nodes, 0.0);
      for (std::size_t i = 1; i < nodes; ++i) {
        inst.demands[i] = static_cast<double>(rng.integer(1, 9)) / capacity;
      }
      break;
    }
    case Task::kPctsp: {
      inst.prizes.assign(nodes, 0.0);
      inst.penalties.assign(nodes, 0.0);
      // Prizes average 1/4 so the expected total is N/4.
      for (std::size_t i = 1; i < nodes; ++i) inst.prizes[i] = rng.uniform(0.0, 0.5);
      for (std::size_t i = 1; i < nodes; ++i) inst.penalties[i] = rng.uniform();
      inst.min_prize = options.min_prize.value_or(kDefaultMinPrize);
      break;
    }
    case Task::kOp: {
      inst.prizes.assign(nodes, 0.0);
      double far = 0.0;
      for (std::size_t i = 1; i < nodes; ++i) {
        far = std::max(far, distance(inst.coords[0], inst.coords[i]));
      }
      for (std::size_t i = 1; i < nodes; ++i) {
        const double ratio = far > 0.0 ? distance(inst.coords[0], inst.coords[i]) / far : 0.0;
        inst.prizes[i] = (1.0 + std::floor(99.0 * ratio)) / 100.0;
      }
      inst.max_length = options.max_length.value_or(default_max_length(n));
      break;
    }
  }
  return inst;
}

double reward_of(Task task, double objective) { return maximizes(task) ? objective : -objective; }

bool better(Task task, double a, double b) { return maximizes(task) ? a > b : a < b; }

double route_length(const Instance& inst, std::span<const std::size_t> actions) {
  if (actions.empty()) return 0.0;
  double total = 0.0;
  if (inst.task == Task::kTsp) {
    for (std::size_t i = 0; i < actions.size(); ++i) {
      total += distance(inst.coords[actions[i]], inst.coords[actions[(i + 1) % actions.size()]]);
    }
    return total;
  }
  std::size_t prev = 0;
  for (std::size_t a : actions) {
    total += distance(inst.coords[prev], inst.coords[a]);
    prev = a;
  }
  return total + distance(inst.coords[prev], inst.coords[0]);
}

std::optional<std::string> find_violation(const Instance& inst,
                                          std::span<const std::size_t> actions) {
  const std::size_t n = inst.nodes();
  std::vector<int> seen(n, 0);
  for (std::size_t a : actions) {
    if (a >= n) return "action " + std::to_string(a) + " out of range";
    ++seen[a];
  }
  if (inst.task == Task::kTsp) {
    for (std::size_t i = 0; i < n; ++i) {
      if (seen[i] != 1) return "tour is not a permutation (node " + std::to_string(i) + ")";
    }
    return std::nullopt;
  }
  for (std::size_t i = 1; i < n; ++i) {
    if (seen[i] > 1) return "customer " + std::to_string(i) + " visited twice";
  }
  if (actions.empty() || actions.back() != 0) return "route must end at the depot";
  switch (inst.task) {
    case Task::kCvrp: {
      for (std::size_t i = 1; i < n; ++i) {
        if (seen[i] != 1) return "customer " + std::to_string(i) + " not served";
      }
      double load = 0.0;
      for (std::size_t a : actions) {
        if (a == 0) {
          load = 0.0;
          continue;
        }
        load += inst.demands[a];
        if (load > 1.0 + kTolerance) return "capacity exceeded on a sub-route";
      }
      break;
    }
    case Task::kOp: {
      if (seen[0] != 1) return "op route returns to the depot more than once";
      if (route_length(inst, actions) > *inst.max_length + kTolerance) {
        return "route length exceeds max_length";
      }
      break;
    }
    case Task::kPctsp: {
      if (seen[0] != 1) return "pctsp route returns to the depot more than once";
      double prize = 0.0;
      bool all = true;
      for (std::size_t i = 1; i < n; ++i) {
        if (seen[i]) {
          prize += inst.prizes[i];
        } else {
          all = false;
        }
      }
      if (!all && prize < *inst.min_prize - kTolerance) return "collected prize below min_prize";
      break;
    }
    case Task::kTsp: break;
  }
  return std::nullopt;
}

double objective(const Instance& inst, std::span<const std::size_t> actions) {
  if (auto v = find_violation(inst, actions)) fail(ErrorCode::kFeasibilityViolation, *v);
  switch (inst.task) {
    case Task::kTsp:
    case Task::kCvrp: return route_length(inst, actions);
    case Task::kPctsp: {
      std::vector<std::uint8_t> seen(inst.nodes(), 0);
      for (std::size_t a : actions) seen[a] = 1;
      double cost = route_length(inst, actions);
      for (std::size_t i = 1; i < inst.nodes(); ++i) {
        if (!seen[i]) cost += inst.penalties[i];
      }
      return cost;
    }
    case Task::kOp: {
      double prize = 0.0;
      for (std::size_t a : actions) prize += inst.prizes[a];
      return prize;
    }
  }
  return 0.0;
}

Solution make_solution(const Instance& inst, std::vector<std::size_t> actions) {
  Solution s;
  s.objective = objective(inst, actions);
  s.feasible = true;
  s.actions = std::move(actions);
  return s;
}

// ---- RolloutState ------------------------------------------------------------

RolloutState::RolloutState(std::shared_ptr<const Instance> instance)
    : instance_(std::move(instance)) {
  const std::size_t n = instance_->nodes();
  visited_.assign(n, 0);
  partial_.reserve(n + 8);
  if (has_depot(instance_->task)) {
    current_ = 0;
    unvisited_ = n - 1;
  } else {
    unvisited_ = n;
  }
}

std::size_t RolloutState::first() const {
  if (has_depot(instance_->task)) return 0;
  return partial_.empty() ? kNoNode : partial_.front();
}

bool RolloutState::terminal() const {
  if (instance_->task == Task::kTsp) return unvisited_ == 0;
  return closed_;
}

std::vector<std::uint8_t> RolloutState::feasible_mask() const {
  std::vector<std::uint8_t> mask(instance_->nodes());
  feasible_mask(mask);
  return mask;
}

void RolloutState::feasible_mask(std::span<std::uint8_t> out) const {
  if (terminal()) fail(ErrorCode::kContract, "feasible_mask on a terminal state");
  const Instance& inst = *instance_;
  const std::size_t n = inst.nodes();
  switch (inst.task) {
    case Task::kTsp:
      for (std::size_t i = 0; i < n; ++i) out[i] = visited_[i] ? 0 : 1;
      return;
    case Task::kCvrp:
      for (std::size_t i = 1; i < n; ++i) {
        out[i] = !visited_[i] && inst.demands[i] <= remaining_capacity_ + kTolerance;
      }
      out[0] = current_ != 0;
      return;
    case Task::kOp: {
      const double budget = *inst.max_length;
      bool any = false;
      for (std::size_t i = 1; i < n; ++i) {
        const bool ok = !visited_[i] &&
                        traveled_length_ + distance(inst.coords[current_], inst.coords[i]) +
                                distance(inst.coords[i], inst.coords[0]) <=
                            budget;
        out[i] = ok;
        any = any || ok;
      }
      out[0] = current_ != 0 || !any;
      return;
    }
    case Task::kPctsp:
      for (std::size_t i = 1; i < n; ++i) out[i] = !visited_[i];
      out[0] = unvisited_ == 0 || collected_prize_ >= *inst.min_prize - kTolerance;
      return;
  }
}

void RolloutState::step(std::size_t action) {
  const Instance& inst = *instance_;
  if (terminal()) fail(ErrorCode::kContract, "step on a terminal state");
  if (action >= inst.nodes()) {
    fail(ErrorCode::kFeasibilityViolation, "action " + std::to_string(action) + " out of range");
  }
  const auto mask = feasible_mask();
  if (!mask[action]) {
    std::string why = "node " + std::to_string(action) + " is not allowed";
    if (action != 0 || inst.task == Task::kTsp) {
      if (visited_[action]) {
        why = "node " + std::to_string(action) + " already visited";
      } else if (inst.task == Task::kCvrp) {
        why = "capacity: demand of node " + std::to_string(action) +
              " exceeds remaining capacity";
      } else if (inst.task == Task::kOp) {
        why = "max_length: visiting node " + std::to_string(action) +
              " and returning exceeds the route budget";
      }
    } else if (inst.task == Task::kCvrp) {
      why = "depot: empty sub-route";
    } else if (inst.task == Task::kPctsp) {
      why = "min_prize: cannot return before collecting the minimum prize";
    } else {
      why = "depot: route has not left the depot";
    }
    fail(ErrorCode::kFeasibilityViolation, why);
  }
  if (current_ != kNoNode) {
    traveled_length_ += distance(inst.coords[current_], inst.coords[action]);
  }
  partial_.push_back(action);
  const bool depot = has_depot(inst.task) && action == 0;
  if (!depot) {
    visited_[action] = 1;
    --unvisited_;
    if (inst.task == Task::kCvrp) {
      remaining_capacity_ = std::max(0.0, remaining_capacity_ - inst.demands[action]);
    }
    if (!inst.prizes.empty()) collected_prize_ += inst.prizes[action];
  } else {
    visited_[0] = 1;
    if (inst.task == Task::kCvrp) {
      remaining_capacity_ = 1.0;
      closed_ = unvisited_ == 0;
    } else {
      closed_ = true;
    }
  }
  current_ = action;
}

std::vector<double> RolloutState::locality_distances() const {
  std::vector<double> out(instance_->nodes());
  locality_distances(out);
  return out;
}

void RolloutState::locality_distances(std::span<double> out) const {
  const Instance& inst = *instance_;
  if (current_ == kNoNode) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  const Point& here = inst.coords[current_];
  const bool depot_task = has_depot(inst.task);
  for (std::size_t i = 0; i < inst.nodes(); ++i) {
    const bool done = visited_[i] && !(depot_task && i == 0);
    out[i] = done ? 0.0 : distance(here, inst.coords[i]);
  }
}

Solution RolloutState::to_solution() const {
  if (!terminal()) fail(ErrorCode::kContract, "to_solution on an unfinished rollout");
  return make_solution(*instance_, partial_);
}

RolloutState replay(std::shared_ptr<const Instance> instance,
                    std::span<const std::size_t> actions) {
  RolloutState state(std::move(instance));
  for (std::size_t a : actions) state.step(a);
  return state;
}

}  // namespace routeadapt
