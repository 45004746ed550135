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

#include "eval.hpp"

#include <algorithm>
#include <map>
#include <memory>
#include <numeric>

#include "errors.hpp"
#include "instance_io.hpp"

namespace routeadapt {

Solution nearest_neighbor(const Instance& inst) {
  if (inst.task != Task::kTsp && inst.task != Task::kCvrp) {
    fail(ErrorCode::kUnsupportedFeature, "nearest_neighbor supports tsp and cvrp only");
  }
  validate_instance(inst);
  RolloutState s(std::make_shared<const Instance>(inst));
  if (inst.task == Task::kTsp) s.step(0);
  while (!s.terminal()) {
    const auto mask = s.feasible_mask();
    const Point& here = inst.coords[s.current()];
    std::size_t pick = kNoNode;
    double best = 0.0;
    for (std::size_t j = 0; j < mask.size(); ++j) {
      if (!mask[j] || (inst.task == Task::kCvrp && j == 0)) continue;
      const double d = distance(here, inst.coords[j]);
      if (pick == kNoNode || d < best) {
        pick = j;
        best = d;
      }
    }
    s.step(pick == kNoNode ? 0 : pick);
  }
  return make_solution(inst, s.partial());
}

Solution two_opt(const Instance& inst, const Solution& tour, std::size_t max_passes) {
  if (inst.task != Task::kTsp) fail(ErrorCode::kUnsupportedFeature, "two_opt expects a tsp tour");
  std::vector<std::size_t> t = tour.actions;
  if (auto v = find_violation(inst, t)) fail(ErrorCode::kFeasibilityViolation, *v);
  const std::size_t n = t.size();
  auto d = [&](std::size_t a, std::size_t b) { return distance(inst.coords[a], inst.coords[b]); };
  for (std::size_t pass = 0; pass < max_passes; ++pass) {
    bool improved = false;
    for (std::size_t i = 0; i + 2 < n; ++i) {
      for (std::size_t j = i + 2; j < n; ++j) {
        const std::size_t a = t[i], b = t[i + 1], c = t[j], e = t[(j + 1) % n];
        if (a == e) continue;
        const double delta = d(a, c) + d(b, e) - d(a, b) - d(c, e);
        if (delta < -1e-12) {
          std::reverse(t.begin() + static_cast<std::ptrdiff_t>(i + 1),
                       t.begin() + static_cast<std::ptrdiff_t>(j + 1));
          improved = true;
        }
      }
    }
    if (!improved) break;
  }
  return make_solution(inst, std::move(t));
}

namespace {

class ExactSearch {
 public:
  explicit ExactSearch(const Instance& inst) : inst_(inst), max_(maximizes(inst.task)) {}

  Solution run() {
    RolloutState root(std::make_shared<const Instance>(inst_));
    if (inst_.task == Task::kTsp) root.step(0);  // tours are rotation invariant
    walk(root);
    return make_solution(inst_, best_actions_);
  }

 private:
  // Optimistic completion value of a partial state.
  double bound(const RolloutState& s) const {
    if (max_) {
      double b = s.collected_prize();
      for (std::size_t i = 1; i < inst_.nodes(); ++i) {
        if (!s.visited()[i]) b += inst_.prizes[i];
      }
      return b;
    }
    return s.traveled_length() + distance(inst_.coords[s.current()], inst_.coords[s.first()]);
  }

  bool hopeless(const RolloutState& s) const {
    if (!have_best_) return false;
    return max_ ? bound(s) <= best_ : bound(s) >= best_;
  }

  void walk(const RolloutState& s) {
    if (s.terminal()) {
      const double value = objective(inst_, s.partial());
      if (!have_best_ || better(inst_.task, value, best_)) {
        have_best_ = true;
        best_ = value;
        best_actions_ = s.partial();
      }
      return;
    }
    if (hopeless(s)) return;
    const auto mask = s.feasible_mask();
    // Nearest first so good incumbents appear early.
    std::vector<std::size_t> order;
    for (std::size_t j = 0; j < mask.size(); ++j) {
      if (mask[j]) order.push_back(j);
    }
    const Point& here = inst_.coords[s.current()];
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return distance(here, inst_.coords[a]) < distance(here, inst_.coords[b]);
    });
    for (std::size_t j : order) {
      RolloutState next = s;
      next.step(j);
      walk(next);
    }
  }

  const Instance& inst_;
  const bool max_;
  bool have_best_ = false;
  double best_ = 0.0;
  std::vector<std::size_t> best_actions_;
};

}  // namespace

Solution exact_small(const Instance& inst) {
  validate_instance(inst);
  const std::size_t limit = inst.task == Task::kTsp ? kExactMaxTsp : kExactMaxOther;
  if (inst.problem_size() > limit) {
    fail(ErrorCode::kSize, "exact_small supports at most " + std::to_string(limit) + " nodes for " +
                               std::string(task_name(inst.task)) + ", got " +
                               std::to_string(inst.problem_size()));
  }
  return ExactSearch(inst).run();
}

double gap_percent(double obj, double obj_b, bool maximize) {
  if (obj_b == 0.0) fail(ErrorCode::kDomain, "gap undefined for a zero baseline objective");
  const double gap = (obj - obj_b) / obj_b * 100.0;
  return maximize ? -gap : gap;
}

GapReport gap_table(std::span<const MethodResult> runs, std::span<const MethodResult> baseline,
                    bool maximize) {
  std::map<std::string, double> base;
  for (const auto& b : baseline) {
    if (!base.emplace(b.instance, b.obj).second) {
      fail(ErrorCode::kJoin, "duplicate baseline id " + b.instance);
    }
  }
  std::vector<std::string> missing;
  for (const auto& r : runs) {
    if (!base.count(r.instance) &&
        std::find(missing.begin(), missing.end(), r.instance) == missing.end()) {
      missing.push_back(r.instance);
    }
  }
  if (!missing.empty()) {
    std::string msg = "no baseline for instance ids:";
    for (const auto& id : missing) msg += " " + id;
    fail(ErrorCode::kJoin, msg);
  }
  GapReport report;
  for (const auto& r : runs) {
    GapRow row{r.instance, r.method, r.obj, base.at(r.instance), 0.0, r.seconds};
    row.gap_pct = gap_percent(row.obj, row.obj_b, maximize);
    report.rows.push_back(row);
    auto it = std::find_if(report.summary.begin(), report.summary.end(),
                           [&](const GapSummary& s) { return s.method == r.method; });
    if (it == report.summary.end()) {
      report.summary.push_back(GapSummary{r.method});
      it = report.summary.end() - 1;
    }
    ++it->count;
    it->mean_obj += row.obj;
    it->mean_gap_pct += row.gap_pct;
    it->total_seconds += row.seconds;
  }
  for (auto& s : report.summary) {
    s.mean_obj /= static_cast<double>(s.count);
    s.mean_gap_pct /= static_cast<double>(s.count);
  }
  return report;
}

void write_gap_csv(std::ostream& os, const GapReport& report) {
  os << "instance,method,obj,obj_B,gap_pct,seconds\n";
  for (const auto& r : report.rows) {
    os << r.instance << ',' << r.method << ',' << format_double(r.obj) << ','
       << format_double(r.obj_b) << ',' << format_double(r.gap_pct) << ','
       << format_double(r.seconds) << '\n';
  }
}

void write_gap_summary_csv(std::ostream& os, const GapReport& report) {
  os << "method,count,mean_obj,mean_gap_pct,total_seconds\n";
  for (const auto& s : report.summary) {
    os << s.method << ',' << s.count << ',' << format_double(s.mean_obj) << ','
       << format_double(s.mean_gap_pct) << ',' << format_double(s.total_seconds) << '\n';
  }
}

}  // namespace routeadapt
