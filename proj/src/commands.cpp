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

#include "commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>

#include "errors.hpp"
#include "instance_io.hpp"
#include "rng.hpp"

namespace routeadapt {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

class Stopwatch {
 public:
  Stopwatch() : wall_(std::chrono::steady_clock::now()), cpu_(std::clock()) {}
  double wall() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_).count();
  }
  double cpu() const { return static_cast<double>(std::clock() - cpu_) / CLOCKS_PER_SEC; }

 private:
  std::chrono::steady_clock::time_point wall_;
  std::clock_t cpu_;
};

// Output directory, snapshot and log shared by every command.
class RunContext {
 public:
  RunContext(const RunConfig& config, std::string_view command, const LogSink& sink)
      : config_(config), sink_(sink) {
    out_ = config.get_string("run.out");
    if (out_.empty()) fail(ErrorCode::kConfiguration, "run.out must not be empty");
    std::error_code ec;
    fs::create_directories(out_, ec);
    if (ec) fail(ErrorCode::kIo, "cannot create " + out_.string() + ": " + ec.message());
    RunConfig snapshot = config;
    snapshot.set("run.command", command);
    write_text(out_ / "config.toml", snapshot.to_toml());
    log_.open(out_ / "log.txt", std::ios::trunc);
    if (!log_) fail(ErrorCode::kIo, "cannot write " + (out_ / "log.txt").string());
    const std::string t = config.get_string("run.timings");
    if (t != "none" && t != "wall") {
      fail(ErrorCode::kConfiguration, "run.timings must be none or wall, not " + t);
    }
    wall_timings_ = t == "wall";
    log(std::string(command) + ": writing to " + out_.string());
  }

  const fs::path& out() const { return out_; }
  const RunConfig& config() const { return config_; }

  void log(const std::string& line) {
    log_ << line << '\n';
    log_.flush();
    if (sink_) sink_(line);
  }

  // Seconds for CSV columns: zero unless wall timings were requested.
  double seconds(double wall) const { return wall_timings_ ? wall : 0.0; }

  void write_csv(const std::string& name, const std::function<void(std::ostream&)>& body) {
    std::ostringstream os;
    body(os);
    write_text(out_ / name, os.str());
  }

  void write_json(const std::string& name, const json& value) {
    write_text(out_ / name, value.dump(2) + "\n");
  }

 private:
  const RunConfig& config_;
  LogSink sink_;
  fs::path out_;
  std::ofstream log_;
  bool wall_timings_ = false;
};

fs::path required_path(const RunConfig& config, std::string_view key, std::string_view what,
                       std::string_view flag) {
  const std::string p = config.get_string(key);
  if (p.empty()) {
    fail(ErrorCode::kConfiguration, std::string(what) + " is required: set " + std::string(key) +
                                        " or pass " + std::string(flag));
  }
  if (!fs::exists(p)) {
    fail(ErrorCode::kIo, std::string(what) + " not found at expected path " + p);
  }
  return p;
}

Policy load_checked_policy(const RunConfig& config) {
  const Policy policy =
      load_policy(required_path(config, "paths.policy", "policy checkpoint", "--policy"));
  const Task task = config_task(config);
  if (policy.config.task != task) {
    fail(ErrorCode::kConfiguration, "checkpoint is a " + std::string(task_name(policy.config.task)) +
                                        " policy but run.task is " +
                                        std::string(task_name(task)));
  }
  return policy;
}

InstanceFormat config_format(const RunConfig& config) {
  try {
    return parse_format(config.get_string("run.format"));
  } catch (const Error& e) {
    fail(ErrorCode::kConfiguration, std::string("run.format: ") + e.what());
  }
}

std::vector<NamedInstance> load_task_instances(const RunConfig& config) {
  auto set = load_instance_set(required_path(config, "paths.instances", "instances", "--instances"),
                               config_format(config));
  const Task task = config_task(config);
  for (const auto& ni : set) {
    if (ni.instance.task != task) {
      fail(ErrorCode::kConfiguration, "instance " + ni.id + " is " +
                                          std::string(task_name(ni.instance.task)) +
                                          " but run.task is " + std::string(task_name(task)));
    }
  }
  return set;
}

std::vector<Instance> plain(std::span<const NamedInstance> set) {
  std::vector<Instance> out;
  for (const auto& ni : set) out.push_back(ni.instance);
  return out;
}

void check_feasible(const NamedInstance& ni, const Solution& s, std::string_view method) {
  if (const auto v = find_violation(ni.instance, s.actions)) {
    fail(ErrorCode::kFeasibilityViolation,
         std::string(method) + " produced an infeasible solution on " + ni.id + ": " + *v);
  }
}

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// ---------------------------------------------------------------------------

void cmd_gen(RunContext& run) {
  const RunConfig& c = run.config();
  const Task task = config_task(c);
  const std::size_t n = c.get_size("gen.n");
  const std::size_t count = c.get_size("gen.count");
  const InstanceFormat format = config_format(c);
  const auto seed = static_cast<std::uint64_t>(c.get_int("run.seed"));
  if (n < 2) fail(ErrorCode::kConfiguration, "gen.n must be at least 2");
  if (format == InstanceFormat::kLib && task != Task::kTsp && task != Task::kCvrp) {
    fail(ErrorCode::kUnsupportedFeature,
         "library format holds TSP and CVRP only, not " + std::string(task_name(task)));
  }
  const std::string ext = format == InstanceFormat::kNative ? ".json"
                          : task == Task::kTsp              ? ".tsp"
                                                            : ".vrp";
  json manifest = {{"task", std::string(task_name(task))},
                   {"n", n},
                   {"count", count},
                   {"seed", seed},
                   {"format", c.get_string("run.format")},
                   {"instances", json::array()}};
  for (std::size_t i = 0; i < count; ++i) {
    char id[64];
    std::snprintf(id, sizeof id, "%s_n%zu_%04zu", std::string(task_name(task)).c_str(), n, i);
    const std::uint64_t s = derive_seed(seed, i);
    Instance inst = generate(task, n, s);
    inst.name = id;
    save_instance(inst, run.out() / (std::string(id) + ext), format);
    manifest["instances"].push_back({{"id", id}, {"file", std::string(id) + ext}, {"seed", s}});
  }
  run.write_json("manifest.json", manifest);
  run.log("generated " + std::to_string(count) + " instances");
}

void cmd_pretrain(RunContext& run) {
  const RunConfig& c = run.config();
  const TrainConfig t = train_config(c);
  const Stopwatch clock;
  const std::size_t total = t.epochs * t.steps_per_epoch;
  auto observer = [&](const TrainLogRow& r) {
    run.log("epoch " + std::to_string(r.epoch) + " step " + std::to_string(r.step) + "/" +
            std::to_string(total) + " mean_cost " + fixed(r.mean_cost) + " loss " +
            fixed(r.loss, 9) + " elapsed " + fixed(clock.wall(), 1) + "s");
  };
  TrainResult result;
  if (!c.get_string("paths.policy").empty()) {
    Policy init = load_checked_policy(c);
    run.log("continuing from " + c.get_string("paths.policy"));
    result = pretrain(t, std::move(init), observer);
  } else {
    result = pretrain(t, observer);
  }
  save_policy(result.policy, run.out() / "policy.bin");
  run.write_csv("train_log.csv", [&](std::ostream& os) { write_train_log(os, result.log); });
  run.write_json("train.json", {{"steps", result.log.size()},
                                {"final_mean_cost", result.log.empty() ? 0.0
                                                                       : result.log.back().mean_cost},
                                {"wall_seconds", run.seconds(clock.wall())},
                                {"cpu_seconds", run.seconds(clock.cpu())}});
  run.log("saved " + (run.out() / "policy.bin").string() + " after " + fixed(clock.wall()) +
          " s wall, " + fixed(clock.cpu()) + " s cpu");
}

void cmd_distill(RunContext& run) {
  const RunConfig& c = run.config();
  const Policy policy = load_checked_policy(c);
  const DistillConfig d = distill_config(c);
  run.log("adapting " + std::to_string(d.per_scale * d.scales.size()) + " instances for " +
          std::to_string(d.sage.iterations) + " iterations");
  const Stopwatch clock;
  const auto records = build_distill_set(policy, d);
  save_distill_set(run.out(), records, d, policy.config.task);
  run.write_csv("distill.csv", [&](std::ostream& os) {
    os << "id,n,distance\n";
    for (const auto& r : records) {
      os << r.id << ',' << r.n << ',' << format_double(embedding_distance(r.source, r.target))
         << '\n';
    }
  });
  run.log("wrote " + std::to_string(records.size()) + " records in " + fixed(clock.wall(), 1) +
          "s");
}

void cmd_train_sml(RunContext& run) {
  const RunConfig& c = run.config();
  const Policy policy = load_checked_policy(c);
  const auto records =
      load_distill_set(required_path(c, "paths.records", "distillation set", "--records"));
  const SmlTrainConfig s = sml_train_config(c);
  const Stopwatch clock;
  run.log("training on " + std::to_string(records.size()) + " records");
  const SmlResult result = train_sml(policy, records, s);
  save_params(result.phi, run.out() / "sml.bin");
  run.write_csv("sml_log.csv", [&](std::ostream& os) { write_sml_log(os, result.log); });
  if (!result.log.empty()) {
    run.log("final distil " + fixed(result.log.back().distil) + " zero_cost " +
            fixed(result.log.back().zero_cost) + " after " + fixed(clock.wall(), 1) + "s");
  }
}

void cmd_adapt(RunContext& run) {
  const RunConfig& c = run.config();
  const Policy policy = load_checked_policy(c);
  const auto set = load_task_instances(c);
  const SageConfig s = sage_config(c);
  const std::string sml_path = c.get_string("paths.sml");
  const bool use_sml = c.get_bool("adapt.use_sml") && !sml_path.empty();

  std::optional<ParamSet> phi;
  if (!sml_path.empty()) {
    phi = load_params(required_path(c, "paths.sml", "scale meta-learner", "--sml"));
    if (sml_width(*phi) != policy.config.embed_dim) {
      fail(ErrorCode::kConfiguration, "learner width " + std::to_string(sml_width(*phi)) +
                                          " does not match the policy width " +
                                          std::to_string(policy.config.embed_dim));
    }
  }
  if (use_sml && s.mode != AdaptMode::kSage) {
    fail(ErrorCode::kConfiguration, "the scale meta-learner is only used with sage mode; pass "
                                    "--no-sml for " + std::string(adapt_mode_name(s.mode)));
  }
  const std::string label = std::string(adapt_mode_name(s.mode)) + (use_sml ? "_sml" : "");
  const std::vector<Instance> instances = plain(set);
  EmbeddingTransform transform;
  if (use_sml) transform = sml_transform(phi->constant());

  run.log("adapting " + std::to_string(set.size()) + " instances with " + label + ", K = " +
          std::to_string(s.iterations));
  const Stopwatch clock;
  const auto results = adapt(instances, s, policy, transform);
  const double per_instance = clock.wall() / static_cast<double>(std::max<std::size_t>(1, set.size()));

  std::vector<MethodResult> rows;
  double zero_sum = 0.0, best_sum = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    check_feasible(set[i], results[i].best, label);
    rows.push_back({set[i].id, label + "_k0", results[i].zero_shot.objective, 0.0});
    rows.push_back({set[i].id, label, results[i].best.objective, run.seconds(per_instance)});
    zero_sum += results[i].zero_shot.objective;
    best_sum += results[i].best.objective;
  }
  run.write_csv("results.csv", [&](std::ostream& os) { write_results_csv(os, rows); });
  run.write_csv("curves.csv", [&](std::ostream& os) {
    os << "instance,method,k,best_cost,mean_cost,alpha,temperature\n";
    for (std::size_t i = 0; i < set.size(); ++i) {
      for (const auto& h : results[i].history) {
        os << set[i].id << ',' << label << ',' << h.k << ',' << format_double(h.best_cost) << ','
           << format_double(h.mean_cost) << ',' << format_double(h.alpha) << ','
           << format_double(h.temperature) << '\n';
      }
    }
  });

  // Distance diagnostic: how close the learner's embeddings are to the ones
  // adaptation arrives at, against the encoder's own.
  if (phi && !use_sml && s.mode != AdaptMode::kActiveSearch) {
    const ParamView theta = policy.params.constant();
    const ParamView view = phi->constant();
    run.write_csv("embedding.csv", [&](std::ostream& os) {
      os << "instance,n,dist_sml,dist_plain\n";
      for (std::size_t i = 0; i < set.size(); ++i) {
        const ad::Tensor h = encode(theta, policy.config, set[i].instance).h;
        const ad::Tensor target = adapted_embeddings(results[i].eta, h);
        const std::size_t n = set[i].instance.problem_size();
        os << set[i].id << ',' << n << ','
           << format_double(embedding_distance(apply_sml(view, h, n), target)) << ','
           << format_double(embedding_distance(h, target)) << '\n';
      }
    });
  }
  const double count = static_cast<double>(std::max<std::size_t>(1, set.size()));
  run.write_json("summary.json", {{"method", label},
                                  {"instances", set.size()},
                                  {"iterations", s.iterations},
                                  {"mean_zero_shot", zero_sum / count},
                                  {"mean_best", best_sum / count},
                                  {"wall_seconds", run.seconds(clock.wall())}});
  run.log("mean zero-shot " + fixed(zero_sum / count) + " mean best " + fixed(best_sum / count));
}

// Shared tail of eval and report.
void write_gap_outputs(RunContext& run, std::span<const MethodResult> rows) {
  const RunConfig& c = run.config();
  const Task task = config_task(c);
  const std::string baseline_name = c.get_string("eval.baseline");
  std::vector<MethodResult> baseline;
  for (const auto& r : rows) {
    if (r.method == baseline_name) baseline.push_back(r);
  }
  if (baseline.empty()) {
    fail(ErrorCode::kConfiguration, "no rows for the baseline method " + baseline_name);
  }
  const bool maximize = maximizes(task);
  const GapReport report = gap_table(rows, baseline, maximize);
  run.write_csv("gap.csv", [&](std::ostream& os) { write_gap_csv(os, report); });
  run.write_csv("gap_summary.csv", [&](std::ostream& os) { write_gap_summary_csv(os, report); });
  json summary = json::array();
  for (const auto& s : report.summary) {
    summary.push_back({{"method", s.method},
                       {"count", s.count},
                       {"mean_obj", s.mean_obj},
                       {"mean_gap_pct", s.mean_gap_pct}});
    run.log(s.method + ": mean obj " + fixed(s.mean_obj) + " mean gap " +
            fixed(s.mean_gap_pct, 3) + "%");
  }
  run.write_json("report.json",
                 {{"task", std::string(task_name(task))},
                  {"baseline", baseline_name},
                  {"direction", maximize ? "maximize" : "minimize"},
                  {"summary", summary},
                  {"note", "baselines are local heuristics or exact enumeration, so absolute "
                           "gaps are only comparable among methods in this report; negative "
                           "gaps beat the baseline"}});
}

void cmd_eval(RunContext& run) {
  const RunConfig& c = run.config();
  const auto set = load_task_instances(c);
  const Task task = config_task(c);
  const std::size_t passes = c.get_size("eval.two_opt_passes");
  std::vector<MethodResult> rows;
  std::map<std::string, double> exact;

  for (const std::string& method : c.get_string_list("eval.methods")) {
    if (method == "greedy") {
      const Policy policy = load_checked_policy(c);
      GreedyOptions g;
      g.augmentations = c.get_size("eval.augmentations");
      g.workers = c.get_size("run.workers");
      const std::vector<Instance> instances = plain(set);
      const Stopwatch clock;
      const auto sols = solve_greedy(policy.params.constant(), policy.config, instances, g);
      const double each = clock.wall() / static_cast<double>(std::max<std::size_t>(1, set.size()));
      for (std::size_t i = 0; i < set.size(); ++i) {
        check_feasible(set[i], sols[i], method);
        rows.push_back({set[i].id, method, sols[i].objective, run.seconds(each)});
      }
      continue;
    }
    if (method != "nn" && method != "nn2opt" && method != "exact") {
      fail(ErrorCode::kConfiguration, "unknown eval method " + method);
    }
    if (method == "nn2opt" && task != Task::kTsp) {
      fail(ErrorCode::kUnsupportedFeature, "nn2opt is defined for TSP only");
    }
    for (const auto& ni : set) {
      const Stopwatch clock;
      Solution s;
      if (method == "exact") {
        s = exact_small(ni.instance);
        exact[ni.id] = s.objective;
      } else {
        s = nearest_neighbor(ni.instance);
        if (method == "nn2opt") s = two_opt(ni.instance, s, passes);
      }
      check_feasible(ni, s, method);
      rows.push_back({ni.id, method, s.objective, run.seconds(clock.wall())});
    }
  }
  for (const std::string& path : c.get_string_list("paths.runs")) {
    const auto extra = read_results_csv(path);
    rows.insert(rows.end(), extra.begin(), extra.end());
  }
  // The exact optimum bounds every method on the same instance.
  std::size_t violations = 0;
  for (const auto& r : rows) {
    const auto it = exact.find(r.instance);
    if (it == exact.end()) continue;
    if (better(task, r.obj, it->second) && std::abs(r.obj - it->second) > 1e-9) {
      ++violations;
      run.log("warning: " + r.method + " beats the exact optimum on " + r.instance);
    }
  }
  if (violations > 0) {
    fail(ErrorCode::kContract, std::to_string(violations) + " results beat the exact optimum");
  }
  run.write_csv("results.csv", [&](std::ostream& os) { write_results_csv(os, rows); });
  write_gap_outputs(run, rows);
}

void cmd_report(RunContext& run) {
  const auto paths = run.config().get_string_list("paths.runs");
  if (paths.empty()) {
    fail(ErrorCode::kConfiguration, "report needs results files: set paths.runs or pass --runs");
  }
  std::vector<MethodResult> rows;
  for (const auto& p : paths) {
    const auto part = read_results_csv(p);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  write_gap_outputs(run, rows);
}

double parse_csv_double(std::string_view s, const std::string& where) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size()) {
    fail(ErrorCode::kMalformedDocument, where + ": bad number '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

void run_command(const RunConfig& config, std::string_view command, const LogSink& log) {
  const std::string cmd = command.empty() ? config.get_string("run.command") : std::string(command);
  if (std::find(std::begin(kCommands), std::end(kCommands), cmd) == std::end(kCommands)) {
    fail(ErrorCode::kConfiguration, "unknown command '" + cmd + "'");
  }
  RunContext run(config, cmd, log);
  if (cmd == "gen") cmd_gen(run);
  if (cmd == "pretrain") cmd_pretrain(run);
  if (cmd == "distill") cmd_distill(run);
  if (cmd == "train-sml") cmd_train_sml(run);
  if (cmd == "adapt") cmd_adapt(run);
  if (cmd == "eval") cmd_eval(run);
  if (cmd == "report") cmd_report(run);
  run.log("done");
}

std::vector<NamedInstance> load_instance_set(const fs::path& path, InstanceFormat format) {
  auto wanted = [&](const fs::path& p) {
    const std::string ext = p.extension().string();
    if (format == InstanceFormat::kNative) return ext == ".json" && p.filename() != "manifest.json";
    return ext == ".tsp" || ext == ".vrp";
  };
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& e : fs::directory_iterator(path)) {
      if (e.is_regular_file() && wanted(e.path())) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else if (fs::is_regular_file(path)) {
    files.push_back(path);
  } else {
    fail(ErrorCode::kIo, "no such instance file or directory " + path.string());
  }
  if (files.empty()) fail(ErrorCode::kIo, "no instance files in " + path.string());
  std::vector<NamedInstance> out;
  for (const auto& f : files) {
    try {
      out.push_back({f.stem().string(), load_instance(f, format)});
    } catch (const Error& e) {
      fail(e.code(), f.string() + ": " + e.what());
    }
  }
  return out;
}

void write_results_csv(std::ostream& os, std::span<const MethodResult> rows) {
  os << "instance,method,obj,seconds\n";
  for (const auto& r : rows) {
    for (const std::string* s : {&r.instance, &r.method}) {
      if (s->find_first_of(",\"\n\r") != std::string::npos || s->empty()) {
        fail(ErrorCode::kArgument, "identifier '" + *s + "' cannot be written to CSV");
      }
    }
    os << r.instance << ',' << r.method << ',' << format_double(r.obj) << ','
       << format_double(r.seconds) << '\n';
  }
}

std::vector<MethodResult> read_results_csv(const fs::path& path) {
  const std::string text = read_text(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "instance,method,obj,seconds") {
    fail(ErrorCode::kMalformedDocument,
         path.string() + ": expected header instance,method,obj,seconds");
  }
  std::vector<MethodResult> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    std::vector<std::string_view> f;
    std::string_view rest = line;
    while (true) {
      const std::size_t comma = rest.find(',');
      f.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (f.size() != 4) fail(ErrorCode::kMalformedDocument, where + ": expected 4 fields");
    rows.push_back({std::string(f[0]), std::string(f[1]), parse_csv_double(f[2], where),
                    parse_csv_double(f[3], where)});
  }
  return rows;
}

}  // namespace routeadapt
