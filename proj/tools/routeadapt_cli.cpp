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

// routeadapt command-line tool. Every subcommand resolves a configuration
// (defaults, then --config FILE, then ROUTEADAPT_* variables, then flags) and
// hands it to the library through the C interface.

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "routeadapt/routeadapt.h"

namespace {

struct ConfigDeleter {
  void operator()(ra_config* c) const { ra_config_destroy(c); }
};
using ConfigPtr = std::unique_ptr<ra_config, ConfigDeleter>;

// Flag values keyed by configuration key, filled in by CLI11.
struct Subcommand {
  CLI::App* app = nullptr;
  std::string config_file;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, CLI::Option*>> keyed;
  std::map<std::string, std::string> values;
  std::vector<std::pair<std::string, std::string>> flags;  // key, value if flag given
  std::map<std::string, bool> flag_seen;

  void key(const std::string& flag, const std::string& config_key, const std::string& help) {
    CLI::Option* opt = app->add_option(flag, values[config_key], help + " [" + config_key + "]")
                           ->type_name("VALUE");
    keyed.emplace_back(config_key, opt);
  }

  void key_flag(const std::string& flag, const std::string& config_key, const std::string& value,
                const std::string& help) {
    app->add_flag(flag, flag_seen[flag], help + " [" + config_key + " = " + value + "]");
    flags.emplace_back(flag, config_key + "=" + value);
  }
};

void add_common(Subcommand& s) {
  s.app->add_option("--config", s.config_file, "configuration file (a run's config.toml repeats it)");
  s.key("-o,--out", "run.out", "output directory");
  s.key("--task", "run.task", "tsp, cvrp, pctsp or op");
  s.key("--seed", "run.seed", "root seed");
  s.key("-j,--workers", "run.workers", "worker threads, 0 = all cores");
  s.key("--format", "run.format", "instance format: native or lib");
  s.key("--timings", "run.timings", "seconds column: none or wall");
  s.app->add_option("--set", s.sets, "override any key: section.key=value (repeatable)");
}

bool check(ra_status status, const char* what) {
  if (status == RA_OK) return true;
  std::fprintf(stderr, "error: %s: %s: %s\n", what, ra_status_name(status), ra_last_error());
  return false;
}

void log_line(const char* line, void*) { std::fprintf(stderr, "%s\n", line); }

int run(const std::string& name, Subcommand& s) {
  ra_config* raw = nullptr;
  if (!check(ra_config_create(&raw), "config")) return 1;
  ConfigPtr config(raw);
  if (!s.config_file.empty() && !check(ra_config_load(config.get(), s.config_file.c_str()),
                                       s.config_file.c_str())) {
    return 1;
  }
  if (!check(ra_config_apply_env(config.get(), nullptr, nullptr), "environment")) return 1;
  for (const std::string& kv : s.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --set expects section.key=value, got '%s'\n", kv.c_str());
      return 2;
    }
    const std::string k = kv.substr(0, eq);
    if (!check(ra_config_set(config.get(), k.c_str(), kv.substr(eq + 1).c_str()), "--set")) {
      return 1;
    }
  }
  for (const auto& [k, opt] : s.keyed) {
    if (opt->count() == 0) continue;
    if (!check(ra_config_set(config.get(), k.c_str(), s.values[k].c_str()), opt->get_name().c_str())) {
      return 1;
    }
  }
  for (const auto& [flag, kv] : s.flags) {
    if (!s.flag_seen[flag]) continue;
    const auto eq = kv.find('=');
    if (!check(ra_config_set(config.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()),
               flag.c_str())) {
      return 1;
    }
  }
  if (!check(ra_run(config.get(), name.c_str(), log_line, nullptr), name.c_str())) return 1;
  char out[4096];
  if (ra_config_get(config.get(), "run.out", out, sizeof out, nullptr) == RA_OK) {
    std::string dir = out;
    if (dir.size() >= 2 && dir.front() == '"') dir = dir.substr(1, dir.size() - 2);
    std::printf("%s: wrote %s\n", name.c_str(), dir.c_str());
  }
  return 0;
}

void print_keys() {
  for (std::size_t i = 0; i < ra_config_key_count(); ++i) {
    const char* key = nullptr;
    const char* def = nullptr;
    const char* help = nullptr;
    if (ra_config_key_info(i, &key, &def, &help) == RA_OK) {
      std::printf("%-24s %-22s %s\n", key, def, help);
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  ra_init();
  CLI::App app{"Neural routing policies with test-time adaptation.\n"
               "Configuration precedence: defaults < --config < ROUTEADAPT_* environment < flags.",
               "routeadapt"};
  app.set_version_flag("--version", std::string(ra_version()));
  bool list_keys = false;
  app.add_flag("--keys", list_keys, "list every configuration key with its default");
  app.require_subcommand(0, 1);

  std::map<std::string, Subcommand> subs;
  auto make = [&](const std::string& name, const std::string& help) -> Subcommand& {
    Subcommand& s = subs[name];
    s.app = app.add_subcommand(name, help);
    add_common(s);
    return s;
  };

  {
    Subcommand& s = make("gen", "generate random instances plus a manifest");
    s.app->add_option("TASK", s.values["run.task"], "task")->check(CLI::IsMember({"tsp", "cvrp", "pctsp", "op"}));
    s.keyed.emplace_back("run.task", s.app->get_option("TASK"));
    s.app->add_option("N", s.values["gen.n"], "problem size");
    s.keyed.emplace_back("gen.n", s.app->get_option("N"));
    s.app->add_option("COUNT", s.values["gen.count"], "number of instances");
    s.keyed.emplace_back("gen.count", s.app->get_option("COUNT"));
    s.key("--n", "gen.n", "problem size");
    s.key("--count", "gen.count", "number of instances");
  }
  {
    Subcommand& s = make("pretrain", "train a policy with multistart REINFORCE");
    s.key("--init", "paths.policy", "continue from this checkpoint");
    s.key("--n-train", "train.n_train", "training problem size");
    s.key("--epochs", "train.epochs", "epochs");
    s.key("--steps", "train.steps_per_epoch", "steps per epoch");
    s.key("--batch", "train.batch_instances", "instances per step");
    s.key("--multistart", "train.multistart", "rollouts per instance");
    s.key("--lr", "train.learning_rate", "learning rate");
  }
  {
    Subcommand& s = make("distill", "adapt instances at several scales and store embedding pairs");
    s.key("--policy", "paths.policy", "policy checkpoint");
    s.key("--scales", "distill.scales", "problem sizes, comma separated");
    s.key("--per-scale", "distill.per_scale", "instances per scale");
    s.key("--iters", "distill.iterations", "adaptation iterations per instance");
    s.key("--samples", "sage.multistart", "samples per iteration");
  }
  {
    Subcommand& s = make("train-sml", "train the scale meta-learner on a distillation set");
    s.key("--policy", "paths.policy", "policy checkpoint");
    s.key("--records", "paths.records", "distillation set directory");
    s.key("--epochs", "sml.epochs", "epochs");
    s.key("--beta", "sml.beta", "zero-shot objective weight");
    s.key("--lr", "sml.learning_rate", "learning rate");
  }
  {
    Subcommand& s = make("adapt", "adapt the policy to each instance at test time");
    s.key("--policy", "paths.policy", "policy checkpoint");
    s.key("--instances", "paths.instances", "instance file or directory");
    s.key("--sml", "paths.sml", "scale meta-learner checkpoint");
    s.key("--mode", "sage.mode", "sage, eas or as");
    s.app->get_option("--mode")->check(CLI::IsMember({"sage", "eas", "as"}));
    s.key_flag("--no-sml", "adapt.use_sml", "false", "do not apply the scale meta-learner");
    s.key("--iters", "sage.iterations", "iterations K");
    s.key("--samples", "sage.multistart", "samples per iteration");
    s.key("--augment", "sage.augmentations", "dihedral views");
    s.key("--lambda", "sage.lambda", "imitation weight");
    s.key("--lr", "sage.delta", "adaptation learning rate");
    s.key_flag("--global-incumbent", "sage.global_incumbent", "true",
               "imitate the best sample found so far");
  }
  {
    Subcommand& s = make("eval", "solve instances with reference methods and tabulate gaps");
    s.key("--instances", "paths.instances", "instance file or directory");
    s.key("--policy", "paths.policy", "policy checkpoint for the greedy method");
    s.key("--methods", "eval.methods", "nn, nn2opt, exact, greedy (comma separated)");
    s.key("--baseline", "eval.baseline", "method used as obj_B");
    s.key("--runs", "paths.runs", "extra results.csv files to join");
  }
  {
    Subcommand& s = make("report", "join results files into gap tables");
    s.key("--runs", "paths.runs", "results.csv files (comma separated)");
    s.key("--baseline", "eval.baseline", "method used as obj_B");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (list_keys) {
    print_keys();
    return 0;
  }
  for (auto& [name, s] : subs) {
    if (s.app->parsed()) return run(name, s);
  }
  std::fprintf(stderr, "%s", app.help().c_str());
  std::fprintf(stderr, "error: a subcommand is required\n");
  return 2;
}
