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

// Run drivers behind the command-line subcommands. Each writes into run.out:
//
//   config.toml   resolved configuration (re-runnable)
//   log.txt       progress lines
//   *.csv / *.json / checkpoints specific to the command
//
// CSV contents depend only on the configuration, unless run.timings = wall.

#ifndef ROUTEADAPT_COMMANDS_HPP_
#define ROUTEADAPT_COMMANDS_HPP_

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eval.hpp"
#include "instance_io.hpp"
#include "run_config.hpp"

namespace routeadapt {

inline constexpr std::string_view kCommands[] = {"gen",   "pretrain", "distill", "train-sml",
                                                 "adapt", "eval",     "report"};

// Progress sink; receives one line at a time without a newline.
using LogSink = std::function<void(std::string_view)>;

// Runs `command`, or run.command when empty. Throws on any failure; partial
// outputs may remain in run.out.
void run_command(const RunConfig& config, std::string_view command = {},
                 const LogSink& log = {});

// A named instance (the id is the file stem).
struct NamedInstance {
  std::string id;
  Instance instance;
};

// A file, or every instance file in a directory sorted by name (manifest.json
// is skipped). Native files end in .json, library files in .tsp or .vrp.
std::vector<NamedInstance> load_instance_set(const std::filesystem::path& path,
                                             InstanceFormat format);

// instance,method,obj,seconds
void write_results_csv(std::ostream& os, std::span<const MethodResult> rows);
std::vector<MethodResult> read_results_csv(const std::filesystem::path& path);

}  // namespace routeadapt

#endif  // ROUTEADAPT_COMMANDS_HPP_
