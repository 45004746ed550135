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

// Run configuration: a fixed schema of "section.key" entries resolved from
// defaults, then a flat TOML-style file, then environment variables, then
// explicit overrides. The resolved set is written verbatim into every run
// directory and can be read back to repeat the run.
//
// File syntax:
//
//   # comment
//   [sage]
//   iterations = 200
//   mode = "eas"
//   [distill]
//   scales = [30, 40, 50]

#ifndef ROUTEADAPT_RUN_CONFIG_HPP_
#define ROUTEADAPT_RUN_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "eval.hpp"
#include "policy.hpp"
#include "sage.hpp"
#include "sml.hpp"
#include "trainer.hpp"

namespace routeadapt {

enum class ValueKind { kString, kInt, kFloat, kBool, kIntList, kStringList };

struct KeySpec {
  std::string_view key;            // "section.name"
  ValueKind kind;
  std::string_view default_value;  // canonical literal
  std::string_view help;
};

const std::vector<KeySpec>& config_schema();

inline constexpr std::string_view kEnvPrefix = "ROUTEADAPT_";

class RunConfig {
 public:
  RunConfig();  // every key at its default

  // `value` may be a literal ("x", [1, 2], true) or bare text as typed on a
  // command line (x, 1,2). Unknown keys and ill-typed values throw
  // kConfiguration naming `origin`.
  void set(std::string_view key, std::string_view value, std::string_view origin = "override");
  bool has_key(std::string_view key) const;

  void merge_text(std::string_view text, std::string_view origin);
  void merge_file(const std::filesystem::path& path);
  // PREFIX + upper-cased key with '.' replaced by '_', e.g.
  // ROUTEADAPT_SAGE_ITERATIONS. Returns the number of keys taken.
  std::size_t merge_env(std::string_view prefix = kEnvPrefix);

  // Canonical literal of `key`.
  const std::string& raw(std::string_view key) const;
  std::string get_string(std::string_view key) const;
  std::int64_t get_int(std::string_view key) const;
  std::size_t get_size(std::string_view key) const;  // non-negative int
  double get_double(std::string_view key) const;
  bool get_bool(std::string_view key) const;
  std::vector<std::int64_t> get_int_list(std::string_view key) const;
  std::vector<std::string> get_string_list(std::string_view key) const;

  // Every key, grouped by section in schema order.
  std::string to_toml() const;

 private:
  const KeySpec& schema_entry(std::string_view key) const;
  std::map<std::string, std::string, std::less<>> values_;
};

// Module configurations derived from a resolved run configuration. Seeds
// for each stage are derived from run.seed.
Task config_task(const RunConfig& config);
PolicyConfig policy_config(const RunConfig& config);
TrainConfig train_config(const RunConfig& config);
SageConfig sage_config(const RunConfig& config);
DistillConfig distill_config(const RunConfig& config);
SmlTrainConfig sml_train_config(const RunConfig& config);

}  // namespace routeadapt

#endif  // ROUTEADAPT_RUN_CONFIG_HPP_
