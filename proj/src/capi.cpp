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

#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "commands.hpp"
#include "errors.hpp"
#include "eval.hpp"
#include "instance_io.hpp"
#include "policy.hpp"
#include "routeadapt/routeadapt.h"
#include "run_config.hpp"

struct ra_config {
  routeadapt::RunConfig value;
};
struct ra_instance {
  routeadapt::Instance value;
};
struct ra_policy {
  routeadapt::Policy value;
};

namespace {

using routeadapt::ErrorCode;

thread_local std::string g_last_error;

// Runs `fn`, translating exceptions into a status and a message.
template <typename Fn>
ra_status guarded(Fn&& fn) {
  try {
    fn();
    return RA_OK;
  } catch (const routeadapt::Error& e) {
    g_last_error = e.what();
    return static_cast<ra_status>(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return RA_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return RA_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown exception";
    return RA_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) routeadapt::fail(ErrorCode::kArgument, std::string(what) + " is NULL");
}

void copy_out(const std::string& s, char* buffer, std::size_t capacity, std::size_t* needed) {
  if (needed != nullptr) *needed = s.size() + 1;
  if (buffer == nullptr && capacity == 0) return;
  if (capacity < s.size() + 1) {
    routeadapt::fail(ErrorCode::kSize, "buffer holds " + std::to_string(capacity) +
                                           " bytes, " + std::to_string(s.size() + 1) + " needed");
  }
  std::memcpy(buffer, s.c_str(), s.size() + 1);
}

void copy_solution(const routeadapt::Solution& s, std::size_t* actions, std::size_t capacity,
                   std::size_t* count, double* objective) {
  if (count != nullptr) *count = s.actions.size();
  if (objective != nullptr) *objective = s.objective;
  if (actions == nullptr) return;
  if (capacity < s.actions.size()) {
    routeadapt::fail(ErrorCode::kSize, "action buffer holds " + std::to_string(capacity) +
                                           " entries, " + std::to_string(s.actions.size()) +
                                           " needed");
  }
  std::copy(s.actions.begin(), s.actions.end(), actions);
}

}  // namespace

extern "C" {

const char* ra_version(void) { return "0.1.0"; }

const char* ra_status_name(ra_status status) {
  if (status == RA_ERR_INTERNAL) return "internal";
  return routeadapt::error_code_name(static_cast<ErrorCode>(status));
}

const char* ra_last_error(void) { return g_last_error.c_str(); }

void ra_init(void) { routeadapt::ad::tune_allocator(); }

ra_status ra_config_create(ra_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new ra_config{};
  });
}

void ra_config_destroy(ra_config* config) { delete config; }

ra_status ra_config_set(ra_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    config->value.set(key, value);
  });
}

ra_status ra_config_load(ra_config* config, const char* path) {
  return guarded([&] {
    require(config, "config");
    require(path, "path");
    config->value.merge_file(path);
  });
}

ra_status ra_config_apply_env(ra_config* config, const char* prefix, size_t* applied) {
  return guarded([&] {
    require(config, "config");
    const std::size_t n =
        config->value.merge_env(prefix != nullptr ? prefix : routeadapt::kEnvPrefix);
    if (applied != nullptr) *applied = n;
  });
}

ra_status ra_config_get(const ra_config* config, const char* key, char* buffer, size_t capacity,
                        size_t* needed) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    copy_out(config->value.raw(key), buffer, capacity, needed);
  });
}

ra_status ra_config_to_text(const ra_config* config, char* buffer, size_t capacity,
                            size_t* needed) {
  return guarded([&] {
    require(config, "config");
    copy_out(config->value.to_toml(), buffer, capacity, needed);
  });
}

size_t ra_config_key_count(void) { return routeadapt::config_schema().size(); }

ra_status ra_config_key_info(size_t index, const char** key, const char** default_value,
                             const char** help) {
  return guarded([&] {
    const auto& schema = routeadapt::config_schema();
    if (index >= schema.size()) routeadapt::fail(ErrorCode::kArgument, "key index out of range");
    // Schema entries are string literals, hence NUL-terminated.
    if (key != nullptr) *key = schema[index].key.data();
    if (default_value != nullptr) *default_value = schema[index].default_value.data();
    if (help != nullptr) *help = schema[index].help.data();
  });
}

ra_status ra_run(const ra_config* config, const char* command, ra_log_fn log, void* user) {
  return guarded([&] {
    require(config, "config");
    routeadapt::LogSink sink;
    if (log != nullptr) {
      sink = [log, user](std::string_view line) { log(std::string(line).c_str(), user); };
    }
    routeadapt::run_command(config->value, command != nullptr ? command : "", sink);
  });
}

ra_status ra_instance_generate(const char* task, size_t n, uint64_t seed, ra_instance** out) {
  return guarded([&] {
    require(task, "task");
    require(out, "out");
    *out = new ra_instance{routeadapt::generate(routeadapt::parse_task(task), n, seed)};
  });
}

ra_status ra_instance_load(const char* path, const char* format, ra_instance** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    const auto f = routeadapt::parse_format(format != nullptr ? format : "native");
    *out = new ra_instance{routeadapt::load_instance(path, f)};
  });
}

ra_status ra_instance_save(const ra_instance* instance, const char* path, const char* format) {
  return guarded([&] {
    require(instance, "instance");
    require(path, "path");
    const auto f = routeadapt::parse_format(format != nullptr ? format : "native");
    routeadapt::save_instance(instance->value, path, f);
  });
}

void ra_instance_destroy(ra_instance* instance) { delete instance; }

size_t ra_instance_nodes(const ra_instance* instance) {
  return instance == nullptr ? 0 : instance->value.nodes();
}

ra_status ra_instance_evaluate(const ra_instance* instance, const size_t* actions, size_t count,
                               int* feasible, double* objective) {
  return guarded([&] {
    require(instance, "instance");
    require(feasible, "feasible");
    if (count > 0) require(actions, "actions");
    const std::span<const std::size_t> seq(actions, count);
    const bool ok = !routeadapt::find_violation(instance->value, seq).has_value();
    *feasible = ok ? 1 : 0;
    if (ok && objective != nullptr) *objective = routeadapt::objective(instance->value, seq);
  });
}

ra_status ra_solve(const ra_instance* instance, const char* method, size_t* actions,
                   size_t capacity, size_t* count, double* objective) {
  return guarded([&] {
    require(instance, "instance");
    require(method, "method");
    const std::string m = method;
    routeadapt::Solution s;
    if (m == "exact") {
      s = routeadapt::exact_small(instance->value);
    } else if (m == "nn" || m == "nn2opt") {
      s = routeadapt::nearest_neighbor(instance->value);
      if (m == "nn2opt") {
        if (instance->value.task != routeadapt::Task::kTsp) {
          routeadapt::fail(ErrorCode::kUnsupportedFeature, "nn2opt is defined for TSP only");
        }
        s = routeadapt::two_opt(instance->value, s);
      }
    } else {
      routeadapt::fail(ErrorCode::kArgument, "unknown method '" + m + "'");
    }
    copy_solution(s, actions, capacity, count, objective);
  });
}

ra_status ra_policy_create(const ra_config* config, uint64_t seed, ra_policy** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    *out = new ra_policy{routeadapt::Policy::init(routeadapt::policy_config(config->value), seed)};
  });
}

ra_status ra_policy_load(const char* path, ra_policy** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new ra_policy{routeadapt::load_policy(path)};
  });
}

ra_status ra_policy_save(const ra_policy* policy, const char* path) {
  return guarded([&] {
    require(policy, "policy");
    require(path, "path");
    routeadapt::save_policy(policy->value, path);
  });
}

void ra_policy_destroy(ra_policy* policy) { delete policy; }

size_t ra_policy_embed_dim(const ra_policy* policy) {
  return policy == nullptr ? 0 : policy->value.config.embed_dim;
}

ra_status ra_policy_solve(const ra_policy* policy, const ra_instance* instance, size_t* actions,
                          size_t capacity, size_t* count, double* objective) {
  return guarded([&] {
    require(policy, "policy");
    require(instance, "instance");
    if (instance->value.task != policy->value.config.task) {
      routeadapt::fail(ErrorCode::kArgument, "instance task does not match the policy");
    }
    const auto sols = routeadapt::solve_greedy(policy->value.params.constant(),
                                               policy->value.config,
                                               std::span<const routeadapt::Instance>(
                                                   &instance->value, 1));
    copy_solution(sols[0], actions, capacity, count, objective);
  });
}

ra_status ra_gap_percent(double obj, double obj_b, int maximize, double* out) {
  return guarded([&] {
    require(out, "out");
    *out = routeadapt::gap_percent(obj, obj_b, maximize != 0);
  });
}

}  // extern "C"
