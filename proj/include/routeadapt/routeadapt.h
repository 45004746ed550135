/* Copyright 2026 The routeadapt Authors
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface to routeadapt.
 *
 * Every function returns an ra_status. On failure the message is available
 * from ra_last_error() on the same thread until the next call that fails.
 * Handles are opaque; each *_create / *_load is paired with a *_destroy that
 * accepts NULL. Strings are UTF-8 and NUL-terminated.
 *
 * Buffer outputs follow one convention: `needed` (when not NULL) receives the
 * full size including the terminator, and RA_ERR_SIZE is returned when
 * `capacity` is too small. */

#ifndef ROUTEADAPT_ROUTEADAPT_H_
#define ROUTEADAPT_ROUTEADAPT_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define RA_API __declspec(dllexport)
#elif defined(__GNUC__)
#define RA_API __attribute__((visibility("default")))
#else
#define RA_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ra_status {
  RA_OK = 0,
  RA_ERR_DIMENSION = 1,
  RA_ERR_DOMAIN = 2,
  RA_ERR_INFEASIBLE_STATE = 3,
  RA_ERR_CONTRACT = 4,
  RA_ERR_ARGUMENT = 5,
  RA_ERR_FEASIBILITY = 6,
  RA_ERR_UNSUPPORTED = 7,
  RA_ERR_MALFORMED = 8,
  RA_ERR_DEGENERATE = 9,
  RA_ERR_CONFIGURATION = 10,
  RA_ERR_TRAINING_DIVERGED = 11,
  RA_ERR_ADAPTATION_DIVERGED = 12,
  RA_ERR_SIZE = 13,
  RA_ERR_JOIN = 14,
  RA_ERR_IO = 15,
  RA_ERR_INTERNAL = 100
} ra_status;

typedef struct ra_config ra_config;
typedef struct ra_instance ra_instance;
typedef struct ra_policy ra_policy;

/* Progress callback: one line without a trailing newline. */
typedef void (*ra_log_fn)(const char* line, void* user);

RA_API const char* ra_version(void);
RA_API const char* ra_status_name(ra_status status);
RA_API const char* ra_last_error(void);

/* Tunes the process allocator for the tensor workload. Call once, early. */
RA_API void ra_init(void);

/* ---- run configuration ------------------------------------------------ */

RA_API ra_status ra_config_create(ra_config** out);
RA_API void ra_config_destroy(ra_config* config);
RA_API ra_status ra_config_set(ra_config* config, const char* key, const char* value);
RA_API ra_status ra_config_load(ra_config* config, const char* path);
/* Applies PREFIX<SECTION>_<KEY> variables; NULL prefix means "ROUTEADAPT_". */
RA_API ra_status ra_config_apply_env(ra_config* config, const char* prefix, size_t* applied);
/* Canonical literal of `key` (strings keep their quotes). */
RA_API ra_status ra_config_get(const ra_config* config, const char* key, char* buffer,
                               size_t capacity, size_t* needed);
RA_API ra_status ra_config_to_text(const ra_config* config, char* buffer, size_t capacity,
                                   size_t* needed);
/* Schema enumeration for help text. Pointers stay valid for the process. */
RA_API size_t ra_config_key_count(void);
RA_API ra_status ra_config_key_info(size_t index, const char** key, const char** default_value,
                                    const char** help);

/* Runs `command` (gen, pretrain, distill, train-sml, adapt, eval, report)
 * into run.out. A NULL command runs run.command. */
RA_API ra_status ra_run(const ra_config* config, const char* command, ra_log_fn log, void* user);

/* ---- instances -------------------------------------------------------- */

/* task: "tsp", "cvrp", "pctsp" or "op"; format: "native" or "lib". */
RA_API ra_status ra_instance_generate(const char* task, size_t n, uint64_t seed,
                                      ra_instance** out);
RA_API ra_status ra_instance_load(const char* path, const char* format, ra_instance** out);
RA_API ra_status ra_instance_save(const ra_instance* instance, const char* path,
                                  const char* format);
RA_API void ra_instance_destroy(ra_instance* instance);
RA_API size_t ra_instance_nodes(const ra_instance* instance);
/* Objective of an action sequence; `feasible` receives 0 or 1 and the
 * objective is only written for feasible sequences. */
RA_API ra_status ra_instance_evaluate(const ra_instance* instance, const size_t* actions,
                                      size_t count, int* feasible, double* objective);

/* Reference solvers: "nn", "nn2opt" or "exact". `actions` may be NULL to
 * query the length through `count`. */
RA_API ra_status ra_solve(const ra_instance* instance, const char* method, size_t* actions,
                          size_t capacity, size_t* count, double* objective);

/* ---- policies --------------------------------------------------------- */

/* Fresh weights with the policy.* keys and run.task of `config`. */
RA_API ra_status ra_policy_create(const ra_config* config, uint64_t seed, ra_policy** out);
RA_API ra_status ra_policy_load(const char* path, ra_policy** out);
RA_API ra_status ra_policy_save(const ra_policy* policy, const char* path);
RA_API void ra_policy_destroy(ra_policy* policy);
RA_API size_t ra_policy_embed_dim(const ra_policy* policy);
/* Greedy multistart decoding over every start node. */
RA_API ra_status ra_policy_solve(const ra_policy* policy, const ra_instance* instance,
                                 size_t* actions, size_t capacity, size_t* count,
                                 double* objective);

/* ---- metrics ---------------------------------------------------------- */

/* (obj - obj_b) / obj_b * 100, sign flipped when `maximize` is non-zero. */
RA_API ra_status ra_gap_percent(double obj, double obj_b, int maximize, double* out);

#ifdef __cplusplus
}
#endif

#endif /* ROUTEADAPT_ROUTEADAPT_H_ */
