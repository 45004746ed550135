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

#include "run_config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>

#include "errors.hpp"
#include "instance_io.hpp"
#include "rng.hpp"

namespace routeadapt {

namespace {

constexpr std::uint64_t kSageSeedTag = 0x5A6E;
constexpr std::uint64_t kDistillSeedTag = 0xD157;
constexpr std::uint64_t kDistillSageTag = 0xD158;
constexpr std::uint64_t kSmlSeedTag = 0x53A1;

using K = ValueKind;

const std::vector<KeySpec> kSchema = {
    {"run.command", K::kString, "\"\"", "subcommand that produced the run"},
    {"run.task", K::kString, "\"tsp\"", "tsp, cvrp, pctsp or op"},
    {"run.seed", K::kInt, "1", "root of every random stream"},
    {"run.workers", K::kInt, "0", "worker threads, 0 = all cores"},
    {"run.out", K::kString, "\"run\"", "output directory"},
    {"run.format", K::kString, "\"native\"", "instance file format: native or lib"},
    {"run.timings", K::kString, "\"none\"", "seconds column: none (zero) or wall"},
    {"gen.n", K::kInt, "20", "problem size"},
    {"gen.count", K::kInt, "100", "number of instances"},
    {"paths.policy", K::kString, "\"\"", "policy checkpoint"},
    {"paths.sml", K::kString, "\"\"", "scale meta-learner checkpoint"},
    {"paths.records", K::kString, "\"\"", "distillation set directory"},
    {"paths.instances", K::kString, "\"\"", "instance file or directory"},
    {"paths.runs", K::kStringList, "[]", "results.csv files to join"},
    {"policy.embed_dim", K::kInt, "128", "embedding width"},
    {"policy.heads", K::kInt, "8", "attention heads"},
    {"policy.layers", K::kInt, "3", "encoder layers"},
    {"policy.ff_dim", K::kInt, "512", "feed-forward width"},
    {"policy.clip_c", K::kFloat, "10", "logit clipping constant"},
    {"train.n_train", K::kInt, "20", "training problem size"},
    {"train.batch_instances", K::kInt, "64", "instances per step"},
    {"train.multistart", K::kInt, "20", "rollouts per instance"},
    {"train.epochs", K::kInt, "40", "epochs"},
    {"train.steps_per_epoch", K::kInt, "100", "steps per epoch"},
    {"train.learning_rate", K::kFloat, "0.0001", "Adam learning rate"},
    {"train.chunk_instances", K::kInt, "16", "instances per gradient tape"},
    {"sage.iterations", K::kInt, "200", "adaptation iterations K"},
    {"sage.multistart", K::kInt, "50", "samples per iteration"},
    {"sage.augmentations", K::kInt, "1", "dihedral views per instance"},
    {"sage.lambda", K::kFloat, "0.005", "imitation weight"},
    {"sage.delta", K::kFloat, "0.0032", "adaptation learning rate"},
    {"sage.alpha0", K::kFloat, "1", "initial locality weight"},
    {"sage.alpha_k", K::kFloat, "0.3", "final locality weight"},
    {"sage.temp0", K::kFloat, "1", "initial temperature"},
    {"sage.temp_k", K::kFloat, "0.3", "final temperature"},
    {"sage.mode", K::kString, "\"sage\"", "sage, eas or as"},
    {"sage.global_incumbent", K::kBool, "false", "imitate the best sample so far"},
    {"sage.adapter_hidden", K::kInt, "128", "adapter hidden width"},
    {"sage.batch_instances", K::kInt, "8", "instances per stacked pass"},
    {"adapt.use_sml", K::kBool, "true", "apply paths.sml when set"},
    {"distill.scales", K::kIntList, "[30, 40, 50]", "distillation problem sizes"},
    {"distill.per_scale", K::kInt, "200", "instances per scale"},
    {"distill.iterations", K::kInt, "50", "adaptation iterations per record"},
    {"sml.beta", K::kFloat, "1", "zero-shot objective weight"},
    {"sml.learning_rate", K::kFloat, "0.001", "Adam learning rate"},
    {"sml.epochs", K::kInt, "20", "epochs over the records"},
    {"sml.distil_batch", K::kInt, "32", "records per step"},
    {"sml.zero_batch", K::kInt, "8", "fresh instances per step"},
    {"sml.hidden", K::kInt, "128", "hidden width"},
    {"eval.methods", K::kStringList, "[\"nn\", \"nn2opt\"]", "nn, nn2opt, exact, greedy"},
    {"eval.baseline", K::kString, "\"nn2opt\"", "method used as obj_B"},
    {"eval.augmentations", K::kInt, "1", "views for greedy decoding"},
    {"eval.two_opt_passes", K::kInt, "1000", "2-opt sweep budget"},
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view origin,
                            const std::string& why) {
  fail(ErrorCode::kConfiguration, std::string(origin) + ": " + std::string(key) + " = " +
                                      std::string(value) + ": " + why);
}

std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out + "\"";
}

// Parses a quoted string; `pos` ends past the closing quote.
std::string unquote(std::string_view s, std::size_t& pos) {
  std::string out;
  for (++pos; pos < s.size(); ++pos) {
    const char c = s[pos];
    if (c == '"') {
      ++pos;
      return out;
    }
    if (c == '\\' && pos + 1 < s.size()) {
      const char e = s[++pos];
      out += e == 'n' ? '\n' : e == 't' ? '\t' : e;
    } else {
      out += c;
    }
  }
  fail(ErrorCode::kConfiguration, "unterminated string");
}

std::string scalar_text(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '"') {
    std::size_t pos = 0;
    std::string out = unquote(s, pos);
    if (!trim(s.substr(pos)).empty()) fail(ErrorCode::kConfiguration, "text after string");
    return out;
  }
  return std::string(s);
}

std::vector<std::string> list_items(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '[') {
    if (s.back() != ']') fail(ErrorCode::kConfiguration, "unterminated list");
    s = trim(s.substr(1, s.size() - 2));
  }
  std::vector<std::string> items;
  if (s.empty()) return items;
  std::size_t pos = 0;
  while (true) {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    std::string item;
    if (pos < s.size() && s[pos] == '"') {
      item = unquote(s, pos);
    } else {
      const std::size_t end = std::min(s.find(',', pos), s.size());
      item = std::string(trim(s.substr(pos, end - pos)));
      pos = end;
    }
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    items.push_back(std::move(item));
    if (pos >= s.size()) break;
    if (s[pos] != ',') fail(ErrorCode::kConfiguration, "expected ',' in list");
    ++pos;
  }
  return items;
}

std::int64_t parse_int(std::string_view s) {
  s = trim(s);
  std::int64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size()) {
    fail(ErrorCode::kConfiguration, "not an integer");
  }
  return v;
}

double parse_float(std::string_view s) {
  s = trim(s);
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) {
    fail(ErrorCode::kConfiguration, "not a finite number");
  }
  return v;
}

// Shortest text that parses back to the same double.
std::string shortest(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string canonical(ValueKind kind, std::string_view value) {
  switch (kind) {
    case K::kString:
      return quote(scalar_text(value));
    case K::kInt:
      return std::to_string(parse_int(scalar_text(value)));
    case K::kFloat:
      return shortest(parse_float(scalar_text(value)));
    case K::kBool: {
      const std::string t = scalar_text(value);
      if (t == "true" || t == "1") return "true";
      if (t == "false" || t == "0") return "false";
      fail(ErrorCode::kConfiguration, "not a boolean");
    }
    case K::kIntList:
    case K::kStringList: {
      std::string out = "[";
      bool first = true;
      for (const auto& item : list_items(value)) {
        if (!first) out += ", ";
        first = false;
        out += kind == K::kIntList ? std::to_string(parse_int(item)) : quote(item);
      }
      return out + "]";
    }
  }
  return {};
}

std::string env_name(std::string_view prefix, std::string_view key) {
  std::string name(prefix);
  for (char c : key) name += c == '.' ? '_' : static_cast<char>(std::toupper(c));
  return name;
}

std::size_t checked_size(std::int64_t v, std::string_view key) {
  if (v < 0) fail(ErrorCode::kConfiguration, std::string(key) + " must not be negative");
  return static_cast<std::size_t>(v);
}

}  // namespace

const std::vector<KeySpec>& config_schema() { return kSchema; }

RunConfig::RunConfig() {
  for (const auto& s : kSchema) {
    values_.emplace(std::string(s.key), canonical(s.kind, s.default_value));
  }
}

const KeySpec& RunConfig::schema_entry(std::string_view key) const {
  for (const auto& s : kSchema) {
    if (s.key == key) return s;
  }
  fail(ErrorCode::kConfiguration, "unknown configuration key " + std::string(key));
}

bool RunConfig::has_key(std::string_view key) const { return values_.count(key) != 0; }

void RunConfig::set(std::string_view key, std::string_view value, std::string_view origin) {
  if (!has_key(key)) {
    fail(ErrorCode::kConfiguration,
         std::string(origin) + ": unknown configuration key " + std::string(key));
  }
  const KeySpec& s = schema_entry(key);
  try {
    values_.find(key)->second = canonical(s.kind, value);
  } catch (const Error& e) {
    bad_value(key, value, origin, e.what());
  }
}

void RunConfig::merge_text(std::string_view text, std::string_view origin) {
  std::string section;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find('\n', start), text.size());
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    const std::string where = std::string(origin) + ":" + std::to_string(line_no);
    // Strip comments outside quotes.
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '\\' && in_string) {
        ++i;
      } else if (line[i] == '"') {
        in_string = !in_string;
      } else if (line[i] == '#' && !in_string) {
        line = line.substr(0, i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']') fail(ErrorCode::kConfiguration, where + ": bad section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
    } else {
      const std::size_t eq = line.find('=');
      if (eq == std::string_view::npos) {
        fail(ErrorCode::kConfiguration, where + ": expected key = value");
      }
      const std::string name(trim(line.substr(0, eq)));
      const std::string key = section.empty() ? name : section + "." + name;
      set(key, line.substr(eq + 1), where);
    }
    if (end == text.size()) break;
  }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  merge_text(read_text(path), path.string());
}

std::size_t RunConfig::merge_env(std::string_view prefix) {
  std::size_t taken = 0;
  for (const auto& s : kSchema) {
    const std::string name = env_name(prefix, s.key);
    if (const char* v = std::getenv(name.c_str())) {
      set(s.key, v, "environment " + name);
      ++taken;
    }
  }
  return taken;
}

const std::string& RunConfig::raw(std::string_view key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) {
    fail(ErrorCode::kConfiguration, "unknown configuration key " + std::string(key));
  }
  return it->second;
}

std::string RunConfig::get_string(std::string_view key) const { return scalar_text(raw(key)); }
std::int64_t RunConfig::get_int(std::string_view key) const { return parse_int(raw(key)); }
std::size_t RunConfig::get_size(std::string_view key) const {
  return checked_size(get_int(key), key);
}
double RunConfig::get_double(std::string_view key) const { return parse_float(raw(key)); }
bool RunConfig::get_bool(std::string_view key) const { return raw(key) == "true"; }

std::vector<std::int64_t> RunConfig::get_int_list(std::string_view key) const {
  std::vector<std::int64_t> out;
  for (const auto& item : list_items(raw(key))) out.push_back(parse_int(item));
  return out;
}

std::vector<std::string> RunConfig::get_string_list(std::string_view key) const {
  return list_items(raw(key));
}

std::string RunConfig::to_toml() const {
  std::string out;
  std::string_view section;
  for (const auto& s : kSchema) {
    const std::size_t dot = s.key.find('.');
    const std::string_view sec = s.key.substr(0, dot);
    if (sec != section) {
      if (!out.empty()) out += '\n';
      out += "[" + std::string(sec) + "]\n";
      section = sec;
    }
    out += std::string(s.key.substr(dot + 1)) + " = " + raw(s.key) + '\n';
  }
  return out;
}

Task config_task(const RunConfig& config) {
  try {
    return parse_task(config.get_string("run.task"));
  } catch (const Error& e) {
    fail(ErrorCode::kConfiguration, std::string("run.task: ") + e.what());
  }
}

PolicyConfig policy_config(const RunConfig& config) {
  PolicyConfig p;
  p.task = config_task(config);
  p.embed_dim = config.get_size("policy.embed_dim");
  p.heads = config.get_size("policy.heads");
  p.layers = config.get_size("policy.layers");
  p.ff_dim = config.get_size("policy.ff_dim");
  p.clip_c = config.get_double("policy.clip_c");
  p.validate();
  return p;
}

TrainConfig train_config(const RunConfig& config) {
  TrainConfig t;
  t.task = config_task(config);
  t.policy = policy_config(config);
  t.n_train = config.get_size("train.n_train");
  t.batch_instances = config.get_size("train.batch_instances");
  t.multistart = config.get_size("train.multistart");
  t.epochs = config.get_size("train.epochs");
  t.steps_per_epoch = config.get_size("train.steps_per_epoch");
  t.learning_rate = config.get_double("train.learning_rate");
  t.chunk_instances = config.get_size("train.chunk_instances");
  t.seed = static_cast<std::uint64_t>(config.get_int("run.seed"));
  t.workers = config.get_size("run.workers");
  t.validate();
  return t;
}

SageConfig sage_config(const RunConfig& config) {
  SageConfig s;
  s.iterations = config.get_size("sage.iterations");
  s.multistart = config.get_size("sage.multistart");
  s.augmentations = config.get_size("sage.augmentations");
  s.lambda = config.get_double("sage.lambda");
  s.delta = config.get_double("sage.delta");
  s.alpha0 = config.get_double("sage.alpha0");
  s.alpha_k = config.get_double("sage.alpha_k");
  s.temp0 = config.get_double("sage.temp0");
  s.temp_k = config.get_double("sage.temp_k");
  try {
    s.mode = parse_adapt_mode(config.get_string("sage.mode"));
  } catch (const Error& e) {
    fail(ErrorCode::kConfiguration, std::string("sage.mode: ") + e.what());
  }
  s.global_incumbent = config.get_bool("sage.global_incumbent");
  s.adapter_hidden = config.get_size("sage.adapter_hidden");
  s.batch_instances = config.get_size("sage.batch_instances");
  s.workers = config.get_size("run.workers");
  s.seed = derive_seed(static_cast<std::uint64_t>(config.get_int("run.seed")), kSageSeedTag);
  s.validate();
  return s;
}

DistillConfig distill_config(const RunConfig& config) {
  DistillConfig d;
  d.scales.clear();
  for (std::int64_t n : config.get_int_list("distill.scales")) {
    if (n < 2) fail(ErrorCode::kConfiguration, "distill.scales entries must be at least 2");
    d.scales.push_back(static_cast<std::size_t>(n));
  }
  if (d.scales.empty()) fail(ErrorCode::kConfiguration, "distill.scales must not be empty");
  d.per_scale = config.get_size("distill.per_scale");
  if (d.per_scale == 0) fail(ErrorCode::kConfiguration, "distill.per_scale must be positive");
  const auto seed = static_cast<std::uint64_t>(config.get_int("run.seed"));
  d.sage = sage_config(config);
  d.sage.mode = AdaptMode::kSage;
  d.sage.iterations = config.get_size("distill.iterations");
  d.sage.seed = derive_seed(seed, kDistillSageTag);
  d.seed = derive_seed(seed, kDistillSeedTag);
  return d;
}

SmlTrainConfig sml_train_config(const RunConfig& config) {
  SmlTrainConfig s;
  s.beta = config.get_double("sml.beta");
  s.learning_rate = config.get_double("sml.learning_rate");
  s.epochs = config.get_size("sml.epochs");
  s.distil_batch = config.get_size("sml.distil_batch");
  s.zero_batch = config.get_size("sml.zero_batch");
  s.network.hidden = config.get_size("sml.hidden");
  s.sage = sage_config(config);
  s.sage.mode = AdaptMode::kSage;
  s.seed = derive_seed(static_cast<std::uint64_t>(config.get_int("run.seed")), kSmlSeedTag);
  return s;
}

}  // namespace routeadapt
