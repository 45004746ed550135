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

#include "policy.hpp"

#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

namespace routeadapt {

namespace {

using ad::Tensor;

std::string layer_name(std::size_t l, const char* suffix) {
  return "enc.l" + std::to_string(l) + "." + suffix;
}

void add_linear(ParamSet& p, const std::string& prefix, std::size_t in, std::size_t out,
                bool bias, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  p.add(prefix + ".w", uniform_init(in, out, bound, rng));
  if (bias) p.add(prefix + ".b", uniform_init(1, out, bound, rng));
}

Tensor linear(const ParamView& p, const std::string& prefix, const Tensor& x) {
  return ad::add(ad::matmul(x, p(prefix + ".w")), p(prefix + ".b"));
}

// Static node features: customers (or every TSP city) and, for depot tasks,
// the depot's coordinates.
Tensor node_features(const Instance& inst, std::size_t begin) {
  const std::size_t f = node_feature_count(inst.task);
  const std::size_t n = inst.nodes() - begin;
  std::vector<double> data(n * f);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t v = begin + i;
    double* row = data.data() + i * f;
    row[0] = inst.coords[v].x;
    row[1] = inst.coords[v].y;
    switch (inst.task) {
      case Task::kTsp:
        break;
      case Task::kCvrp:
        row[2] = inst.demands[v];
        break;
      case Task::kPctsp:
        row[2] = inst.prizes[v];
        row[3] = inst.penalties[v];
        break;
      case Task::kOp:
        row[2] = inst.prizes[v];
        break;
    }
  }
  return Tensor::matrix(n, f, std::move(data));
}

void context_features(const RolloutState& s, std::span<double> out) {
  const Instance& inst = s.instance();
  switch (inst.task) {
    case Task::kTsp:
      break;
    case Task::kCvrp:
      out[0] = s.remaining_capacity();
      break;
    case Task::kPctsp:
      out[0] = std::max(0.0, inst.min_prize.value_or(kDefaultMinPrize) - s.collected_prize());
      break;
    case Task::kOp:
      out[0] = inst.max_length.value_or(0.0) - s.traveled_length();
      break;
  }
}

std::size_t choose(std::span<const double> probs, std::span<const double> log_probs,
                   std::span<const std::uint8_t> mask, DecodeMode mode, Rng& rng) {
  const std::size_t n = probs.size();
  if (mode == DecodeMode::kGreedy) {
    std::size_t best = kNoNode;
    for (std::size_t j = 0; j < n; ++j) {
      if (mask[j] && (best == kNoNode || log_probs[j] > log_probs[best])) best = j;
    }
    return best;
  }
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t last = kNoNode;
  for (std::size_t j = 0; j < n; ++j) {
    if (!mask[j]) continue;
    last = j;
    acc += probs[j];
    if (u < acc) return j;
  }
  return last;  // rounding left a sliver above the cumulative sum
}

std::size_t meta_size(const ParamSet& meta, const char* name) {
  const std::string key = std::string("meta.") + name;
  if (!meta.contains(key)) fail(ErrorCode::kMalformedDocument, "checkpoint lacks " + key);
  const double v = meta.get(key).item();
  if (!(v >= 0.0) || v != std::floor(v)) {
    fail(ErrorCode::kMalformedDocument, "checkpoint field " + key + " is not a count");
  }
  return static_cast<std::size_t>(v);
}

}  // namespace

void PolicyConfig::validate() const {
  if (embed_dim == 0 || heads == 0 || layers == 0 || ff_dim == 0) {
    fail(ErrorCode::kConfiguration, "policy dimensions must be positive");
  }
  if (embed_dim % heads != 0) {
    fail(ErrorCode::kConfiguration, "embed_dim " + std::to_string(embed_dim) +
                                        " is not divisible by heads " + std::to_string(heads));
  }
  if (!(clip_c > 0.0)) fail(ErrorCode::kConfiguration, "clip_c must be positive");
}

void DecodeConfig::validate() const {
  if (!(temperature > 0.0)) fail(ErrorCode::kArgument, "temperature must be positive");
  if (!(alpha >= 0.0)) fail(ErrorCode::kArgument, "alpha must be non-negative");
  if (multistart == 0) fail(ErrorCode::kArgument, "multistart must be positive");
  if (augmentations == 0 || augmentations > 8) {
    fail(ErrorCode::kArgument, "augmentations must be in 1..8");
  }
}

std::size_t node_feature_count(Task task) {
  switch (task) {
    case Task::kTsp:
      return 2;
    case Task::kCvrp:
    case Task::kOp:
      return 3;
    case Task::kPctsp:
      return 4;
  }
  return 2;
}

std::size_t context_feature_count(Task task) { return task == Task::kTsp ? 0 : 1; }

Policy Policy::init(const PolicyConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  Policy policy{config, {}};
  ParamSet& p = policy.params;
  const std::size_t d = config.embed_dim;
  add_linear(p, "enc.in", node_feature_count(config.task), d, true, rng);
  if (has_depot(config.task)) add_linear(p, "enc.depot", 2, d, true, rng);
  for (std::size_t l = 0; l < config.layers; ++l) {
    for (const char* w : {"wq", "wk", "wv", "wo"}) {
      p.add(layer_name(l, w), uniform_init(d, d, 1.0 / std::sqrt(static_cast<double>(d)), rng));
    }
    p.add(layer_name(l, "norm1.g"), Tensor::filled({1, d}, 1.0));
    p.add(layer_name(l, "norm1.b"), Tensor::zeros({1, d}));
    add_linear(p, layer_name(l, "ff1"), d, config.ff_dim, true, rng);
    add_linear(p, layer_name(l, "ff2"), config.ff_dim, d, true, rng);
    p.add(layer_name(l, "norm2.g"), Tensor::filled({1, d}, 1.0));
    p.add(layer_name(l, "norm2.b"), Tensor::zeros({1, d}));
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  for (const char* w : {"dec.wk", "dec.wv", "dec.wo", "dec.wl"}) {
    p.add(w, uniform_init(d, d, bound, rng));
  }
  if (const std::size_t s = context_feature_count(config.task); s > 0) {
    p.add("dec.wctx", uniform_init(s, d, 1.0, rng));
  }
  return policy;
}

void save_policy(const Policy& policy, const std::filesystem::path& path) {
  ParamSet out;
  const PolicyConfig& c = policy.config;
  out.add("meta.task", Tensor::scalar(static_cast<double>(c.task)));
  out.add("meta.embed_dim", Tensor::scalar(static_cast<double>(c.embed_dim)));
  out.add("meta.heads", Tensor::scalar(static_cast<double>(c.heads)));
  out.add("meta.layers", Tensor::scalar(static_cast<double>(c.layers)));
  out.add("meta.ff_dim", Tensor::scalar(static_cast<double>(c.ff_dim)));
  out.add("meta.clip_c", Tensor::scalar(c.clip_c));
  for (std::size_t i = 0; i < policy.params.size(); ++i) {
    out.add(policy.params.name(i), policy.params.value(i));
  }
  save_params(out, path);
}

Policy load_policy(const std::filesystem::path& path) {
  const ParamSet all = load_params(path);
  ParamSet meta;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (all.name(i).starts_with("meta.")) meta.add(all.name(i), all.value(i));
  }
  PolicyConfig c;
  const std::size_t task = meta_size(meta, "task");
  if (task > static_cast<std::size_t>(Task::kOp)) {
    fail(ErrorCode::kMalformedDocument, "checkpoint names an unknown task");
  }
  c.task = static_cast<Task>(task);
  c.embed_dim = meta_size(meta, "embed_dim");
  c.heads = meta_size(meta, "heads");
  c.layers = meta_size(meta, "layers");
  c.ff_dim = meta_size(meta, "ff_dim");
  if (!meta.contains("meta.clip_c")) fail(ErrorCode::kMalformedDocument, "checkpoint lacks clip_c");
  c.clip_c = meta.get("meta.clip_c").item();
  try {
    c.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kMalformedDocument, std::string("checkpoint architecture: ") + e.what());
  }
  Policy policy = Policy::init(c, 0);
  if (all.size() != policy.params.size() + meta.size()) {
    fail(ErrorCode::kMalformedDocument, "checkpoint parameter count does not match architecture");
  }
  for (std::size_t i = 0; i < policy.params.size(); ++i) {
    const std::string& name = policy.params.name(i);
    if (!all.contains(name)) fail(ErrorCode::kMalformedDocument, "checkpoint lacks " + name);
    const Tensor& v = all.get(name);
    if (v.shape() != policy.params.value(i).shape()) {
      fail(ErrorCode::kMalformedDocument, "checkpoint tensor " + name + " has shape " +
                                              ad::shape_string(v.shape()));
    }
    policy.params.set_value(i, v);
  }
  return policy;
}

Tensor encode_stacked(const ParamView& theta, const PolicyConfig& config,
                      std::span<const std::shared_ptr<const Instance>> instances) {
  if (instances.empty()) fail(ErrorCode::kArgument, "nothing to encode");
  const std::size_t g_count = instances.size();
  const std::size_t n = instances[0]->nodes();
  for (const auto& inst : instances) {
    if (inst->task != config.task) {
      fail(ErrorCode::kArgument, "policy for " + std::string(task_name(config.task)) +
                                     " cannot encode a " + std::string(task_name(inst->task)) +
                                     " instance");
    }
    if (inst->nodes() != n) fail(ErrorCode::kDimension, "stacked instances differ in size");
  }
  if (n == 0) fail(ErrorCode::kArgument, "cannot encode an empty instance");
  Tensor h;
  if (has_depot(config.task)) {
    std::vector<double> depots;
    std::vector<Tensor> customers;
    for (const auto& inst : instances) {
      depots.push_back(inst->coords[0].x);
      depots.push_back(inst->coords[0].y);
      if (n > 1) customers.push_back(node_features(*inst, 1));
    }
    const Tensor dep = linear(theta, "enc.depot", Tensor::matrix(g_count, 2, std::move(depots)));
    if (n > 1) {
      const Tensor cust = linear(theta, "enc.in", ad::concat_rows(customers));
      const Tensor parts[] = {dep, cust};
      // Interleave so every instance's block starts with its depot.
      std::vector<std::size_t> order(g_count * n);
      for (std::size_t g = 0; g < g_count; ++g) {
        order[g * n] = g;
        for (std::size_t j = 1; j < n; ++j) order[g * n + j] = g_count + g * (n - 1) + j - 1;
      }
      h = ad::gather_rows(ad::concat_rows(parts), order);
    } else {
      h = dep;
    }
  } else {
    std::vector<Tensor> feats;
    for (const auto& inst : instances) feats.push_back(node_features(*inst, 0));
    h = linear(theta, "enc.in", g_count == 1 ? feats[0] : ad::concat_rows(feats));
  }
  const std::size_t dk = config.key_dim();
  const double inv = 1.0 / std::sqrt(static_cast<double>(dk));
  const std::vector<std::uint8_t> open(g_count * n * n, 1);
  for (std::size_t l = 0; l < config.layers; ++l) {
    const Tensor q = ad::matmul(h, theta(layer_name(l, "wq")));
    const Tensor k = ad::matmul(h, theta(layer_name(l, "wk")));
    const Tensor v = ad::matmul(h, theta(layer_name(l, "wv")));
    std::vector<Tensor> heads;
    for (std::size_t hd = 0; hd < config.heads; ++hd) {
      const Tensor qh = ad::slice_cols(q, hd * dk, dk);
      const Tensor kh = ad::slice_cols(k, hd * dk, dk);
      const Tensor vh = ad::slice_cols(v, hd * dk, dk);
      const Tensor w =
          ad::softmax_rows(ad::scale(ad::bmm_nt(qh, kh, g_count), inv), 1.0, open);
      heads.push_back(ad::bmm(w, vh, g_count));
    }
    const Tensor mha = ad::matmul(config.heads == 1 ? heads[0] : ad::concat_cols(heads),
                                  theta(layer_name(l, "wo")));
    h = ad::instance_norm(ad::add(h, mha), theta(layer_name(l, "norm1.g")),
                          theta(layer_name(l, "norm1.b")), 1e-5, g_count);
    const Tensor ff =
        linear(theta, layer_name(l, "ff2"), ad::relu(linear(theta, layer_name(l, "ff1"), h)));
    h = ad::instance_norm(ad::add(h, ff), theta(layer_name(l, "norm2.g")),
                          theta(layer_name(l, "norm2.b")), 1e-5, g_count);
  }
  return h;
}

Embeddings encode(const ParamView& theta, const PolicyConfig& config, const Instance& inst) {
  const std::shared_ptr<const Instance> one[] = {std::make_shared<const Instance>(inst)};
  Tensor h = encode_stacked(theta, config, one);
  Tensor m = ad::mean_rows(h);
  return {std::move(h), std::move(m)};
}

Instance augment(const Instance& instance, std::size_t index) {
  if (index >= 8) fail(ErrorCode::kArgument, "augmentation index must be in 0..7");
  Instance out = instance;
  for (Point& p : out.coords) {
    double x = p.x, y = p.y;
    if (index & 4) std::swap(x, y);
    if (index & 1) x = 1.0 - x;
    if (index & 2) y = 1.0 - y;
    p = {x, y};
  }
  return out;
}

ParamSet init_adapter(const AdapterConfig& config, std::uint64_t seed) {
  if (config.width == 0 || config.hidden == 0) {
    fail(ErrorCode::kConfiguration, "adapter dimensions must be positive");
  }
  std::mt19937_64 rng(seed);
  ParamSet eta;
  add_linear(eta, "eta.l1", config.width, config.hidden, true, rng);
  // Zero output layer: the adapted policy starts out identical to the base.
  eta.add("eta.l2.w", Tensor::zeros({config.hidden, config.width}));
  eta.add("eta.l2.b", Tensor::zeros({1, config.width}));
  return eta;
}

Tensor apply_adapter(const ParamView& eta, const Tensor& q) {
  return ad::add(q, linear(eta, "eta.l2", ad::relu(linear(eta, "eta.l1", q))));
}

Tensor apply_adapters(std::span<const ParamView> etas, const Tensor& q,
                      std::size_t rows_per_instance) {
  if (etas.empty()) return q;
  if (etas.size() == 1) return apply_adapter(etas[0], q);
  const std::size_t count = etas.size();
  if (q.rows() != count * rows_per_instance) {
    fail(ErrorCode::kDimension, "adapter stack of " + std::to_string(count) +
                                    " does not match " + std::to_string(q.rows()) + " rows");
  }
  std::vector<std::size_t> owner(q.rows());
  for (std::size_t r = 0; r < owner.size(); ++r) owner[r] = r / rows_per_instance;
  auto stacked = [&](const char* name) {
    std::vector<Tensor> parts;
    parts.reserve(count);
    for (const auto& eta : etas) parts.push_back(eta(name));
    return ad::concat_rows(parts);
  };
  const Tensor hidden =
      ad::relu(ad::add(ad::bmm(q, stacked("eta.l1.w"), count),
                       ad::gather_rows(stacked("eta.l1.b"), owner)));
  const Tensor out = ad::add(ad::bmm(hidden, stacked("eta.l2.w"), count),
                             ad::gather_rows(stacked("eta.l2.b"), owner));
  return ad::add(q, out);
}

PreparedBatch prepare(const ParamView& theta, const PolicyConfig& config,
                      std::span<const Instance> instances, std::size_t augmentations,
                      const EmbeddingTransform& transform) {
  if (augmentations == 0 || augmentations > 8) {
    fail(ErrorCode::kArgument, "augmentations must be in 1..8");
  }
  if (instances.empty()) fail(ErrorCode::kArgument, "nothing to prepare");
  PreparedBatch batch;
  batch.instances = instances.size();
  batch.augmentations = augmentations;
  batch.nodes = instances[0].nodes();
  for (const auto& inst : instances) {
    for (std::size_t a = 0; a < augmentations; ++a) {
      batch.views.push_back(std::make_shared<const Instance>(augment(inst, a)));
    }
  }
  const std::size_t g_count = batch.groups();
  batch.h = encode_stacked(theta, config, batch.views);
  if (transform) batch.h = transform(batch.h, instances[0].problem_size());
  batch.h_mean = ad::mean_rows(batch.h, g_count);
  const std::size_t dk = config.key_dim();
  const Tensor k = ad::matmul(batch.h, theta("dec.wk"));
  const Tensor v = ad::matmul(batch.h, theta("dec.wv"));
  for (std::size_t h = 0; h < config.heads; ++h) {
    batch.head_keys.push_back(config.heads == 1 ? k : ad::slice_cols(k, h * dk, dk));
    batch.head_values.push_back(config.heads == 1 ? v : ad::slice_cols(v, h * dk, dk));
  }
  batch.logit_keys = ad::matmul(batch.h, theta("dec.wl"));
  return batch;
}

PreparedBatch prepare(const ParamView& theta, const PolicyConfig& config,
                      const Instance& instance, std::size_t augmentations,
                      const EmbeddingTransform& transform) {
  return prepare(theta, config, std::span<const Instance>(&instance, 1), augmentations,
                 transform);
}

StepOutput decode_step(const ParamView& theta, const PolicyConfig& config,
                       const PreparedBatch& batch, std::span<const RolloutState> states,
                       const DecodeConfig& decode, std::span<const ParamView> adapters) {
  decode.validate();
  const std::size_t b_count = states.size();
  const std::size_t g_count = batch.groups();
  const std::size_t n = batch.nodes;
  const std::size_t dk = config.key_dim();
  if (b_count == 0 || b_count % g_count != 0) {
    fail(ErrorCode::kArgument, "decode_step needs an equal, positive number of states per view");
  }
  if (!adapters.empty() && adapters.size() != 1 && adapters.size() != batch.instances) {
    fail(ErrorCode::kArgument, "expected one adapter or one per instance");
  }
  const std::size_t per_view = b_count / g_count;

  StepOutput out;
  out.mask.assign(b_count * n, 0);
  const bool started = states[0].current() != kNoNode;
  std::vector<std::size_t> cur(b_count), first(b_count), view_of(b_count);
  const std::size_t s = context_feature_count(config.task);
  std::vector<double> ctx(b_count * s, 0.0);
  std::vector<double> dist;
  if (decode.alpha != 0.0) dist.assign(b_count * n, 0.0);
  for (std::size_t b = 0; b < b_count; ++b) {
    const RolloutState& st = states[b];
    const std::size_t g = b / per_view;
    if (st.instance().nodes() != n) {
      fail(ErrorCode::kDimension, "state does not match its view");
    }
    if ((st.current() != kNoNode) != started) {
      fail(ErrorCode::kContract, "decode_step batch mixes started and unstarted states");
    }
    view_of[b] = g;
    cur[b] = g * n + (started ? st.current() : 0);
    first[b] = g * n + (started ? st.first() : 0);
    std::span<std::uint8_t> row(out.mask.data() + b * n, n);
    if (st.terminal()) {
      row[0] = 1;
      continue;
    }
    st.feasible_mask(row);
    if (s > 0) context_features(st, std::span<double>(ctx.data() + b * s, s));
    if (!dist.empty()) st.locality_distances(std::span<double>(dist.data() + b * n, n));
  }

  Tensor q = ad::gather_rows(batch.h_mean, view_of);
  if (started) {
    q = ad::add(q, ad::add(ad::gather_rows(batch.h, first), ad::gather_rows(batch.h, cur)));
  }
  if (s > 0) q = ad::add(q, ad::matmul(Tensor::matrix(b_count, s, ctx), theta("dec.wctx")));

  const double inv = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<Tensor> heads;
  heads.reserve(config.heads);
  for (std::size_t h = 0; h < config.heads; ++h) {
    const Tensor qh = config.heads == 1 ? q : ad::slice_cols(q, h * dk, dk);
    const Tensor w = ad::softmax_rows(
        ad::scale(ad::bmm_nt(qh, batch.head_keys[h], g_count), inv), 1.0, out.mask);
    heads.push_back(ad::bmm(w, batch.head_values[h], g_count));
  }
  Tensor glimpse = ad::matmul(config.heads == 1 ? heads[0] : ad::concat_cols(heads),
                              theta("dec.wo"));
  glimpse = apply_adapters(adapters, glimpse, per_view * batch.augmentations);

  Tensor u = ad::scale(
      ad::tanh(ad::scale(ad::bmm_nt(glimpse, batch.logit_keys, g_count), inv)), config.clip_c);
  if (!dist.empty()) {
    for (double& x : dist) x *= decode.alpha;
    u = ad::sub(u, Tensor::matrix(b_count, n, std::move(dist)));
  }
  out.log_probs = ad::log_softmax_rows(u, decode.temperature, out.mask);
  out.probs.resize(b_count * n);
  for (std::size_t i = 0; i < b_count * n; ++i) {
    out.probs[i] = out.mask[i] ? std::exp(out.log_probs[i]) : 0.0;
  }
  return out;
}

std::vector<std::size_t> start_nodes(const Instance& instance, std::size_t count, Rng& rng) {
  std::vector<std::size_t> candidates;
  if (!has_depot(instance.task)) {
    candidates.resize(instance.nodes());
    std::iota(candidates.begin(), candidates.end(), 0);
  } else {
    const RolloutState init(std::make_shared<const Instance>(instance));
    if (!init.terminal()) {
      const auto mask = init.feasible_mask();
      for (std::size_t j = 1; j < mask.size(); ++j) {
        if (mask[j]) candidates.push_back(j);
      }
    }
    if (candidates.empty()) candidates.push_back(0);
  }
  if (count < candidates.size()) {
    // Partial Fisher-Yates keeps the draw deterministic in the generator.
    for (std::size_t i = 0; i < count; ++i) {
      const auto j = static_cast<std::size_t>(
          rng.integer(static_cast<std::int64_t>(i), static_cast<std::int64_t>(candidates.size() - 1)));
      std::swap(candidates[i], candidates[j]);
    }
    candidates.resize(count);
    return candidates;
  }
  std::vector<std::size_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = candidates[i % candidates.size()];
  return out;
}

namespace {

// Advances every state to termination. `pick_action` returns the action for
// a non-terminal row given its distribution. Returns the summed log-probs.
template <typename Chooser>
Tensor decode_all(const ParamView& theta, const PolicyConfig& config, const PreparedBatch& batch,
                  std::vector<RolloutState>& states, const DecodeConfig& decode,
                  std::span<const ParamView> adapters, Chooser&& pick_action) {
  const std::size_t m = states.size(), n = batch.nodes;
  Tensor total = Tensor::zeros({m});
  std::vector<std::size_t> actions(m);
  for (std::size_t t = 0;; ++t) {
    bool open = false;
    for (const auto& s : states) open = open || !s.terminal();
    if (!open) break;
    if (t > 4 * n + 8) fail(ErrorCode::kContract, "decoding did not terminate");
    const StepOutput step = decode_step(theta, config, batch, states, decode, adapters);
    const double* lp = step.log_probs.data().data();
    for (std::size_t b = 0; b < m; ++b) {
      if (states[b].terminal()) {
        actions[b] = 0;
        continue;
      }
      actions[b] = pick_action(b, std::span<const double>(step.probs.data() + b * n, n),
                               std::span<const double>(lp + b * n, n),
                               std::span<const std::uint8_t>(step.mask.data() + b * n, n));
    }
    total = ad::add(total, ad::pick(step.log_probs, actions));
    for (std::size_t b = 0; b < m; ++b) {
      if (!states[b].terminal()) states[b].step(actions[b]);
    }
  }
  return total;
}

}  // namespace

namespace {

template <typename RngFor>
RolloutBatch rollout_impl(const ParamView& theta, const PolicyConfig& config,
                          const PreparedBatch& batch, const DecodeConfig& decode,
                          std::span<const ParamView> adapters, RngFor&& rng_for) {
  decode.validate();
  const std::size_t g_count = batch.groups(), a_count = batch.augmentations;
  const std::size_t m = decode.multistart;
  std::vector<RolloutState> states;
  states.reserve(g_count * m);
  for (std::size_t i = 0; i < batch.instances; ++i) {
    const std::vector<std::size_t> starts = start_nodes(batch.original(i), m, rng_for(i));
    for (std::size_t a = 0; a < a_count; ++a) {
      for (std::size_t b = 0; b < m; ++b) {
        states.emplace_back(batch.views[i * a_count + a]);
        states.back().step(starts[b]);
      }
    }
  }
  RolloutBatch out;
  out.per_instance = a_count * m;
  out.log_probs = decode_all(theta, config, batch, states, decode, adapters,
                             [&](std::size_t row, std::span<const double> p,
                                 std::span<const double> lp, std::span<const std::uint8_t> mask) {
                               return choose(p, lp, mask, decode.mode,
                                             rng_for(row / out.per_instance));
                             });
  out.solutions.reserve(states.size());
  for (std::size_t r = 0; r < states.size(); ++r) {
    out.solutions.push_back(
        make_solution(batch.original(r / out.per_instance), states[r].partial()));
  }
  return out;
}

}  // namespace

RolloutBatch rollout(const ParamView& theta, const PolicyConfig& config,
                     const PreparedBatch& batch, const DecodeConfig& decode,
                     std::span<const ParamView> adapters, Rng& rng) {
  return rollout_impl(theta, config, batch, decode, adapters,
                      [&](std::size_t) -> Rng& { return rng; });
}

RolloutBatch rollout(const ParamView& theta, const PolicyConfig& config,
                     const PreparedBatch& batch, const DecodeConfig& decode,
                     std::span<const ParamView> adapters, std::span<Rng> rngs) {
  if (rngs.size() != batch.instances) {
    fail(ErrorCode::kArgument, "need one generator per instance");
  }
  return rollout_impl(theta, config, batch, decode, adapters,
                      [&](std::size_t i) -> Rng& { return rngs[i]; });
}

Tensor score_trajectories(const ParamView& theta, const PolicyConfig& config,
                          const PreparedBatch& batch,
                          std::span<const std::vector<std::size_t>> trajectories,
                          const DecodeConfig& decode, std::span<const ParamView> adapters) {
  const std::size_t g_count = batch.groups();
  if (trajectories.empty() || trajectories.size() % g_count != 0) {
    fail(ErrorCode::kArgument, "need an equal, positive number of trajectories per view");
  }
  const std::size_t per_view = trajectories.size() / g_count;
  std::vector<RolloutState> states;
  states.reserve(trajectories.size());
  for (std::size_t b = 0; b < trajectories.size(); ++b) {
    if (trajectories[b].empty()) fail(ErrorCode::kArgument, "empty trajectory");
    states.emplace_back(batch.views[b / per_view]);
    states.back().step(trajectories[b][0]);
  }
  return decode_all(theta, config, batch, states, decode, adapters,
                    [&](std::size_t b, std::span<const double>, std::span<const double>,
                        std::span<const std::uint8_t> mask) {
                      const std::size_t t = states[b].partial().size();
                      if (t >= trajectories[b].size()) {
                        fail(ErrorCode::kArgument, "trajectory ends before a terminal state");
                      }
                      const std::size_t action = trajectories[b][t];
                      if (action >= mask.size() || !mask[action]) {
                        fail(ErrorCode::kFeasibilityViolation,
                             "trajectory takes masked action " + std::to_string(action));
                      }
                      return action;
                    });
}

std::size_t best_index(Task task, std::span<const Solution> solutions) {
  if (solutions.empty()) fail(ErrorCode::kArgument, "no solutions");
  std::size_t best = 0;
  for (std::size_t i = 1; i < solutions.size(); ++i) {
    if (better(task, solutions[i].objective, solutions[best].objective)) best = i;
  }
  return best;
}

std::size_t start_candidates(const Instance& instance) {
  if (!has_depot(instance.task)) return instance.nodes();
  const RolloutState init(std::make_shared<const Instance>(instance));
  if (init.terminal()) return 1;
  const auto mask = init.feasible_mask();
  const auto open = static_cast<std::size_t>(std::count(mask.begin() + 1, mask.end(), 1));
  return std::max<std::size_t>(open, 1);
}

std::vector<Solution> solve_greedy(const ParamView& theta, const PolicyConfig& config,
                                   std::span<const Instance> instances,
                                   const GreedyOptions& options,
                                   const EmbeddingTransform& transform) {
  if (options.batch_size == 0) fail(ErrorCode::kArgument, "batch_size must be positive");
  // Runs of equal node count, capped at batch_size.
  std::vector<std::pair<std::size_t, std::size_t>> runs;
  for (std::size_t i = 0; i < instances.size();) {
    std::size_t j = i + 1;
    while (j < instances.size() && j - i < options.batch_size &&
           instances[j].nodes() == instances[i].nodes()) {
      ++j;
    }
    runs.emplace_back(i, j);
    i = j;
  }
  std::vector<Solution> out(instances.size());
  parallel_for(runs.size(), options.workers, [&](std::size_t r) {
    const auto [lo, hi] = runs[r];
    const auto slice = instances.subspan(lo, hi - lo);
    std::size_t starts = options.starts;
    if (starts == 0) {
      for (const Instance& inst : slice) starts = std::max(starts, start_candidates(inst));
    }
    DecodeConfig decode;
    decode.mode = DecodeMode::kGreedy;
    decode.alpha = options.alpha;
    decode.multistart = starts;
    decode.augmentations = options.augmentations;
    Rng rng(derive_seed(options.seed, lo));
    const PreparedBatch batch = prepare(theta, config, slice, options.augmentations, transform);
    const RolloutBatch roll = rollout(theta, config, batch, decode, {}, rng);
    for (std::size_t i = 0; i < slice.size(); ++i) {
      const auto sols = roll.of_instance(i);
      out[lo + i] = sols[best_index(config.task, sols)];
    }
  });
  return out;
}

}  // namespace routeadapt
