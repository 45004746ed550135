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

#include "sml.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <map>
#include <numeric>
#include <string>

#include "errors.hpp"
#include "instance_io.hpp"
#include "trainer.hpp"

namespace routeadapt {

namespace {

using ad::Tensor;
using json = nlohmann::json;

// sqrt(x + 2^-80) - 2^-40 is exactly zero at x = 0 and smooth everywhere.
constexpr double kNormEps = 0x1p-80;
constexpr double kNormShift = 0x1p-40;

constexpr std::uint64_t kShuffleTag = 0x5F;
constexpr std::uint64_t kZeroTag = 0x2E;

Tensor dense(const ParamView& p, const std::string& prefix, const Tensor& x) {
  return ad::add(ad::matmul(x, p(prefix + ".w")), p(prefix + ".b"));
}

Tensor frobenius(const Tensor& diff) {
  const Tensor flat = diff.reshape({1, diff.size()});
  return ad::add_scalar(ad::row_norms(flat, kNormEps), -kNormShift);
}

std::string record_key(std::size_t id, const char* what) {
  return "rec." + std::to_string(id) + "." + what;
}

}  // namespace

ParamSet init_sml(const SmlConfig& config, std::uint64_t seed) {
  if (config.width == 0 || config.hidden == 0) {
    fail(ErrorCode::kConfiguration, "learner widths must be positive");
  }
  std::mt19937_64 rng(seed);
  ParamSet p;
  auto add = [&](const std::string& name, std::size_t in, std::size_t out, bool zero) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    p.add(name + ".w", zero ? Tensor::zeros({in, out}) : uniform_init(in, out, bound, rng));
    p.add(name + ".b", zero ? Tensor::zeros({1, out}) : uniform_init(1, out, bound, rng));
  };
  add("sml.enc.l1", 1, config.hidden, false);
  add("sml.enc.l2", config.hidden, config.width, false);
  add("sml.comb.l1", config.width, config.hidden, false);
  add("sml.comb.l2", config.hidden, config.width, true);
  return p;
}

std::size_t sml_width(const ParamSet& phi) { return phi.get("sml.comb.l2.w").cols(); }

Tensor apply_sml(const ParamView& phi, const Tensor& h, std::size_t n) {
  if (n < 2) fail(ErrorCode::kArgument, "problem size must be at least 2");
  const std::size_t width = phi("sml.comb.l2.w").cols();
  if (h.cols() != width || phi("sml.comb.l1.w").rows() != width) {
    fail(ErrorCode::kConfiguration, "learner width " + std::to_string(width) +
                                        " does not match embedding width " +
                                        std::to_string(h.cols()));
  }
  const Tensor feature = Tensor::matrix(1, 1, {static_cast<double>(n) / 100.0});
  const Tensor s = dense(phi, "sml.enc.l2", ad::relu(dense(phi, "sml.enc.l1", feature)));
  const Tensor hidden = ad::relu(dense(phi, "sml.comb.l1", ad::add(h, s)));
  return ad::add(h, dense(phi, "sml.comb.l2", hidden));
}

EmbeddingTransform sml_transform(const ParamView& phi, std::optional<std::size_t> n_override) {
  return [phi, n_override](const Tensor& h, std::size_t n) {
    return apply_sml(phi, h, n_override.value_or(n));
  };
}

Instance distill_instance(Task task, const DistillConfig& config, std::size_t id) {
  const std::size_t s = id / config.per_scale;
  if (s >= config.scales.size()) fail(ErrorCode::kArgument, "record id out of range");
  return generate(task, config.scales[s], derive_seed(config.seed, id));
}

std::vector<DistillRecord> build_distill_set(const Policy& policy, const DistillConfig& config) {
  if (config.scales.empty() || config.per_scale == 0) {
    fail(ErrorCode::kConfiguration, "distillation needs at least one scale and one instance");
  }
  const Task task = policy.config.task;
  const ParamView theta = policy.params.constant();
  std::vector<DistillRecord> records;
  for (std::size_t s = 0; s < config.scales.size(); ++s) {
    const std::size_t first = s * config.per_scale;
    std::vector<Instance> insts;
    for (std::size_t l = 0; l < config.per_scale; ++l) {
      insts.push_back(distill_instance(task, config, first + l));
    }
    SageConfig sc = config.sage;
    sc.mode = AdaptMode::kSage;
    sc.multistart = std::min(sc.multistart, start_candidates(insts[0]));
    // Offset the seed so record ids, not positions within a scale, key the
    // random streams.
    sc.seed = derive_seed(config.sage.seed, first);
    std::vector<AdaptResult> adapted;
    try {
      adapted = adapt(insts, sc, policy);
    } catch (const Error& e) {
      fail(e.code(), "distillation at scale " + std::to_string(config.scales[s]) +
                         " (record ids from " + std::to_string(first) + "): " + e.what());
    }
    for (std::size_t l = 0; l < insts.size(); ++l) {
      DistillRecord r;
      r.id = first + l;
      r.n = insts[l].problem_size();
      r.source = encode(theta, policy.config, insts[l]).h;
      r.target = adapted_embeddings(adapted[l].eta, r.source);
      if (r.source.shape() != r.target.shape()) {
        fail(ErrorCode::kDimension, "record " + std::to_string(r.id) + " has mismatched shapes");
      }
      records.push_back(std::move(r));
    }
  }
  return records;
}

void save_distill_set(const std::filesystem::path& dir, std::span<const DistillRecord> records,
                      const DistillConfig& config, Task task) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());
  std::map<std::size_t, ParamSet> files;
  std::map<std::size_t, std::vector<std::size_t>> ids;
  for (const auto& r : records) {
    ParamSet& f = files[r.n];
    f.add(record_key(r.id, "source"), r.source.detach());
    f.add(record_key(r.id, "target"), r.target.detach());
    ids[r.n].push_back(r.id);
  }
  json manifest;
  manifest["task"] = std::string(task_name(task));
  manifest["iterations"] = config.sage.iterations;
  manifest["per_scale"] = config.per_scale;
  manifest["seed"] = config.seed;
  manifest["scales"] = json::array();
  for (const auto& [n, f] : files) {
    const std::string file = "distill_n" + std::to_string(n) + ".bin";
    save_params(f, dir / file);
    manifest["scales"].push_back({{"n", n}, {"file", file}, {"ids", ids[n]}});
  }
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::vector<DistillRecord> load_distill_set(const std::filesystem::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_text(dir / "manifest.json"));
  } catch (const json::exception& e) {
    fail(ErrorCode::kMalformedDocument, "bad distillation manifest: " + std::string(e.what()));
  }
  std::vector<DistillRecord> records;
  try {
    for (const auto& scale : manifest.at("scales")) {
      const auto n = scale.at("n").get<std::size_t>();
      const ParamSet f = load_params(dir / scale.at("file").get<std::string>());
      for (const auto& id_json : scale.at("ids")) {
        const auto id = id_json.get<std::size_t>();
        if (!f.contains(record_key(id, "source")) || !f.contains(record_key(id, "target"))) {
          fail(ErrorCode::kMalformedDocument, "record " + std::to_string(id) + " is missing");
        }
        records.push_back(DistillRecord{id, n, f.get(record_key(id, "source")),
                                        f.get(record_key(id, "target"))});
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kMalformedDocument, "bad distillation manifest: " + std::string(e.what()));
  }
  std::sort(records.begin(), records.end(),
            [](const DistillRecord& a, const DistillRecord& b) { return a.id < b.id; });
  return records;
}

Tensor j_distil(const ParamView& phi, std::span<const DistillRecord> records) {
  if (records.empty()) fail(ErrorCode::kArgument, "no distillation records");
  Tensor total = Tensor::scalar(0.0);
  for (const auto& r : records) {
    total = ad::add(total, ad::sum(frobenius(ad::sub(apply_sml(phi, r.source, r.n), r.target))));
  }
  return ad::scale(total, 1.0 / static_cast<double>(records.size()));
}

double embedding_distance(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) fail(ErrorCode::kDimension, "embedding shapes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

ZeroShotObjective j_zero(const ParamView& phi, const Policy& policy,
                         std::span<const Instance> instances, const SageConfig& sage,
                         std::uint64_t seed) {
  if (instances.empty()) fail(ErrorCode::kArgument, "j_zero needs instances");
  const SageConfig c = effective_config(sage);
  const ParamView theta = policy.params.constant();
  const PreparedBatch batch =
      prepare(theta, policy.config, instances, c.augmentations, sml_transform(phi));
  DecodeConfig d;
  d.alpha = c.alpha0;
  d.temperature = c.temp0;
  d.multistart = std::min(c.multistart, start_candidates(instances[0]));
  d.augmentations = c.augmentations;
  std::vector<Rng> rngs;
  for (std::size_t i = 0; i < instances.size(); ++i) rngs.emplace_back(derive_seed(seed, i));
  const RolloutBatch roll = rollout(theta, policy.config, batch, d, {}, rngs);
  std::vector<double> coef;
  adaptation_coefficients(policy.config.task, roll, c.lambda, true, coef);
  for (double& v : coef) v /= static_cast<double>(instances.size());
  ZeroShotObjective out;
  out.loss = ad::sum(ad::mul(roll.log_probs, Tensor(roll.log_probs.shape(), std::move(coef))));
  for (const auto& s : roll.solutions) out.mean_cost += s.objective;
  out.mean_cost /= static_cast<double>(roll.solutions.size());
  return out;
}

SmlResult train_sml(const Policy& policy, std::span<const DistillRecord> records,
                    const SmlTrainConfig& config) {
  if (records.empty()) fail(ErrorCode::kArgument, "no distillation records");
  if (config.distil_batch == 0 || config.zero_batch == 0) {
    fail(ErrorCode::kConfiguration, "batch sizes must be positive");
  }
  if (!(config.beta >= 0.0) || !(config.learning_rate >= 0.0)) {
    fail(ErrorCode::kConfiguration, "beta and learning_rate must be non-negative");
  }
  SmlConfig net = config.network;
  net.width = policy.config.embed_dim;
  SmlResult result{init_sml(net, config.seed), {}};
  std::vector<std::size_t> scales;
  for (const auto& r : records) scales.push_back(r.n);
  std::sort(scales.begin(), scales.end());
  scales.erase(std::unique(scales.begin(), scales.end()), scales.end());

  Adam adam(config.learning_rate);
  std::vector<std::size_t> order(records.size());
  std::vector<DistillRecord> mini;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle(derive_seed(derive_seed(config.seed, kShuffleTag), epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(shuffle.integer(0, static_cast<std::int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }
    for (std::size_t lo = 0; lo < order.size(); lo += config.distil_batch) {
      ++step;
      mini.clear();
      for (std::size_t i = lo; i < std::min(order.size(), lo + config.distil_batch); ++i) {
        mini.push_back(records[order[i]]);
      }
      ad::Tape tape;
      const ParamView phi = result.phi.bind(tape);
      const Tensor distil = j_distil(phi, mini);
      Tensor loss = distil;
      SmlLogRow row{epoch, step, distil.item(), 0.0};
      if (config.beta > 0.0) {
        const std::size_t n = scales[step % scales.size()];
        const std::uint64_t step_seed = derive_seed(derive_seed(config.seed, kZeroTag), step);
        std::vector<Instance> insts;
        for (std::size_t j = 0; j < config.zero_batch; ++j) {
          insts.push_back(generate(policy.config.task, n, derive_seed(step_seed, j)));
        }
        const ZeroShotObjective z = j_zero(phi, policy, insts, config.sage, step_seed);
        loss = ad::add(loss, ad::scale(z.loss, config.beta));
        row.zero_cost = z.mean_cost;
      }
      const auto grads = phi.gradients(tape.backward(loss));
      bool finite = std::isfinite(loss.item());
      for (const auto& g : grads) {
        for (double v : g) finite = finite && std::isfinite(v);
      }
      if (!finite) {
        fail(ErrorCode::kTrainingDiverged,
             "learner training diverged in epoch " + std::to_string(epoch));
      }
      adam.step(result.phi, grads);
      result.log.push_back(row);
    }
  }
  return result;
}

void write_sml_log(std::ostream& os, std::span<const SmlLogRow> rows) {
  os << "epoch,step,distil,zero_cost\n";
  for (const auto& r : rows) {
    os << r.epoch << ',' << r.step << ',' << format_double(r.distil) << ','
       << format_double(r.zero_cost) << '\n';
  }
}

}  // namespace routeadapt
