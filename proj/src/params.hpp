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

// Named parameter collections, the Adam optimiser and the binary
// named-tensor container used for checkpoints and distillation records.

#ifndef ROUTEADAPT_PARAMS_HPP_
#define ROUTEADAPT_PARAMS_HPP_

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "autodiff.hpp"

namespace routeadapt {

class ParamView;

// Ordered name -> tensor map. Values are always detached.
class ParamSet {
 public:
  void add(std::string name, ad::Tensor value);
  bool contains(std::string_view name) const;
  const ad::Tensor& get(std::string_view name) const;
  void set(std::string_view name, ad::Tensor value);

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const ad::Tensor& value(std::size_t i) const { return values_[i]; }
  void set_value(std::size_t i, ad::Tensor value);
  std::size_t index(std::string_view name) const;

  // Registers every tensor as a leaf of `tape`.
  ParamView bind(ad::Tape& tape) const;
  // Read-only view over the stored values; nothing is recorded.
  ParamView constant() const;

  // FNV-1a over names, shapes and payload bytes.
  std::uint64_t checksum() const;

 private:
  std::vector<std::string> names_;
  std::vector<ad::Tensor> values_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

class ParamView {
 public:
  ParamView() = default;
  ParamView(const ParamSet* set, std::vector<ad::Tensor> tensors)
      : set_(set), tensors_(std::move(tensors)) {}

  const ad::Tensor& operator()(std::string_view name) const;
  const ad::Tensor& at(std::size_t i) const { return tensors_[i]; }
  std::size_t size() const { return tensors_.size(); }
  bool empty() const { return set_ == nullptr; }

  // Gradient payloads aligned with the parameter order; zeros for
  // parameters the loss does not reach.
  std::vector<std::vector<double>> gradients(const ad::Gradients& grads) const;

 private:
  const ParamSet* set_ = nullptr;
  std::vector<ad::Tensor> tensors_;
};

// Adam with bias correction.
class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-8);

  void step(ParamSet& params, const std::vector<std::vector<double>>& grads);
  double learning_rate() const { return lr_; }
  std::int64_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Glorot-uniform style initialisation used across the networks.
ad::Tensor uniform_init(std::size_t rows, std::size_t cols, double bound, std::mt19937_64& rng);

// Writes `params` as: magic "RADT", version byte, u32 count, then per entry
// u32 name length, name bytes, u32 rank, u64 dims, float64 payload.
// All integers and floats little-endian.
void save_params(const ParamSet& params, const std::filesystem::path& path);
ParamSet load_params(const std::filesystem::path& path);
std::vector<char> encode_params(const ParamSet& params);
ParamSet decode_params(std::string_view bytes);

inline constexpr char kParamMagic[4] = {'R', 'A', 'D', 'T'};
inline constexpr std::uint8_t kParamVersion = 1;

}  // namespace routeadapt

#endif  // ROUTEADAPT_PARAMS_HPP_
