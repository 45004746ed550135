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

#include "params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace routeadapt {

static_assert(std::endian::native == std::endian::little,
              "checkpoint codec assumes a little-endian host");

void ParamSet::add(std::string name, ad::Tensor value) {
  if (lookup_.count(name)) {
    fail(ErrorCode::kConfiguration, "duplicate parameter name '" + name + "'");
  }
  lookup_.emplace(name, names_.size());
  names_.push_back(std::move(name));
  values_.push_back(value.detach());
}

bool ParamSet::contains(std::string_view name) const {
  return lookup_.count(std::string(name)) != 0;
}

std::size_t ParamSet::index(std::string_view name) const {
  auto it = lookup_.find(std::string(name));
  if (it == lookup_.end()) {
    fail(ErrorCode::kConfiguration, "missing parameter '" + std::string(name) + "'");
  }
  return it->second;
}

const ad::Tensor& ParamSet::get(std::string_view name) const { return values_[index(name)]; }

void ParamSet::set(std::string_view name, ad::Tensor value) {
  set_value(index(name), std::move(value));
}

void ParamSet::set_value(std::size_t i, ad::Tensor value) {
  if (value.shape() != values_[i].shape()) {
    fail(ErrorCode::kDimension, "parameter '" + names_[i] + "' has shape " +
                                    ad::shape_string(values_[i].shape()) + ", got " +
                                    ad::shape_string(value.shape()));
  }
  values_[i] = value.detach();
}

ParamView ParamSet::bind(ad::Tape& tape) const {
  std::vector<ad::Tensor> bound;
  bound.reserve(values_.size());
  for (const auto& v : values_) bound.push_back(tape.leaf(v));
  return ParamView(this, std::move(bound));
}

ParamView ParamSet::constant() const { return ParamView(this, values_); }

std::uint64_t ParamSet::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (std::size_t i = 0; i < values_.size(); ++i) {
    mix(names_[i].data(), names_[i].size());
    for (std::size_t d : values_[i].shape()) mix(&d, sizeof d);
    mix(values_[i].data().data(), values_[i].size() * sizeof(double));
  }
  return h;
}

const ad::Tensor& ParamView::operator()(std::string_view name) const {
  return tensors_[set_->index(name)];
}

std::vector<std::vector<double>> ParamView::gradients(const ad::Gradients& grads) const {
  std::vector<std::vector<double>> out;
  out.reserve(tensors_.size());
  for (const auto& t : tensors_) {
    auto g = grads.raw(t);
    if (g.empty()) {
      out.emplace_back(t.size(), 0.0);
    } else {
      out.emplace_back(g.begin(), g.end());
    }
  }
  return out;
}

Adam::Adam(double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

void Adam::step(ParamSet& params, const std::vector<std::vector<double>>& grads) {
  if (grads.size() != params.size()) {
    fail(ErrorCode::kDimension, "gradient count does not match parameter count");
  }
  if (m_.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_.emplace_back(params.value(i).size(), 0.0);
      v_.emplace_back(params.value(i).size(), 0.0);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& g = grads[i];
    std::vector<double> w = params.value(i).values();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g[j];
      v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g[j] * g[j];
      const double mhat = m_[i][j] / c1;
      const double vhat = v_[i][j] / c2;
      w[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
    params.set_value(i, ad::Tensor(params.value(i).shape(), std::move(w)));
  }
}

ad::Tensor uniform_init(std::size_t rows, std::size_t cols, double bound, std::mt19937_64& rng) {
  std::vector<double> w(rows * cols);
  for (double& v : w) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    v = (2.0 * u - 1.0) * bound;
  }
  return ad::Tensor::matrix(rows, cols, std::move(w));
}

namespace {

template <typename T>
void put(std::vector<char>& out, T value) {
  const char* p = reinterpret_cast<const char*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      fail(ErrorCode::kMalformedDocument, "tensor container truncated");
    }
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<char> encode_params(const ParamSet& params) {
  std::vector<char> out(std::begin(kParamMagic), std::end(kParamMagic));
  put<std::uint8_t>(out, kParamVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& name = params.name(i);
    const auto& t = params.value(i);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
    for (double v : t.data()) put<double>(out, v);
  }
  return out;
}

ParamSet decode_params(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(4) != std::string_view(kParamMagic, 4)) {
    fail(ErrorCode::kMalformedDocument, "bad tensor container magic");
  }
  const auto version = in.get<std::uint8_t>();
  if (version != kParamVersion) {
    fail(ErrorCode::kUnsupportedFeature,
         "tensor container version " + std::to_string(version) + " not supported");
  }
  const auto count = in.get<std::uint32_t>();
  ParamSet params;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = in.get<std::uint32_t>();
    std::string name(in.take(len));
    const auto rank = in.get<std::uint32_t>();
    if (rank > 2) fail(ErrorCode::kMalformedDocument, "tensor rank > 2 in container");
    ad::Shape shape;
    std::size_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      shape.push_back(static_cast<std::size_t>(in.get<std::uint64_t>()));
      n *= shape.back();
    }
    if (n > bytes.size()) fail(ErrorCode::kMalformedDocument, "tensor payload too large");
    std::vector<double> data(n);
    for (double& v : data) v = in.get<double>();
    params.add(std::move(name), ad::Tensor(std::move(shape), std::move(data)));
  }
  if (!in.done()) fail(ErrorCode::kMalformedDocument, "trailing bytes in tensor container");
  return params;
}

void save_params(const ParamSet& params, const std::filesystem::path& path) {
  const auto bytes = encode_params(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

ParamSet load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot read checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_params(bytes);
}

}  // namespace routeadapt
