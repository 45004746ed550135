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

// One randomized gradient-check case per differentiable operation. Shared by
// the unit suite and the acceptance suite.

#ifndef ROUTEADAPT_TESTS_OP_CATALOG_HPP_
#define ROUTEADAPT_TESTS_OP_CATALOG_HPP_

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fd_oracle.hpp"

namespace routeadapt::testing {

struct GradCase {
  Loss loss;
  std::vector<ad::Tensor> inputs;
};

struct OpEntry {
  std::string name;
  std::function<GradCase(std::mt19937_64&)> make;
};

// Projects an op output onto fixed random weights so every output element
// contributes a distinct gradient.
inline ad::Tensor weigh(const ad::Tensor& out, const ad::Tensor& w) {
  return ad::sum(ad::mul(out, w.reshape(out.shape())));
}

inline ad::Tensor positive(ad::Shape shape, std::mt19937_64& rng) {
  return random_tensor(std::move(shape), rng, 0.1, 2.0);
}

inline std::vector<std::uint8_t> random_mask(std::size_t rows, std::size_t cols,
                                             std::mt19937_64& rng) {
  std::vector<std::uint8_t> mask(rows * cols);
  std::bernoulli_distribution open(0.7);
  for (std::size_t r = 0; r < rows; ++r) {
    bool any = false;
    for (std::size_t c = 0; c < cols; ++c) {
      mask[r * cols + c] = open(rng) ? 1 : 0;
      any = any || mask[r * cols + c];
    }
    if (!any) mask[r * cols + rng() % cols] = 1;
  }
  return mask;
}

inline std::vector<OpEntry> op_catalog() {
  using ad::Tensor;
  std::vector<OpEntry> ops;
  auto unary = [&ops](std::string name, std::function<Tensor(const Tensor&)> f,
                      bool positive_inputs = false) {
    ops.push_back({name, [f, positive_inputs](std::mt19937_64& rng) {
                     Tensor x = positive_inputs ? positive({3, 4}, rng)
                                                : random_tensor({3, 4}, rng);
                     Tensor w = random_tensor({3, 4}, rng);
                     return GradCase{[f, w](const std::vector<Tensor>& in) {
                                       return weigh(f(in[0]), w);
                                     },
                                     {x}};
                   }});
  };
  auto binary = [&ops](std::string name, std::function<Tensor(const Tensor&, const Tensor&)> f,
                       ad::Shape bshape) {
    ops.push_back({name, [f, bshape](std::mt19937_64& rng) {
                     Tensor a = random_tensor({3, 4}, rng);
                     Tensor b = random_tensor(bshape, rng);
                     Tensor w = random_tensor({3, 4}, rng);
                     return GradCase{[f, w](const std::vector<Tensor>& in) {
                                       return weigh(f(in[0], in[1]), w);
                                     },
                                     {a, b}};
                   }});
  };

  ops.push_back({"matmul", [](std::mt19937_64& rng) {
                   Tensor w = random_tensor({3, 2}, rng);
                   return GradCase{[w](const std::vector<Tensor>& in) {
                                     return weigh(ad::matmul(in[0], in[1]), w);
                                   },
                                   {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)}};
                 }});
  ops.push_back({"matmul_nt", [](std::mt19937_64& rng) {
                   Tensor w = random_tensor({3, 5}, rng);
                   return GradCase{[w](const std::vector<Tensor>& in) {
                                     return weigh(ad::matmul_nt(in[0], in[1]), w);
                                   },
                                   {random_tensor({3, 4}, rng), random_tensor({5, 4}, rng)}};
                 }});
  ops.push_back({"transpose", [](std::mt19937_64& rng) {
                   Tensor w = random_tensor({4, 3}, rng);
                   return GradCase{[w](const std::vector<Tensor>& in) {
                                     return weigh(ad::transpose(in[0]), w);
                                   },
                                   {random_tensor({3, 4}, rng)}};
                 }});
  binary("add", [](const Tensor& a, const Tensor& b) { return ad::add(a, b); }, {3, 4});
  binary("add_row_broadcast", [](const Tensor& a, const Tensor& b) { return ad::add(a, b); },
         {1, 4});
  binary("sub", [](const Tensor& a, const Tensor& b) { return ad::sub(a, b); }, {3, 4});
  binary("sub_scalar_broadcast",
         [](const Tensor& a, const Tensor& b) { return ad::sub(a, b); }, {});
  binary("mul", [](const Tensor& a, const Tensor& b) { return ad::mul(a, b); }, {3, 4});
  binary("mul_row_broadcast", [](const Tensor& a, const Tensor& b) { return ad::mul(a, b); },
         {4});
  unary("scale", [](const Tensor& x) { return ad::scale(x, -1.7); });
  unary("add_scalar", [](const Tensor& x) { return ad::add_scalar(x, 0.3); });
  unary("tanh", [](const Tensor& x) { return ad::tanh(x); });
  unary("relu", [](const Tensor& x) { return ad::relu(x); });
  unary("log", [](const Tensor& x) { return ad::log(x); }, true);
  unary("exp", [](const Tensor& x) { return ad::exp(x); });
  unary("sqrt", [](const Tensor& x) { return ad::sqrt(x); }, true);
  unary("mean_rows", [](const Tensor& x) {
    return ad::concat_rows(std::vector<Tensor>(3, ad::mean_rows(x)));
  });
  ops.push_back({"sum", [](std::mt19937_64& rng) {
                   return GradCase{[](const std::vector<Tensor>& in) {
                                     return ad::sum(ad::mul(in[0], in[0]));
                                   },
                                   {random_tensor({3, 4}, rng)}};
                 }});
  ops.push_back({"mean", [](std::mt19937_64& rng) {
                   return GradCase{[](const std::vector<Tensor>& in) {
                                     return ad::mean(ad::mul(in[0], in[0]));
                                   },
                                   {random_tensor({3, 4}, rng)}};
                 }});
  ops.push_back({"sum_cols", [](std::mt19937_64& rng) {
                   Tensor w = random_tensor({3}, rng);
                   return GradCase{[w](const std::vector<Tensor>& in) {
                                     return weigh(ad::sum_cols(in[0]), w);
                                   },
                                   {random_tensor({3, 4}, rng)}};
                 }});
  ops.push_back({"row_norms", [](std::mt19937_64& rng) {
                   Tensor w = random_tensor({3}, rng);
                   return GradCase{[w](const std::vector<Tensor>& in) {
                                     return weigh(ad::row_norms(in[0]), w);
                                   },
                                   {random_tensor({3, 4}, rng)}};
                 }});
  ops.push_back({"softmax_temp", [](std::mt19937_64& rng) {
                   const double temp = std::uniform_real_distribution<double>(0.3, 2.0)(rng);
                   auto mask = random_mask(1, 6, rng);
                   Tensor w = random_tensor({6}, rng);
                   return GradCase{[w, mask, temp](const std::vector<Tensor>& in) {
                                     return weigh(ad::softmax_temp(in[0], temp, mask), w);
                                   },
                                   {random_tensor({6}, rng)}};
                 }});
  ops.push_back({"softmax_rows", [](std::mt19937_64& rng) {
                   const double temp = std::uniform_real_distribution<double>(0.3, 2.0)(rng);
                   auto mask = random_mask(3, 5, rng);
                   Tensor w = random_tensor({3, 5}, rng);
                   return GradCase{[w, mask, temp](const std::vector<Tensor>& in) {
                                     return weigh(ad::softmax_rows(in[0], temp, mask), w);
                                   },
                                   {random_tensor({3, 5}, rng)}};
                 }});
  ops.push_back({"log_softmax_rows", [](std::mt19937_64& rng) {
                   const double temp = std::uniform_real_distribution<double>(0.3, 2.0)(rng);
                   auto mask = random_mask(3, 5, rng);
                   std::vector<std::size_t> pick_idx;
                   for (std::size_t r = 0; r < 3; ++r) {
                     std::size_t c = 0;
                     while (!mask[r * 5 + c]) ++c;
                     pick_idx.push_back(c);
                   }
                   Tensor w = random_tensor({3}, rng);
                   return GradCase{[w, mask, temp, pick_idx](const std::vector<Tensor>& in) {
                                     auto ls = ad::log_softmax_rows(in[0], temp, mask);
                                     return weigh(ad::pick(ls, pick_idx), w);
                                   },
                                   {random_tensor({3, 5}, rng)}};
                 }});
  ops.push_back({"gather_rows", [](std::mt19937_64& rng) {
                   std::vector<std::size_t> idx = {2, 0, 2, 1};
                   Tensor w = random_tensor({4, 4}, rng);
                   return GradCase{[w, idx](const std::vector<Tensor>& in) {
                                     return weigh(ad::gather_rows(in[0], idx), w);
                                   },
                                   {random_tensor({3, 4}, rng)}};
                 }});
  ops.push_back({"pick", [](std::mt19937_64& rng) {
                   std::vector<std::size_t> idx = {3, 0, 1};
                   Tensor w = random_tensor({3}, rng);
                   return GradCase{[w, idx](const std::vector<Tensor>& in) {
                                     return weigh(ad::pick(in[0], idx), w);
                                   },
                                   {random_tensor({3, 4}, rng)}};
                 }});
  ops.push_back({"slice_concat_cols", [](std::mt19937_64& rng) {
                   Tensor w = random_tensor({3, 5}, rng);
                   return GradCase{[w](const std::vector<Tensor>& in) {
                                     std::vector<Tensor> parts = {ad::slice_cols(in[0], 1, 2),
                                                                  in[1]};
                                     return weigh(ad::concat_cols(parts), w);
                                   },
                                   {random_tensor({3, 4}, rng), random_tensor({3, 3}, rng)}};
                 }});
  ops.push_back({"concat_rows", [](std::mt19937_64& rng) {
                   Tensor w = random_tensor({5, 4}, rng);
                   return GradCase{[w](const std::vector<Tensor>& in) {
                                     std::vector<Tensor> parts = {in[0], in[1]};
                                     return weigh(ad::concat_rows(parts), w);
                                   },
                                   {random_tensor({3, 4}, rng), random_tensor({2, 4}, rng)}};
                 }});
  ops.push_back({"instance_norm", [](std::mt19937_64& rng) {
                   Tensor w = random_tensor({5, 4}, rng);
                   return GradCase{[w](const std::vector<Tensor>& in) {
                                     return weigh(ad::instance_norm(in[0], in[1], in[2]), w);
                                   },
                                   {random_tensor({5, 4}, rng), random_tensor({1, 4}, rng),
                                    random_tensor({1, 4}, rng)}};
                 }});
  ops.push_back({"instance_norm_grouped", [](std::mt19937_64& rng) {
                   Tensor w = random_tensor({6, 3}, rng);
                   return GradCase{[w](const std::vector<Tensor>& in) {
                                     return weigh(ad::instance_norm(in[0], in[1], in[2], 1e-5, 2),
                                                  w);
                                   },
                                   {random_tensor({6, 3}, rng), random_tensor({1, 3}, rng),
                                    random_tensor({1, 3}, rng)}};
                 }});
  ops.push_back({"mean_rows_grouped", [](std::mt19937_64& rng) {
                   Tensor w = random_tensor({3, 2}, rng);
                   return GradCase{[w](const std::vector<Tensor>& in) {
                                     return weigh(ad::mean_rows(in[0], 3), w);
                                   },
                                   {random_tensor({6, 2}, rng)}};
                 }});
  ops.push_back({"bmm", [](std::mt19937_64& rng) {
                   Tensor w = random_tensor({4, 3}, rng);
                   return GradCase{[w](const std::vector<Tensor>& in) {
                                     return weigh(ad::bmm(in[0], in[1], 2), w);
                                   },
                                   {random_tensor({4, 5}, rng), random_tensor({10, 3}, rng)}};
                 }});
  ops.push_back({"bmm_nt", [](std::mt19937_64& rng) {
                   Tensor w = random_tensor({6, 4}, rng);
                   return GradCase{[w](const std::vector<Tensor>& in) {
                                     return weigh(ad::bmm_nt(in[0], in[1], 3), w);
                                   },
                                   {random_tensor({6, 3}, rng), random_tensor({12, 3}, rng)}};
                 }});
  return ops;
}

}  // namespace routeadapt::testing

#endif  // ROUTEADAPT_TESTS_OP_CATALOG_HPP_
