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

// Minimal reverse-mode automatic differentiation over dense float64 tensors.
//
// Tensors have rank 0, 1 or 2. Rank-1 tensors of length n behave as 1 x n
// row vectors in every operation. A Tensor is a cheap value: it shares its
// immutable payload and optionally refers to a node on a Tape. Operations
// whose inputs are all detached compute eagerly and return detached results,
// so constant sub-expressions never occupy tape space.

#ifndef ROUTEADAPT_AUTODIFF_HPP_
#define ROUTEADAPT_AUTODIFF_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace routeadapt::ad {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

class Tape;

class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> data);
  static Tensor vector(std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_->size(); }
  // Rank-1 and rank-0 tensors are one row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return *data_; }
  const std::vector<double>& values() const { return *data_; }
  double operator[](std::size_t i) const { return (*data_)[i]; }
  double at(std::size_t r, std::size_t c) const {
    return (*data_)[r * cols() + c];
  }
  double item() const;

  bool on_tape() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::size_t node() const { return node_; }

  // Same payload, no tape.
  Tensor detach() const;
  // Same payload viewed with another shape of equal element count.
  Tensor reshape(Shape shape) const;

 private:
  friend class Tape;
  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  Tape* tape_ = nullptr;
  std::size_t node_ = 0;
};

// Gradient callback: receives the output gradient and accumulates into the
// parents through Tape::accumulate.
using BackwardFn = std::function<void(std::span<const double> grad, Tape& tape)>;

class Gradients {
 public:
  Gradients() = default;
  Gradients(const Tape* tape, std::vector<std::vector<double>> grads);

  // Total derivative of the loss w.r.t. `t`; zeros when `t` is unreachable
  // or detached.
  Tensor of(const Tensor& t) const;
  std::span<const double> raw(const Tensor& t) const;

 private:
  const Tape* tape_ = nullptr;
  std::vector<std::vector<double>> grads_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers `value` as a differentiable leaf on this tape.
  Tensor leaf(const Tensor& value);

  Tensor record(Shape shape, std::vector<double> data,
                std::vector<std::size_t> parents, BackwardFn backward);

  void accumulate(std::size_t node, std::span<const double> grad);
  void accumulate_at(std::size_t node, std::size_t index, double grad);

  Gradients backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::size_t numel = 0;
    std::vector<std::size_t> parents;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
};

// ---- operations ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// a * b^T without materialising the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
// Block-wise products: both operands are stacks of `groups` equal row blocks
// and block g of the result is a_g * b_g (bmm) or a_g * b_g^T (bmm_nt).
Tensor bmm(const Tensor& a, const Tensor& b, std::size_t groups);
Tensor bmm_nt(const Tensor& a, const Tensor& b, std::size_t groups);

enum class Elementwise { kAdd, kSub, kMul, kTanh, kRelu, kLog, kScale };

// Binary forms accept equal shapes, a one-row `b` broadcast over the rows of
// `a`, or a single-element `b`.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor apply(Elementwise op, const Tensor& a, const Tensor& b = Tensor(),
             double factor = 1.0);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Column means: [m x n] -> [1 x n].
// Row mean of each of `groups` equal row blocks: [groups x n].
Tensor mean_rows(const Tensor& a, std::size_t groups = 1);
// Row sums: [m x n] -> [m].
Tensor sum_cols(const Tensor& a);
// Euclidean norm of each row, sqrt(sum x^2 + eps): [m x n] -> [m].
Tensor row_norms(const Tensor& a, double eps = 1e-12);

// Logit added to masked entries before exponentiation.
inline constexpr double kMaskSentinel = -1e9;

// exp(u_i / T) / sum_j exp(u_j / T) over unmasked entries of a vector.
// `mask[i] == true` marks a feasible entry; infeasible entries are exactly 0.
Tensor softmax_temp(const Tensor& u, double temperature,
                    std::span<const std::uint8_t> mask);
// Row-wise form over an [m x n] matrix with an m*n mask.
Tensor softmax_rows(const Tensor& u, double temperature,
                    std::span<const std::uint8_t> mask);
Tensor log_softmax_rows(const Tensor& u, double temperature,
                        std::span<const std::uint8_t> mask);

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index);
// out[r] = a[r, index[r]]: [m x n] -> [m].
Tensor pick(const Tensor& a, std::span<const std::size_t> index);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);

// Normalises each column over the rows of each of `groups` equal row blocks,
// then applies per-column affine gamma/beta ([1 x n] each).
Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                     double eps = 1e-5, std::size_t groups = 1);

// Keeps large tensor buffers on the heap rather than in fresh mmap regions,
// which otherwise page-fault on every op. Process-wide (glibc only; a no-op
// elsewhere), so only program entry points should call it.
void tune_allocator();

}  // namespace routeadapt::ad

#endif  // ROUTEADAPT_AUTODIFF_HPP_
