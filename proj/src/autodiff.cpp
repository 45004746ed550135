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

#include "autodiff.hpp"

#include <Eigen/Core>

#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace routeadapt::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap as_matrix(const Tensor& t) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}

ConstMap as_matrix(std::span<const double> data, std::size_t rows, std::size_t cols) {
  return ConstMap(data.data(), static_cast<Eigen::Index>(rows),
                  static_cast<Eigen::Index>(cols));
}

Tape* common_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = nullptr;
  for (const Tensor* t : inputs) {
    if (t->tape() == nullptr) continue;
    if (tape != nullptr && tape != t->tape()) {
      fail(ErrorCode::kContract, "operands recorded on different tapes");
    }
    tape = t->tape();
  }
  return tape;
}

// Records the result when any input lives on a tape, otherwise returns a
// detached constant.
Tensor emit(std::initializer_list<const Tensor*> inputs, Shape shape,
            std::vector<double> data, BackwardFn backward) {
  Tape* tape = common_tape(inputs);
  if (tape == nullptr) return Tensor(std::move(shape), std::move(data));
  std::vector<std::size_t> parents;
  for (const Tensor* t : inputs) {
    if (t->on_tape()) parents.push_back(t->node());
  }
  return tape->record(std::move(shape), std::move(data), std::move(parents),
                      std::move(backward));
}

void check_mask(std::span<const std::uint8_t> mask, std::size_t expected) {
  if (mask.size() != expected) {
    fail(ErrorCode::kDimension, "mask length " + std::to_string(mask.size()) +
                                    " does not match " + std::to_string(expected) +
                                    " logits");
  }
}

enum class Broadcast { kSame, kRow, kScalar };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::kSame;
  if (b.size() == 1) return Broadcast::kScalar;
  if (b.rows() == 1 && b.cols() == a.cols() && b.size() == a.cols()) return Broadcast::kRow;
  if (a.size() == b.size() && a.rows() == b.rows()) return Broadcast::kSame;
  fail(ErrorCode::kDimension, "cannot broadcast " + shape_string(b.shape()) +
                                  " onto " + shape_string(a.shape()));
}

std::size_t bindex(Broadcast kind, std::size_t i, std::size_t cols) {
  switch (kind) {
    case Broadcast::kSame: return i;
    case Broadcast::kRow: return i % cols;
    case Broadcast::kScalar: return 0;
  }
  return i;
}

// Reduces a full-size gradient onto the broadcast operand.
std::vector<double> reduce_to(Broadcast kind, std::span<const double> g,
                              std::size_t b_size, std::size_t cols) {
  if (kind == Broadcast::kSame) return {g.begin(), g.end()};
  std::vector<double> out(b_size, 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) out[bindex(kind, i, cols)] += g[i];
  return out;
}

Tensor unary(const Tensor& a, std::vector<double> out,
             std::function<double(double x, double y)> derivative) {
  auto y = std::make_shared<std::vector<double>>(out);
  return emit({&a}, a.shape(), std::move(out),
              [a, y, derivative](std::span<const double> g, Tape& tape) {
                std::vector<double> ga(g.size());
                const auto& x = a.values();
                for (std::size_t i = 0; i < g.size(); ++i) {
                  ga[i] = g[i] * derivative(x[i], (*y)[i]);
                }
                tape.accumulate(a.node(), ga);
              });
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// ---- Tensor ------------------------------------------------------------------

Tensor::Tensor() : shape_{0}, data_(std::make_shared<const std::vector<double>>()) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)) {
  if (shape_.size() > 2) {
    fail(ErrorCode::kDimension, "rank > 2 unsupported: " + shape_string(shape_));
  }
  const std::size_t expected = std::accumulate(shape_.begin(), shape_.end(),
                                               std::size_t{1}, std::multiplies<>());
  if (expected != data.size()) {
    fail(ErrorCode::kDimension, "shape " + shape_string(shape_) + " needs " +
                                    std::to_string(expected) + " values, got " +
                                    std::to_string(data.size()));
  }
  data_ = std::make_shared<const std::vector<double>>(std::move(data));
}

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
  const std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                                        std::multiplies<>());
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  return Tensor({rows, cols}, std::move(data));
}

Tensor Tensor::vector(std::vector<double> data) {
  const std::size_t n = data.size();
  return Tensor({n}, std::move(data));
}

std::size_t Tensor::rows() const { return shape_.size() == 2 ? shape_[0] : 1; }

std::size_t Tensor::cols() const {
  if (shape_.empty()) return 1;
  return shape_.back();
}

double Tensor::item() const {
  if (size() != 1) {
    fail(ErrorCode::kContract, "item() on tensor of shape " + shape_string(shape_));
  }
  return (*data_)[0];
}

Tensor Tensor::detach() const {
  Tensor t;
  t.shape_ = shape_;
  t.data_ = data_;
  return t;
}

Tensor Tensor::reshape(Shape shape) const {
  const std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                                        std::multiplies<>());
  if (n != size()) {
    fail(ErrorCode::kDimension, "cannot reshape " + shape_string(shape_) + " to " +
                                    shape_string(shape));
  }
  if (!on_tape()) return Tensor(std::move(shape), values());
  Tensor self = *this;
  return tape_->record(std::move(shape), values(), {node_},
                       [self](std::span<const double> g, Tape& tape) {
                         tape.accumulate(self.node(), g);
                       });
}

// ---- Gradients ---------------------------------------------------------------

Gradients::Gradients(const Tape* tape, std::vector<std::vector<double>> grads)
    : tape_(tape), grads_(std::move(grads)) {}

std::span<const double> Gradients::raw(const Tensor& t) const {
  if (t.tape() != tape_ || t.node() >= grads_.size()) return {};
  return grads_[t.node()];
}

Tensor Gradients::of(const Tensor& t) const {
  auto g = raw(t);
  if (g.empty()) return Tensor::zeros(t.shape());
  return Tensor(t.shape(), {g.begin(), g.end()});
}

// ---- Tape --------------------------------------------------------------------

Tensor Tape::leaf(const Tensor& value) {
  Tensor t = value;  // payloads are immutable, so the leaf shares them
  t.tape_ = this;
  t.node_ = nodes_.size();
  nodes_.push_back(Node{t.size(), {}, nullptr});
  return t;
}

Tensor Tape::record(Shape shape, std::vector<double> data,
                    std::vector<std::size_t> parents, BackwardFn backward) {
  Tensor t(std::move(shape), std::move(data));
  t.tape_ = this;
  t.node_ = nodes_.size();
  nodes_.push_back(Node{t.size(), std::move(parents), std::move(backward)});
  return t;
}

void Tape::accumulate(std::size_t node, std::span<const double> grad) {
  auto& slot = grads_[node];
  if (slot.empty()) {
    slot.assign(grad.begin(), grad.end());
    return;
  }
  for (std::size_t i = 0; i < grad.size(); ++i) slot[i] += grad[i];
}

void Tape::accumulate_at(std::size_t node, std::size_t index, double grad) {
  auto& slot = grads_[node];
  if (slot.empty()) slot.assign(nodes_[node].numel, 0.0);
  slot[index] += grad;
}

Gradients Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    fail(ErrorCode::kContract,
         "backward needs a scalar loss, got " + shape_string(loss.shape()));
  }
  if (loss.tape() != this) {
    fail(ErrorCode::kContract, "loss is not recorded on this tape");
  }
  grads_.assign(nodes_.size(), {});
  grads_[loss.node()] = {1.0};
  for (std::size_t i = loss.node() + 1; i-- > 0;) {
    if (grads_[i].empty() || !nodes_[i].backward) continue;
    // Parents precede children, so the callback only touches lower slots.
    nodes_[i].backward(grads_[i], *this);
  }
  return Gradients(this, std::move(grads_));
}

// ---- linear algebra ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    fail(ErrorCode::kDimension, "matmul inner dimensions differ: " +
                                    shape_string(a.shape()) + " x " +
                                    shape_string(b.shape()));
  }
  const std::size_t m = a.rows(), n = b.cols(), k = a.cols();
  std::vector<double> out(m * n);
  MutMap(out.data(), m, n).noalias() = as_matrix(a) * as_matrix(b);
  return emit({&a, &b}, {m, n}, std::move(out),
              [a, b, m, n, k](std::span<const double> g, Tape& tape) {
                auto gm = as_matrix(g, m, n);
                if (a.on_tape()) {
                  std::vector<double> ga(m * k);
                  MutMap(ga.data(), m, k).noalias() = gm * as_matrix(b).transpose();
                  tape.accumulate(a.node(), ga);
                }
                if (b.on_tape()) {
                  std::vector<double> gb(k * n);
                  MutMap(gb.data(), k, n).noalias() = as_matrix(a).transpose() * gm;
                  tape.accumulate(b.node(), gb);
                }
              });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    fail(ErrorCode::kDimension, "matmul_nt inner dimensions differ: " +
                                    shape_string(a.shape()) + " x " +
                                    shape_string(b.shape()) + "^T");
  }
  const std::size_t m = a.rows(), n = b.rows(), k = a.cols();
  std::vector<double> out(m * n);
  MutMap(out.data(), m, n).noalias() = as_matrix(a) * as_matrix(b).transpose();
  return emit({&a, &b}, {m, n}, std::move(out),
              [a, b, m, n, k](std::span<const double> g, Tape& tape) {
                auto gm = as_matrix(g, m, n);
                if (a.on_tape()) {
                  std::vector<double> ga(m * k);
                  MutMap(ga.data(), m, k).noalias() = gm * as_matrix(b);
                  tape.accumulate(a.node(), ga);
                }
                if (b.on_tape()) {
                  std::vector<double> gb(n * k);
                  MutMap(gb.data(), n, k).noalias() = gm.transpose() * as_matrix(a);
                  tape.accumulate(b.node(), gb);
                }
              });
}

Tensor transpose(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  MutMap(out.data(), n, m) = as_matrix(a).transpose();
  return emit({&a}, {n, m}, std::move(out),
              [a, m, n](std::span<const double> g, Tape& tape) {
                std::vector<double> ga(m * n);
                MutMap(ga.data(), m, n) = as_matrix(g, n, m).transpose();
                tape.accumulate(a.node(), ga);
              });
}

namespace {

void check_groups(const Tensor& a, const Tensor& b, std::size_t groups, const char* op) {
  if (groups == 0 || a.rows() % groups != 0 || b.rows() % groups != 0) {
    fail(ErrorCode::kDimension, std::string(op) + ": " + std::to_string(groups) +
                                    " groups do not divide " + shape_string(a.shape()) +
                                    " and " + shape_string(b.shape()));
  }
}

}  // namespace

namespace {

// Small blocks skip the cache-blocked GEMM kernel, whose fixed cost dominates
// at attention-head sizes.
constexpr Eigen::Index kLazyProductLimit = 32 * 32 * 32;

template <typename Lhs, typename Rhs>
void block_product(MutMap dst, const Lhs& lhs, const Rhs& rhs) {
  if (lhs.rows() * lhs.cols() * rhs.cols() <= kLazyProductLimit) {
    dst.noalias() = lhs.lazyProduct(rhs);
  } else {
    dst.noalias() = lhs * rhs;
  }
}

}  // namespace

Tensor bmm(const Tensor& a, const Tensor& b, std::size_t groups) {
  check_groups(a, b, groups, "bmm");
  const std::size_t m = a.rows() / groups, k = a.cols(), n = b.cols();
  if (b.rows() / groups != k) {
    fail(ErrorCode::kDimension, "bmm inner dimensions differ: " + shape_string(a.shape()) +
                                    " x " + shape_string(b.shape()));
  }
  std::vector<double> out(groups * m * n);
  for (std::size_t gi = 0; gi < groups; ++gi) {
    block_product(MutMap(out.data() + gi * m * n, m, n), as_matrix(a.data().subspan(gi * m * k, m * k), m, k),
                                  as_matrix(b.data().subspan(gi * k * n, k * n), k, n));
  }
  return emit({&a, &b}, {groups * m, n}, std::move(out),
              [a, b, groups, m, n, k](std::span<const double> g, Tape& tape) {
                if (a.on_tape()) {
                  std::vector<double> ga(groups * m * k);
                  for (std::size_t gi = 0; gi < groups; ++gi) {
                    block_product(MutMap(ga.data() + gi * m * k, m, k), as_matrix(g.subspan(gi * m * n, m * n), m, n),
                                  as_matrix(b.data().subspan(gi * k * n, k * n), k, n).transpose());
                  }
                  tape.accumulate(a.node(), ga);
                }
                if (b.on_tape()) {
                  std::vector<double> gb(groups * k * n);
                  for (std::size_t gi = 0; gi < groups; ++gi) {
                    block_product(MutMap(gb.data() + gi * k * n, k, n), as_matrix(a.data().subspan(gi * m * k, m * k), m, k).transpose(),
                                  as_matrix(g.subspan(gi * m * n, m * n), m, n));
                  }
                  tape.accumulate(b.node(), gb);
                }
              });
}

Tensor bmm_nt(const Tensor& a, const Tensor& b, std::size_t groups) {
  check_groups(a, b, groups, "bmm_nt");
  const std::size_t m = a.rows() / groups, n = b.rows() / groups, k = a.cols();
  if (b.cols() != k) {
    fail(ErrorCode::kDimension, "bmm_nt inner dimensions differ: " + shape_string(a.shape()) +
                                    " x " + shape_string(b.shape()));
  }
  std::vector<double> out(groups * m * n);
  for (std::size_t gi = 0; gi < groups; ++gi) {
    block_product(MutMap(out.data() + gi * m * n, m, n), as_matrix(a.data().subspan(gi * m * k, m * k), m, k),
                                  as_matrix(b.data().subspan(gi * n * k, n * k), n, k).transpose());
  }
  return emit({&a, &b}, {groups * m, n}, std::move(out),
              [a, b, groups, m, n, k](std::span<const double> g, Tape& tape) {
                if (a.on_tape()) {
                  std::vector<double> ga(groups * m * k);
                  for (std::size_t gi = 0; gi < groups; ++gi) {
                    block_product(MutMap(ga.data() + gi * m * k, m, k), as_matrix(g.subspan(gi * m * n, m * n), m, n),
                                  as_matrix(b.data().subspan(gi * n * k, n * k), n, k));
                  }
                  tape.accumulate(a.node(), ga);
                }
                if (b.on_tape()) {
                  std::vector<double> gb(groups * n * k);
                  for (std::size_t gi = 0; gi < groups; ++gi) {
                    block_product(MutMap(gb.data() + gi * n * k, n, k), as_matrix(g.subspan(gi * m * n, m * n), m, n).transpose(),
                                  as_matrix(a.data().subspan(gi * m * k, m * k), m, k));
                  }
                  tape.accumulate(b.node(), gb);
                }
              });
}

// ---- elementwise -------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) { return apply(Elementwise::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return apply(Elementwise::kSub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return apply(Elementwise::kMul, a, b); }
Tensor scale(const Tensor& a, double factor) {
  return apply(Elementwise::kScale, a, Tensor(), factor);
}
Tensor tanh(const Tensor& a) { return apply(Elementwise::kTanh, a); }
Tensor relu(const Tensor& a) { return apply(Elementwise::kRelu, a); }
Tensor log(const Tensor& a) { return apply(Elementwise::kLog, a); }

Tensor apply(Elementwise op, const Tensor& a, const Tensor& b, double factor) {
  const auto& x = a.values();
  switch (op) {
    case Elementwise::kAdd:
    case Elementwise::kSub:
    case Elementwise::kMul: {
      const Broadcast kind = broadcast_kind(a, b);
      const std::size_t cols = a.cols();
      const auto& y = b.values();
      std::vector<double> out(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double yi = y[bindex(kind, i, cols)];
        out[i] = op == Elementwise::kAdd   ? x[i] + yi
                 : op == Elementwise::kSub ? x[i] - yi
                                           : x[i] * yi;
      }
      return emit({&a, &b}, a.shape(), std::move(out),
                  [a, b, op, kind, cols](std::span<const double> g, Tape& tape) {
                    if (op == Elementwise::kMul) {
                      const auto& xa = a.values();
                      const auto& yb = b.values();
                      if (a.on_tape()) {
                        std::vector<double> ga(g.size());
                        for (std::size_t i = 0; i < g.size(); ++i) {
                          ga[i] = g[i] * yb[bindex(kind, i, cols)];
                        }
                        tape.accumulate(a.node(), ga);
                      }
                      if (b.on_tape()) {
                        std::vector<double> gfull(g.size());
                        for (std::size_t i = 0; i < g.size(); ++i) gfull[i] = g[i] * xa[i];
                        tape.accumulate(b.node(), reduce_to(kind, gfull, b.size(), cols));
                      }
                      return;
                    }
                    if (a.on_tape()) tape.accumulate(a.node(), g);
                    if (b.on_tape()) {
                      auto gb = reduce_to(kind, g, b.size(), cols);
                      if (op == Elementwise::kSub) {
                        for (double& v : gb) v = -v;
                      }
                      tape.accumulate(b.node(), gb);
                    }
                  });
    }
    case Elementwise::kScale: {
      std::vector<double> out(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * factor;
      return unary(a, std::move(out), [factor](double, double) { return factor; });
    }
    case Elementwise::kTanh: {
      std::vector<double> out(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
      return unary(a, std::move(out), [](double, double y) { return 1.0 - y * y; });
    }
    case Elementwise::kRelu: {
      std::vector<double> out(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
      return unary(a, std::move(out),
                   [](double xi, double) { return xi > 0.0 ? 1.0 : 0.0; });
    }
    case Elementwise::kLog: {
      std::vector<double> out(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0)) {
          fail(ErrorCode::kDomain, "log of non-positive value " + std::to_string(x[i]));
        }
        out[i] = std::log(x[i]);
      }
      return unary(a, std::move(out), [](double xi, double) { return 1.0 / xi; });
    }
  }
  fail(ErrorCode::kContract, "unknown elementwise op");
}

Tensor add_scalar(const Tensor& a, double value) {
  std::vector<double> out(a.values());
  for (double& v : out) v += value;
  return unary(a, std::move(out), [](double, double) { return 1.0; });
}

Tensor exp(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a[i]);
  return unary(a, std::move(out), [](double, double y) { return y; });
}

Tensor sqrt(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (a[i] < 0.0) {
      fail(ErrorCode::kDomain, "sqrt of negative value " + std::to_string(a[i]));
    }
    out[i] = std::sqrt(a[i]);
  }
  return unary(a, std::move(out), [](double, double y) { return 0.5 / y; });
}

// ---- reductions --------------------------------------------------------------

Tensor sum(const Tensor& a) {
  const double s = std::accumulate(a.values().begin(), a.values().end(), 0.0);
  return emit({&a}, {}, {s}, [a](std::span<const double> g, Tape& tape) {
    tape.accumulate(a.node(), std::vector<double>(a.size(), g[0]));
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) fail(ErrorCode::kContract, "mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor mean_rows(const Tensor& a, std::size_t groups) {
  const std::size_t m = a.rows(), n = a.cols();
  if (groups == 0 || m % groups != 0) {
    fail(ErrorCode::kDimension, std::to_string(groups) + " row groups do not divide " +
                                    shape_string(a.shape()));
  }
  const std::size_t per = m / groups;
  std::vector<double> out(groups * n, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    double* o = out.data() + (r / per) * n;
    for (std::size_t c = 0; c < n; ++c) o[c] += a.at(r, c);
  }
  for (double& v : out) v /= static_cast<double>(per);
  return emit({&a}, {groups, n}, std::move(out),
              [a, m, n, per](std::span<const double> g, Tape& tape) {
                std::vector<double> ga(m * n);
                const double inv = 1.0 / static_cast<double>(per);
                for (std::size_t r = 0; r < m; ++r) {
                  const double* gr = g.data() + (r / per) * n;
                  for (std::size_t c = 0; c < n; ++c) ga[r * n + c] = gr[c] * inv;
                }
                tape.accumulate(a.node(), ga);
              });
}

Tensor sum_cols(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r] += a.at(r, c);
  }
  return emit({&a}, {m}, std::move(out), [a, m, n](std::span<const double> g, Tape& tape) {
    std::vector<double> ga(m * n);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < n; ++c) ga[r * n + c] = g[r];
    }
    tape.accumulate(a.node(), ga);
  });
}

Tensor row_norms(const Tensor& a, double eps) {
  const std::size_t m = a.rows(), n = a.cols();
  auto norms = std::make_shared<std::vector<double>>(m, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    double s = eps;
    for (std::size_t c = 0; c < n; ++c) s += a.at(r, c) * a.at(r, c);
    (*norms)[r] = std::sqrt(s);
  }
  return emit({&a}, {m}, *norms, [a, m, n, norms](std::span<const double> g, Tape& tape) {
    std::vector<double> ga(m * n);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        ga[r * n + c] = g[r] * a.at(r, c) / (*norms)[r];
      }
    }
    tape.accumulate(a.node(), ga);
  });
}

// ---- softmax -----------------------------------------------------------------

namespace {

struct SoftmaxForward {
  std::vector<double> probs;
  std::vector<double> log_probs;
};

SoftmaxForward softmax_forward(const Tensor& u, double temperature,
                               std::span<const std::uint8_t> mask) {
  if (!(temperature > 0.0)) {
    fail(ErrorCode::kArgument, "softmax temperature must be positive");
  }
  const std::size_t m = u.rows(), n = u.cols();
  check_mask(mask, m * n);
  SoftmaxForward out{std::vector<double>(m * n, 0.0),
                     std::vector<double>(m * n, kMaskSentinel)};
  std::vector<double> z(n);
  for (std::size_t r = 0; r < m; ++r) {
    double zmax = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t c = 0; c < n; ++c) {
      const bool open = mask[r * n + c] != 0;
      any = any || open;
      z[c] = (u.at(r, c) + (open ? 0.0 : kMaskSentinel)) / temperature;
      zmax = std::max(zmax, z[c]);
    }
    if (!any) {
      fail(ErrorCode::kInfeasibleState, "every entry of softmax row " +
                                            std::to_string(r) + " is masked");
    }
    double total = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      if (!mask[r * n + c]) continue;
      out.probs[r * n + c] = std::exp(z[c] - zmax);
      total += out.probs[r * n + c];
    }
    const double log_total = std::log(total);
    const double inv_total = 1.0 / total;
    for (std::size_t c = 0; c < n; ++c) {
      if (!mask[r * n + c]) continue;
      out.log_probs[r * n + c] = z[c] - zmax - log_total;
      out.probs[r * n + c] *= inv_total;
    }
  }
  return out;
}

}  // namespace

Tensor softmax_rows(const Tensor& u, double temperature, std::span<const std::uint8_t> mask) {
  auto fwd = softmax_forward(u, temperature, mask);
  auto p = std::make_shared<std::vector<double>>(std::move(fwd.probs));
  const std::size_t m = u.rows(), n = u.cols();
  return emit({&u}, u.shape(), *p,
              [u, p, m, n, temperature](std::span<const double> g, Tape& tape) {
                std::vector<double> gu(m * n, 0.0);
                for (std::size_t r = 0; r < m; ++r) {
                  double dot = 0.0;
                  for (std::size_t c = 0; c < n; ++c) dot += g[r * n + c] * (*p)[r * n + c];
                  for (std::size_t c = 0; c < n; ++c) {
                    gu[r * n + c] = (*p)[r * n + c] * (g[r * n + c] - dot) / temperature;
                  }
                }
                tape.accumulate(u.node(), gu);
              });
}

Tensor log_softmax_rows(const Tensor& u, double temperature,
                        std::span<const std::uint8_t> mask) {
  auto fwd = softmax_forward(u, temperature, mask);
  auto p = std::make_shared<std::vector<double>>(std::move(fwd.probs));
  std::vector<std::uint8_t> open(mask.begin(), mask.end());
  const std::size_t m = u.rows(), n = u.cols();
  return emit({&u}, u.shape(), std::move(fwd.log_probs),
              [u, p, open = std::move(open), m, n, temperature](std::span<const double> g,
                                                                  Tape& tape) {
                std::vector<double> gu(m * n, 0.0);
                for (std::size_t r = 0; r < m; ++r) {
                  double total = 0.0;
                  for (std::size_t c = 0; c < n; ++c) {
                    if (open[r * n + c]) total += g[r * n + c];
                  }
                  for (std::size_t c = 0; c < n; ++c) {
                    if (!open[r * n + c]) continue;
                    gu[r * n + c] = (g[r * n + c] - (*p)[r * n + c] * total) / temperature;
                  }
                }
                tape.accumulate(u.node(), gu);
              });
}

Tensor softmax_temp(const Tensor& u, double temperature, std::span<const std::uint8_t> mask) {
  if (u.rows() != 1) {
    fail(ErrorCode::kDimension, "softmax_temp expects a vector, got " +
                                    shape_string(u.shape()));
  }
  return softmax_rows(u, temperature, mask);
}

// ---- indexing ----------------------------------------------------------------

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index) {
  const std::size_t n = a.cols();
  std::vector<double> out(index.size() * n);
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] >= a.rows()) {
      fail(ErrorCode::kDimension, "row index " + std::to_string(index[k]) +
                                      " out of range for " + shape_string(a.shape()));
    }
    std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(index[k] * n), n,
                out.begin() + static_cast<std::ptrdiff_t>(k * n));
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return emit({&a}, {idx.size(), n}, std::move(out),
              [a, idx, n](std::span<const double> g, Tape& tape) {
                std::vector<double> ga(a.size(), 0.0);
                for (std::size_t k = 0; k < idx.size(); ++k) {
                  for (std::size_t c = 0; c < n; ++c) ga[idx[k] * n + c] += g[k * n + c];
                }
                tape.accumulate(a.node(), ga);
              });
}

Tensor pick(const Tensor& a, std::span<const std::size_t> index) {
  const std::size_t m = a.rows(), n = a.cols();
  if (index.size() != m) {
    fail(ErrorCode::kDimension, "pick needs one index per row of " +
                                    shape_string(a.shape()));
  }
  std::vector<double> out(m);
  for (std::size_t r = 0; r < m; ++r) {
    if (index[r] >= n) fail(ErrorCode::kDimension, "pick column out of range");
    out[r] = a.at(r, index[r]);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return emit({&a}, {m}, std::move(out), [a, idx, n](std::span<const double> g, Tape& tape) {
    std::vector<double> ga(a.size(), 0.0);
    for (std::size_t r = 0; r < idx.size(); ++r) ga[r * n + idx[r]] = g[r];
    tape.accumulate(a.node(), ga);
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  const std::size_t m = a.rows(), n = a.cols();
  if (begin + count > n) {
    fail(ErrorCode::kDimension, "column slice out of range for " + shape_string(a.shape()));
  }
  std::vector<double> out(m * count);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < count; ++c) out[r * count + c] = a.at(r, begin + c);
  }
  return emit({&a}, {m, count}, std::move(out),
              [a, m, n, begin, count](std::span<const double> g, Tape& tape) {
                std::vector<double> ga(m * n, 0.0);
                for (std::size_t r = 0; r < m; ++r) {
                  for (std::size_t c = 0; c < count; ++c) {
                    ga[r * n + begin + c] = g[r * count + c];
                  }
                }
                tape.accumulate(a.node(), ga);
              });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) fail(ErrorCode::kContract, "concat of nothing");
  const std::size_t m = parts[0].rows();
  std::size_t total = 0;
  Tape* tape = nullptr;
  for (const Tensor& p : parts) {
    if (p.rows() != m) {
      fail(ErrorCode::kDimension, "concat_cols row mismatch: " + shape_string(p.shape()));
    }
    total += p.cols();
    if (p.on_tape()) tape = p.tape();
  }
  std::vector<double> out(m * total);
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < p.cols(); ++c) out[r * total + offset + c] = p.at(r, c);
    }
    offset += p.cols();
  }
  if (tape == nullptr) return Tensor({m, total}, std::move(out));
  std::vector<std::size_t> parents;
  for (const Tensor& p : parts) {
    if (p.on_tape()) parents.push_back(p.node());
  }
  std::vector<Tensor> keep(parts.begin(), parts.end());
  return tape->record({m, total}, std::move(out), std::move(parents),
                      [keep, m, total](std::span<const double> g, Tape& t) {
                        std::size_t off = 0;
                        for (const Tensor& p : keep) {
                          const std::size_t w = p.cols();
                          if (p.on_tape()) {
                            std::vector<double> gp(m * w);
                            for (std::size_t r = 0; r < m; ++r) {
                              for (std::size_t c = 0; c < w; ++c) {
                                gp[r * w + c] = g[r * total + off + c];
                              }
                            }
                            t.accumulate(p.node(), gp);
                          }
                          off += w;
                        }
                      });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) fail(ErrorCode::kContract, "concat of nothing");
  const std::size_t n = parts[0].cols();
  std::size_t rows = 0;
  Tape* tape = nullptr;
  std::vector<double> out;
  for (const Tensor& p : parts) {
    if (p.cols() != n) {
      fail(ErrorCode::kDimension, "concat_rows column mismatch: " + shape_string(p.shape()));
    }
    rows += p.rows();
    out.insert(out.end(), p.values().begin(), p.values().end());
    if (p.on_tape()) tape = p.tape();
  }
  if (tape == nullptr) return Tensor({rows, n}, std::move(out));
  std::vector<std::size_t> parents;
  for (const Tensor& p : parts) {
    if (p.on_tape()) parents.push_back(p.node());
  }
  std::vector<Tensor> keep(parts.begin(), parts.end());
  return tape->record({rows, n}, std::move(out), std::move(parents),
                      [keep](std::span<const double> g, Tape& t) {
                        std::size_t off = 0;
                        for (const Tensor& p : keep) {
                          if (p.on_tape()) t.accumulate(p.node(), g.subspan(off, p.size()));
                          off += p.size();
                        }
                      });
}

// ---- normalisation -----------------------------------------------------------

Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                     std::size_t groups) {
  const std::size_t m = x.rows(), n = x.cols();
  if (gamma.size() != n || beta.size() != n) {
    fail(ErrorCode::kDimension, "instance_norm affine shape mismatch: " +
                                    shape_string(gamma.shape()) + " / " +
                                    shape_string(beta.shape()) + " for " +
                                    shape_string(x.shape()));
  }
  if (groups == 0 || m % groups != 0) {
    fail(ErrorCode::kDimension, std::to_string(groups) + " row groups do not divide " +
                                    shape_string(x.shape()));
  }
  const std::size_t per = m / groups;
  auto xhat = std::make_shared<std::vector<double>>(m * n);
  auto inv_std = std::make_shared<std::vector<double>>(groups * n);
  std::vector<double> out(m * n);
  const auto& xv = x.values();
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const std::size_t r0 = gi * per;
    std::vector<double> mu(n, 0.0), var(n, 0.0);
    for (std::size_t r = r0; r < r0 + per; ++r) {
      for (std::size_t c = 0; c < n; ++c) mu[c] += xv[r * n + c];
    }
    for (double& v : mu) v /= static_cast<double>(per);
    for (std::size_t r = r0; r < r0 + per; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        const double dv = xv[r * n + c] - mu[c];
        var[c] += dv * dv;
      }
    }
    double* is = inv_std->data() + gi * n;
    for (std::size_t c = 0; c < n; ++c) {
      is[c] = 1.0 / std::sqrt(var[c] / static_cast<double>(per) + eps);
    }
    for (std::size_t r = r0; r < r0 + per; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        const double h = (xv[r * n + c] - mu[c]) * is[c];
        (*xhat)[r * n + c] = h;
        out[r * n + c] = gamma[c] * h + beta[c];
      }
    }
  }
  return emit({&x, &gamma, &beta}, x.shape(), std::move(out),
              [x, gamma, beta, xhat, inv_std, m, n, per, groups](std::span<const double> g,
                                                                 Tape& tape) {
                const auto& xh = *xhat;
                if (x.on_tape()) {
                  std::vector<double> gx(m * n);
                  std::vector<double> mg(n), mgx(n);
                  for (std::size_t gi = 0; gi < groups; ++gi) {
                    const std::size_t r0 = gi * per;
                    std::fill(mg.begin(), mg.end(), 0.0);
                    std::fill(mgx.begin(), mgx.end(), 0.0);
                    for (std::size_t r = r0; r < r0 + per; ++r) {
                      for (std::size_t c = 0; c < n; ++c) {
                        mg[c] += g[r * n + c];
                        mgx[c] += g[r * n + c] * xh[r * n + c];
                      }
                    }
                    const double* is = inv_std->data() + gi * n;
                    for (std::size_t r = r0; r < r0 + per; ++r) {
                      for (std::size_t c = 0; c < n; ++c) {
                        const double k = gamma[c] * is[c];
                        gx[r * n + c] = k * (g[r * n + c] - mg[c] / static_cast<double>(per) -
                                             xh[r * n + c] * mgx[c] / static_cast<double>(per));
                      }
                    }
                  }
                  tape.accumulate(x.node(), gx);
                }
                if (gamma.on_tape()) {
                  std::vector<double> gg(n, 0.0);
                  for (std::size_t i = 0; i < m * n; ++i) gg[i % n] += g[i] * xh[i];
                  tape.accumulate(gamma.node(), gg);
                }
                if (beta.on_tape()) {
                  std::vector<double> gb(n, 0.0);
                  for (std::size_t i = 0; i < m * n; ++i) gb[i % n] += g[i];
                  tape.accumulate(beta.node(), gb);
                }
              });
}

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

}  // namespace routeadapt::ad
