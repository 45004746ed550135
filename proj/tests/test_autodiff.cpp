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

#include <doctest.h>

#include "test_util.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>

#include "autodiff.hpp"
#include "fd_oracle.hpp"
#include "op_catalog.hpp"
#include "params.hpp"

using routeadapt::ErrorCode;
using routeadapt::testing::code_of;
using routeadapt::ad::Tape;
using routeadapt::ad::Tensor;
namespace ad = routeadapt::ad;
namespace rt = routeadapt::testing;

TEST_CASE("matmul examples") {
  Tensor eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
  Tensor m = Tensor::matrix(2, 2, {1.5, -2, 3, 4});
  CHECK(ad::matmul(eye, m).values() == m.values());

  Tensor a = Tensor::matrix(2, 2, {1, 2, 3, 4});
  Tensor ones = Tensor::matrix(2, 1, {1, 1});
  auto out = ad::matmul(a, ones);
  CHECK(out.shape() == ad::Shape{2, 1});
  CHECK(out.values() == std::vector<double>{3, 7});

  CHECK(code_of([&] { ad::matmul(a, Tensor::matrix(3, 1, {1, 1, 1})); }) ==
        ErrorCode::kDimension);
  try {
    ad::matmul(a, Tensor::matrix(3, 1, {1, 1, 1}));
  } catch (const routeadapt::Error& e) {
    CHECK(std::string(e.what()).find("[2x2]") != std::string::npos);
    CHECK(std::string(e.what()).find("[3x1]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient matches finite differences") {
  std::mt19937_64 rng(7);
  auto a = rt::random_tensor({3, 4}, rng);
  auto b = rt::random_tensor({4, 2}, rng);
  auto w = rt::random_tensor({3, 2}, rng);
  const double err = rt::max_fd_error(
      [&](const std::vector<Tensor>& in) { return rt::weigh(ad::matmul(in[0], in[1]), w); },
      {a, b});
  CHECK(err < 1e-6);
}

TEST_CASE("elementwise derivatives at reference points") {
  Tape tape;
  auto x = tape.leaf(Tensor::vector({0.0}));
  auto g = tape.backward(ad::sum(ad::tanh(x)));
  CHECK(ad::tanh(Tensor::scalar(0.0)).item() == 0.0);
  CHECK(g.of(x)[0] == doctest::Approx(1.0));

  Tape t2;
  auto y = t2.leaf(Tensor::vector({-1.0}));
  auto out = ad::relu(y);
  CHECK(out[0] == 0.0);
  CHECK(t2.backward(ad::sum(out)).of(y)[0] == 0.0);

  Tape t3;
  auto z = t3.leaf(Tensor::vector({std::numbers::e}));
  auto lz = ad::log(z);
  CHECK(lz[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(t3.backward(ad::sum(lz)).of(z)[0] == doctest::Approx(1.0 / std::numbers::e));

  CHECK(code_of([] { ad::log(Tensor::vector({0.0})); }) == ErrorCode::kDomain);
  CHECK(code_of([] { ad::log(Tensor::vector({-3.0})); }) == ErrorCode::kDomain);
}

TEST_CASE("softmax_temp examples") {
  std::vector<std::uint8_t> open2 = {1, 1};
  auto p = ad::softmax_temp(Tensor::vector({1, 1}), 1.0, open2);
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK(p[1] == doctest::Approx(0.5));

  auto greedy = ad::softmax_temp(Tensor::vector({2, 0}), 0.01, open2);
  CHECK(greedy[0] > 1.0 - 1e-8);

  std::vector<std::uint8_t> mask = {1, 1, 0};
  auto masked = ad::softmax_temp(Tensor::vector({0, 0, 0}), 1.0, mask);
  CHECK(masked[0] == doctest::Approx(0.5));
  CHECK(masked[1] == doctest::Approx(0.5));
  CHECK(masked[2] == 0.0);

  std::vector<std::uint8_t> closed = {0, 0};
  CHECK(code_of([&] { ad::softmax_temp(Tensor::vector({1, 2}), 1.0, closed); }) ==
        ErrorCode::kInfeasibleState);
  CHECK(code_of([&] { ad::softmax_temp(Tensor::vector({1, 2}), 0.0, open2); }) ==
        ErrorCode::kArgument);
}

TEST_CASE("softmax output is a probability vector") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng() % 12;
    auto mask = rt::random_mask(1, n, rng);
    const double temp = std::exp(std::uniform_real_distribution<double>(-6, 2)(rng));
    auto u = rt::random_tensor({n}, rng, -20, 20);
    auto p = ad::softmax_temp(u, temp, mask);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(p[i] >= 0.0);
      if (!mask[i]) CHECK(p[i] == 0.0);
      total += p[i];
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("backward examples") {
  Tape tape;
  auto x = tape.leaf(Tensor::vector({0.3, -1.0, 2.0}));
  auto g = tape.backward(ad::sum(x));
  CHECK(g.of(x).values() == std::vector<double>{1, 1, 1});

  Tape t2;
  auto y = t2.leaf(Tensor::scalar(3.0));
  CHECK(t2.backward(ad::mul(y, y)).of(y).item() == 6.0);

  Tape t3;
  auto v = t3.leaf(Tensor::vector({1, 2}));
  CHECK(code_of([&] { t3.backward(v); }) == ErrorCode::kContract);
}

TEST_CASE("unreachable and detached tensors receive zero gradient") {
  Tape tape;
  auto used = tape.leaf(Tensor::vector({1, 2}));
  auto unused = tape.leaf(Tensor::vector({5, 6}));
  auto constant = Tensor::vector({3, 4});
  auto g = tape.backward(ad::sum(ad::mul(used, constant)));
  CHECK(g.of(used).values() == std::vector<double>{3, 4});
  CHECK(g.of(unused).values() == std::vector<double>{0, 0});
  CHECK(g.of(constant).values() == std::vector<double>{0, 0});
  CHECK(g.raw(constant).empty());
}

TEST_CASE("composite MLP loss matches finite differences") {
  std::mt19937_64 rng(3);
  auto x = rt::random_tensor({5, 4}, rng);
  auto w1 = rt::random_tensor({4, 6}, rng);
  auto b1 = rt::random_tensor({1, 6}, rng);
  auto w2 = rt::random_tensor({6, 3}, rng);
  auto b2 = rt::random_tensor({1, 3}, rng);
  std::vector<std::uint8_t> mask(15, 1);
  mask[4] = 0;
  std::vector<std::size_t> targets = {0, 2, 1, 0, 2};
  auto loss = [&](const std::vector<Tensor>& in) {
    auto h = ad::tanh(ad::add(ad::matmul(in[0], in[1]), in[2]));
    auto logits = ad::add(ad::matmul(h, in[3]), in[4]);
    auto ls = ad::log_softmax_rows(logits, 0.7, mask);
    return ad::scale(ad::mean(ad::pick(ls, targets)), -1.0);
  };
  CHECK(rt::max_fd_error(loss, {x, w1, b1, w2, b2}) < 1e-5);
}

TEST_CASE("every differentiable op passes the finite-difference check") {
  std::mt19937_64 rng(2024);
  for (const auto& op : rt::op_catalog()) {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      auto c = op.make(rng);
      worst = std::max(worst, rt::max_fd_error(c.loss, c.inputs));
    }
    INFO(op.name << " worst relative error " << worst);
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("gradient accumulation is additive") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    auto x0 = rt::random_tensor({3, 3}, rng);
    auto w = rt::random_tensor({3, 3}, rng);
    auto f1 = [&](const Tensor& x) { return ad::sum(ad::tanh(ad::matmul(x, w))); };
    auto f2 = [&](const Tensor& x) { return ad::sum(ad::mul(x, ad::relu(x))); };
    Tape ta, tb, tc;
    auto xa = ta.leaf(x0), xb = tb.leaf(x0), xc = tc.leaf(x0);
    auto ga = ta.backward(f1(xa)).of(xa);
    auto gb = tb.backward(f2(xb)).of(xb);
    auto gc = tc.backward(ad::add(f1(xc), f2(xc))).of(xc);
    for (std::size_t i = 0; i < x0.size(); ++i) {
      CHECK(std::abs(gc[i] - (ga[i] + gb[i])) <= 1e-12);
    }
  }
}

TEST_CASE("tape order and mixed-tape guard") {
  Tape tape;
  auto a = tape.leaf(Tensor::vector({1}));
  auto b = ad::scale(a, 2.0);
  CHECK(b.node() > a.node());
  Tape other;
  auto c = other.leaf(Tensor::vector({1}));
  CHECK(code_of([&] { ad::add(b, c); }) == ErrorCode::kContract);
  CHECK(code_of([] { Tensor({2, 2}, {1, 2, 3}); }) == ErrorCode::kDimension);
}

TEST_CASE("adam step moves against the gradient and lr 0 is a no-op") {
  routeadapt::ParamSet params;
  params.add("w", Tensor::vector({1.0, -1.0}));
  const auto before = params.checksum();
  routeadapt::Adam frozen(0.0);
  frozen.step(params, {{0.5, -0.5}});
  CHECK(params.checksum() == before);

  routeadapt::Adam adam(0.1);
  adam.step(params, {{0.5, -0.5}});
  // First bias-corrected step has magnitude lr regardless of gradient scale.
  CHECK(params.get("w")[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(params.get("w")[1] == doctest::Approx(-0.9).epsilon(1e-6));
}

TEST_CASE("named tensor container round-trips and rejects bad input") {
  routeadapt::ParamSet params;
  std::mt19937_64 rng(1);
  params.add("encoder.w", rt::random_tensor({3, 4}, rng));
  params.add("bias", rt::random_tensor({4}, rng));
  params.add("scalar", Tensor::scalar(0.1 + 0.2));
  auto path = std::filesystem::temp_directory_path() / "routeadapt_params_test.bin";
  routeadapt::save_params(params, path);
  auto loaded = routeadapt::load_params(path);
  CHECK(loaded.checksum() == params.checksum());
  CHECK(loaded.get("scalar").shape().empty());
  std::filesystem::remove(path);

  auto bytes = routeadapt::encode_params(params);
  std::string good(bytes.begin(), bytes.end());
  CHECK(code_of([&] { routeadapt::decode_params(good.substr(0, good.size() - 3)); }) ==
        ErrorCode::kMalformedDocument);
  std::string bad = good;
  bad[0] = 'X';
  CHECK(code_of([&] { routeadapt::decode_params(bad); }) == ErrorCode::kMalformedDocument);
  bad = good;
  bad[4] = 9;
  CHECK(code_of([&] { routeadapt::decode_params(bad); }) == ErrorCode::kUnsupportedFeature);
}

TEST_CASE("grouped ops equal their per-block counterparts") {
  std::mt19937_64 rng(11);
  const Tensor a = rt::random_tensor({6, 4}, rng);
  const Tensor b = rt::random_tensor({8, 5}, rng);
  const Tensor c = rt::random_tensor({6, 4}, rng);
  const Tensor gamma = rt::random_tensor({1, 4}, rng), beta = rt::random_tensor({1, 4}, rng);
  const Tensor prod = ad::bmm(a, b, 2);
  const Tensor prod_nt = ad::bmm_nt(a, c, 2);
  const Tensor norm = ad::instance_norm(a, gamma, beta, 1e-5, 2);
  const Tensor means = ad::mean_rows(a, 2);
  for (std::size_t g = 0; g < 2; ++g) {
    const std::vector<std::size_t> ra = {3 * g, 3 * g + 1, 3 * g + 2};
    const std::vector<std::size_t> rb = {4 * g, 4 * g + 1, 4 * g + 2, 4 * g + 3};
    const Tensor ag = ad::gather_rows(a, ra);
    const Tensor p = ad::matmul(ag, ad::gather_rows(b, rb));
    const Tensor pnt = ad::matmul_nt(ag, ad::gather_rows(c, ra));
    const Tensor nm = ad::instance_norm(ag, gamma, beta);
    const Tensor mr = ad::mean_rows(ag);
    for (std::size_t r = 0; r < 3; ++r) {
      for (std::size_t j = 0; j < 5; ++j) {
        CHECK(prod.at(3 * g + r, j) == doctest::Approx(p.at(r, j)).epsilon(1e-12));
      }
      for (std::size_t j = 0; j < 3; ++j) {
        CHECK(prod_nt.at(3 * g + r, j) == doctest::Approx(pnt.at(r, j)).epsilon(1e-12));
      }
      for (std::size_t j = 0; j < 4; ++j) {
        CHECK(norm.at(3 * g + r, j) == doctest::Approx(nm.at(r, j)).epsilon(1e-12));
      }
    }
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(means.at(g, j) == doctest::Approx(mr.at(0, j)).epsilon(1e-12));
    }
  }
  CHECK(code_of([&] { ad::bmm(a, b, 4); }) == ErrorCode::kDimension);
}
