// Copyright 2026 The obsgen Authors
//
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

#include <cmath>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "obsgen/autograd.hpp"
#include "obsgen/errors.hpp"
#include "obsgen/nn.hpp"

using namespace obsgen;
using obsgen::testing::gradcheck;
using obsgen::testing::random_tensor;

namespace {

constexpr double kGradTol = 1e-4;

}  // namespace

TEST_CASE("matmul forward") {
  const Var a(Tensor::from_rows({{1, 0}, {0, 1}}));
  const Var b(Tensor::from_rows({{3, 4}, {5, 6}}));
  CHECK(matmul(a, b).value() == b.value());
  const Var row(Tensor::from_rows({{1, 2}}));
  const Var col(Tensor::from_rows({{3}, {4}}));
  CHECK(matmul(row, col).value().item() == 11.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  const Var a(Tensor::zeros(2, 3));
  const Var b(Tensor::zeros(2, 3));
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient matches central differences") {
  std::mt19937_64 rng(3);
  Var a = Var::parameter(random_tensor(3, 4, rng));
  Var b = Var::parameter(random_tensor(4, 2, rng));
  const auto r = gradcheck({{"a", a}, {"b", b}}, [&] { return sum(mul(matmul(a, b), matmul(a, b))); });
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("backward on simple losses") {
  Var x = Var::parameter(Tensor::from_rows({{1, -2, 3}}));
  backward(sum(x));
  CHECK(x.grad() == Tensor::from_rows({{1, 1, 1}}));
  x.zero_grad();
  backward(sum(mul(x, x)));
  CHECK(x.grad() == Tensor::from_rows({{2, -4, 6}}));
}

TEST_CASE("backward accumulates until zeroed") {
  Var x = Var::parameter(Tensor::from_rows({{1, 2}}));
  backward(sum(x));
  backward(sum(x));
  CHECK(x.grad() == Tensor::from_rows({{2, 2}}));
}

TEST_CASE("backward rejects a non-scalar loss") {
  Var x = Var::parameter(Tensor::zeros(2, 2));
  CHECK_THROWS_AS(backward(add(x, x)), NumericError);
}

TEST_CASE("layer_norm") {
  const Var gain(Tensor::from_rows({{1, 1}}));
  const Var bias(Tensor::from_rows({{0, 0}}));
  SUBCASE("constant row maps to zeros") {
    const Var c(Tensor::from_rows({{5, 5}}));
    const Tensor out = layer_norm(c, gain, bias).value();
    CHECK(out(0, 0) == 0.0);
    CHECK(out(0, 1) == 0.0);
  }
  SUBCASE("(1, -1) against the closed form") {
    const Var x(Tensor::from_rows({{1, -1}}));
    const Tensor out = layer_norm(x, gain, bias, 1e-5).value();
    const double expected = 1.0 / std::sqrt(1.0 + 1e-5);
    CHECK(out(0, 0) == doctest::Approx(expected).epsilon(1e-14));
    CHECK(out(0, 1) == doctest::Approx(-expected).epsilon(1e-14));
  }
  SUBCASE("rows have zero mean before the affine map") {
    std::mt19937_64 rng(5);
    const Var x(random_tensor(6, 9, rng, 3.0));
    const Var g(Tensor({1, 9}, 1.0));
    const Var b(Tensor({1, 9}, 0.0));
    const Tensor out = layer_norm(x, g, b).value();
    for (std::size_t r = 0; r < out.rows(); ++r) {
      double mean = 0.0;
      for (double v : out.row(r)) mean += v;
      CHECK(std::abs(mean / 9.0) < 1e-9);
    }
  }
  SUBCASE("gradient") {
    std::mt19937_64 rng(7);
    Var x = Var::parameter(random_tensor(3, 5, rng));
    Var g = Var::parameter(random_tensor(1, 5, rng));
    Var b = Var::parameter(random_tensor(1, 5, rng));
    const Tensor w = random_tensor(3, 5, rng);
    const auto r = gradcheck({{"x", x}, {"g", g}, {"b", b}},
                             [&] { return sum(mul(layer_norm(x, g, b), Var(w))); });
    CHECK(r.max_rel_error < kGradTol);
  }
}

TEST_CASE("softmax_cross_entropy") {
  const Var uniform(Tensor({1, 4}, 0.0));
  CHECK(softmax_cross_entropy(uniform, 2, 1.0).value().item() ==
        doctest::Approx(std::log(4.0)).epsilon(1e-14));
  CHECK(softmax_cross_entropy(uniform, 2, 1.5).value().item() ==
        doctest::Approx(1.5 * std::log(4.0)).epsilon(1e-14));
  CHECK_THROWS_AS(softmax_cross_entropy(uniform, 4, 1.0), std::out_of_range);

  SUBCASE("gradient is (softmax - onehot) * weight") {
    Var logits = Var::parameter(Tensor::from_rows({{0.5, -1.0, 2.0}}));
    backward(softmax_cross_entropy(logits, 1, 1.5));
    double z = 0.0;
    for (double v : logits.value().data()) z += std::exp(v);
    for (std::size_t j = 0; j < 3; ++j) {
      const double p = std::exp(logits.value()(0, j)) / z;
      CHECK(logits.grad()(0, j) == doctest::Approx(1.5 * (p - (j == 1 ? 1.0 : 0.0))).epsilon(1e-12));
    }
  }
}

TEST_CASE("attention masking") {
  SUBCASE("one query over one key returns the value row") {
    const Var q(Tensor::from_rows({{0.3, -0.2}}));
    const Var k(Tensor::from_rows({{1.0, 2.0}}));
    const Var v(Tensor::from_rows({{7.0, -3.0}}));
    std::vector<Tensor> w;
    const Tensor out = attention(q, k, v, AttentionMask::full(1, 1), 1, &w).value();
    CHECK(out == v.value());
    CHECK(w[0](0, 0) == 1.0);
  }
  SUBCASE("masked key gets exactly zero weight") {
    const Var q(Tensor::from_rows({{0.3, -0.2}}));
    const Var k(Tensor::from_rows({{1.0, 2.0}, {-4.0, 0.5}}));
    const Var v(Tensor::from_rows({{1.0, 0.0}, {0.0, 1.0}}));
    AttentionMask mask = AttentionMask::full(1, 2);
    mask.set(0, 1, false);
    std::vector<Tensor> w;
    attention(q, k, v, mask, 1, &w);
    CHECK(w[0](0, 0) == 1.0);
    CHECK(w[0](0, 1) == 0.0);
  }
  SUBCASE("fully masked row is an error") {
    const Var x(Tensor::zeros(2, 2));
    AttentionMask mask(2, 2, false);
    mask.set(0, 0, true);
    CHECK_THROWS_WITH_AS(attention(x, x, x, mask, 1), doctest::Contains("fully masked"),
                         NumericError);
  }
  SUBCASE("rows sum to one over allowed keys") {
    std::mt19937_64 rng(11);
    const Var q(random_tensor(5, 8, rng));
    const Var k(random_tensor(6, 8, rng));
    AttentionMask mask = AttentionMask::full(5, 6);
    mask.set(0, 3, false);
    mask.set(2, 0, false);
    mask.set(2, 5, false);
    std::vector<Tensor> w;
    attention(q, k, k, mask, 2, &w);
    for (const auto& head : w) {
      for (std::size_t i = 0; i < 5; ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < 6; ++j) {
          if (!mask.allowed(i, j)) CHECK(head(i, j) == 0.0);
          total += head(i, j);
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("multi-head attention module gradient") {
  LayerConfig cfg{8, 2, 8, 0.0};
  ParameterRegistry reg;
  Initializer init(1);
  MultiHeadAttention mha(reg, init, "mha", cfg);
  std::mt19937_64 rng(13);
  const Tensor xq = random_tensor(4, 8, rng);
  const Tensor xk = random_tensor(4, 8, rng);
  const Tensor w = random_tensor(4, 8, rng);
  const ForwardContext ctx;
  const auto r = gradcheck(reg, [&] {
    return sum(mul(mha(Var(xq), Var(xk), Var(xk), AttentionMask::causal(4), ctx), Var(w)));
  });
  CHECK(r.max_rel_error < kGradTol);
  CHECK(r.checked == reg.parameter_count());
}

TEST_CASE("single-head module output equals projected value for one key") {
  LayerConfig cfg{4, 1, 4, 0.0};
  ParameterRegistry reg;
  Initializer init(2);
  MultiHeadAttention mha(reg, init, "mha", cfg);
  const Var q(Tensor::from_rows({{1, 2, 3, 4}}));
  const Var kv(Tensor::from_rows({{-1, 0.5, 2, 0}}));
  const Tensor out = mha(q, kv, kv, AttentionMask::full(1, 1), ForwardContext{}).value();
  const Tensor expected = mha.out_proj(mha.v_proj(kv)).value();
  for (std::size_t j = 0; j < 4; ++j) CHECK(out(0, j) == doctest::Approx(expected(0, j)).epsilon(1e-13));
}

TEST_CASE("op gradients") {
  std::mt19937_64 rng(17);
  Var x = Var::parameter(random_tensor(4, 6, rng));
  Var y = Var::parameter(random_tensor(4, 6, rng));
  Var row = Var::parameter(random_tensor(1, 6, rng));
  const Tensor w = random_tensor(4, 6, rng);

  SUBCASE("elementwise") {
    const auto r = gradcheck({{"x", x}, {"y", y}, {"row", row}}, [&] {
      return sum(mul(tanh(add_row(add(x, scale(y, 0.5)), row)), Var(w)));
    });
    CHECK(r.max_rel_error < kGradTol);
  }
  SUBCASE("relu") {
    const auto r = gradcheck({{"x", x}}, [&] { return sum(mul(relu(x), Var(w))); });
    CHECK(r.max_rel_error < kGradTol);
  }
  SUBCASE("row plumbing") {
    const std::size_t idx[] = {3, 0, 3};
    const auto r = gradcheck({{"x", x}, {"y", y}}, [&] {
      const Var parts[] = {slice_rows(x, 1, 3), gather_rows(y, idx)};
      const Var c = concat_rows(parts);
      return sum(mul(c, c));
    });
    CHECK(r.max_rel_error < kGradTol);
  }
  SUBCASE("embeddings") {
    const int ids[] = {2, 0, 2};
    const std::vector<std::vector<int>> bags{{0, 1}, {3}, {1, 1, 2}};
    const auto r = gradcheck({{"x", x}}, [&] {
      return add(sum(mul(embedding(x, ids), embedding(x, ids))),
                 sum(tanh(embedding_bag_mean(x, bags))));
    });
    CHECK(r.max_rel_error < kGradTol);
    CHECK_THROWS_AS(embedding(x, std::vector<int>{4}), VocabularyError);
  }
  SUBCASE("losses") {
    Var logits = Var::parameter(random_tensor(4, 5, rng));
    Var col = Var::parameter(random_tensor(4, 1, rng));
    const int targets[] = {0, 4, 2, 2};
    const double weights[] = {1.0, 1.5, 0.0, 2.0};
    const double d[] = {1.0, 0.0, 1.0, 0.0};
    const auto r = gradcheck({{"logits", logits}, {"col", col}}, [&] {
      return add(cross_entropy(logits, targets, weights), weighted_bce_with_logits(col, d, 3.0));
    });
    CHECK(r.max_rel_error < kGradTol);
  }
}

TEST_CASE("weighted BCE at p = 0.5 is log 2 per node") {
  const Var zero(Tensor::zeros(2, 1));
  const double d[] = {1.0, 0.0};
  CHECK(weighted_bce_with_logits(zero, d, 1.0).value().item() ==
        doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-14));
  // beta scales only the positive term
  CHECK(weighted_bce_with_logits(zero, d, 5.0).value().item() ==
        doctest::Approx(6.0 * std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("dropout") {
  std::mt19937_64 rng(1);
  const Var x(Tensor({4, 50}, 1.0));
  CHECK(dropout(x, 0.0, &rng).value() == x.value());
  CHECK(dropout(x, 0.5, nullptr).value() == x.value());
  const Tensor y = dropout(x, 0.5, &rng).value();
  for (double v : y.data()) CHECK((v == 0.0 || v == 2.0));

  SUBCASE("eval-mode encoder is bit-identical across runs") {
    LayerConfig cfg{8, 2, 16, 0.3};
    ParameterRegistry reg;
    Initializer init(4);
    Encoder enc(reg, init, "enc", cfg, 2);
    std::mt19937_64 data_rng(9);
    const Var in(random_tensor(5, 8, data_rng));
    ForwardContext ctx;
    ctx.rng = &rng;
    const Tensor a = enc(in, AttentionMask::full(5, 5), ctx).value();
    const Tensor b = enc(in, AttentionMask::full(5, 5), ctx).value();
    CHECK(a == b);
  }
}

TEST_CASE("no-grad mode records nothing") {
  Var x = Var::parameter(Tensor::from_rows({{1, 2}}));
  NoGradGuard guard;
  const Var y = mul(x, x);
  CHECK_FALSE(y.requires_grad());
  CHECK_FALSE(grad_enabled());
}

TEST_CASE("layer config validation") {
  CHECK_THROWS_AS((LayerConfig{10, 3, 8, 0.1}.validate()), ConfigError);
  CHECK_THROWS_AS((LayerConfig{8, 2, 8, 1.0}.validate()), ConfigError);
  CHECK_NOTHROW((LayerConfig{}.validate()));
}
