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

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "obsgen/tensor.hpp"

namespace obsgen {

namespace detail {

struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows into it
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Tensor& grad_buffer();
};

}  // namespace detail

/// Handle to a tape node. Copies share the node, so a parameter held by a
/// layer and by a registry is one object.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  static Var parameter(Tensor value) { return Var(std::move(value), true); }

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient, allocated as zeros on first access.
  const Tensor& grad() const { return node_->grad_buffer(); }
  void zero_grad() { node_->grad = Tensor(); }

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& shared_node() const { return node_; }

  static Var from_node(std::shared_ptr<detail::Node> node) {
    Var v;
    v.node_ = std::move(node);
    return v;
  }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Reverse-mode pass from a scalar. Leaf gradients accumulate across calls;
/// interior gradients are recomputed each call.
void backward(const Var& loss);

bool grad_enabled();

/// Disables tape recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Boolean (query x key) permission matrix for attention.
class AttentionMask {
 public:
  AttentionMask() = default;
  AttentionMask(std::size_t rows, std::size_t cols, bool allowed = true);

  static AttentionMask full(std::size_t rows, std::size_t cols) {
    return AttentionMask(rows, cols, true);
  }
  /// Lower-triangular mask for autoregressive self-attention.
  static AttentionMask causal(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool allowed(std::size_t i, std::size_t j) const {
    return bits_[i * cols_ + j] != 0;
  }
  void set(std::size_t i, std::size_t j, bool allowed) {
    bits_[i * cols_ + j] = allowed ? 1 : 0;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Additive bias applied to masked attention logits.
inline constexpr double kMaskedLogit = -1e9;

// ---- differentiable ops -------------------------------------------------

Var matmul(const Var& a, const Var& b);
/// a * b^T.
Var matmul_nt(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
/// Adds a 1 x n row to every row of an m x n matrix.
Var add_row(const Var& x, const Var& row);
Var scale(const Var& x, double factor);
Var mul(const Var& a, const Var& b);
Var relu(const Var& x);
Var tanh(const Var& x);
Var sum(const Var& x);

Var layer_norm(const Var& x, const Var& gain, const Var& bias,
               double eps = 1e-5);

/// Inverted dropout; identity when `rate == 0` or `rng == nullptr`.
Var dropout(const Var& x, double rate, std::mt19937_64* rng);

/// Rows of `table` selected by `indices`.
Var embedding(const Var& table, std::span<const int> indices);
/// One output row per bag: the mean of the selected table rows.
Var embedding_bag_mean(const Var& table,
                       const std::vector<std::vector<int>>& bags);
Var gather_rows(const Var& x, std::span<const std::size_t> indices);
Var slice_rows(const Var& x, std::size_t begin, std::size_t end);
Var concat_rows(std::span<const Var> parts);

/// Scaled dot-product attention over pre-projected q (m x h), k, v (n x h),
/// split into `num_heads` column blocks. When `weights` is non-null it
/// receives one m x n post-softmax weight matrix per head.
Var attention(const Var& q, const Var& k, const Var& v,
              const AttentionMask& mask, int num_heads,
              std::vector<Tensor>* weights = nullptr);

/// Sum over rows of weight_i * -log softmax(logits_i)[target_i]. Rows with
/// weight 0 contribute nothing.
Var cross_entropy(const Var& logits, std::span<const int> targets,
                  std::span<const double> weights);

/// -weight * log softmax(logits)[target] for a single 1 x V row.
Var softmax_cross_entropy(const Var& logits, int target, double weight);

/// Sum over rows of -pos_weight*d*log(sigmoid(x)) - (1-d)*log(1-sigmoid(x))
/// for an m x 1 logit column.
Var weighted_bce_with_logits(const Var& logits, std::span<const double> targets,
                             double pos_weight);

// ---- plain tensor helpers ----------------------------------------------

Tensor log_softmax_row(std::span<const double> logits);
double sigmoid(double x);

}  // namespace obsgen
