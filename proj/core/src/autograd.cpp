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

#include "obsgen/autograd.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>

#include "obsgen/errors.hpp"

namespace obsgen {

namespace detail {

Tensor& Node::grad_buffer() {
  if (grad.shape() != value.shape()) grad = Tensor(value.shape());
  return grad;
}

}  // namespace detail

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using Strided = Eigen::OuterStride<>;
using MapBlock = Eigen::Map<RowMat, 0, Strided>;
using ConstMapBlock = Eigen::Map<const RowMat, 0, Strided>;

thread_local bool t_grad_enabled = true;

ConstMapMat as_matrix(const Tensor& t) {
  return ConstMapMat(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                     static_cast<Eigen::Index>(t.cols()));
}

MapMat as_matrix(Tensor& t) {
  return MapMat(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
}

// Creates the output node. Parents are recorded only when recording is on
// and at least one input needs a gradient.
Var make_result(Tensor value, std::vector<Var> inputs,
                std::function<void(detail::Node&)> backward_fn) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  node->is_leaf = false;
  if (t_grad_enabled) {
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(inputs.size());
      for (auto& in : inputs) node->parents.push_back(in.shared_node());
      node->backward = std::move(backward_fn);
    }
  }
  return Var::from_node(std::move(node));
}

// Parent i of `self` when it wants a gradient, else null.
Tensor* parent_grad(detail::Node& self, std::size_t i) {
  auto& p = self.parents[i];
  return p->requires_grad ? &p->grad_buffer() : nullptr;
}

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

Var::Var(Tensor value, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) {
  t_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

AttentionMask::AttentionMask(std::size_t rows, std::size_t cols, bool allowed)
    : rows_(rows), cols_(cols), bits_(rows * cols, allowed ? 1 : 0) {}

AttentionMask AttentionMask::causal(std::size_t n) {
  AttentionMask mask(n, n, false);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) mask.set(i, j, true);
  }
  return mask;
}

void backward(const Var& loss) {
  if (!loss.defined() || loss.value().size() != 1) {
    throw NumericError("backward() requires a scalar loss, got shape " +
                       (loss.defined() ? shape_to_string(loss.shape())
                                       : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) {
    throw NumericError("backward() on a loss that is not connected to any "
                       "parameter");
  }

  // Iterative post-order DFS gives a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  visited.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (detail::Node* node : order) {
    if (!node->is_leaf) node->grad = Tensor(node->value.shape());
  }
  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward) node->backward(*node);
  }
}

Var matmul(const Var& a, const Var& b) {
  require_matrix(a.value(), "matmul");
  require_matrix(b.value(), "matmul");
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ for " +
                     shape_to_string(a.shape()) + " and " +
                     shape_to_string(b.shape()));
  }
  Tensor out({a.rows(), b.cols()});
  as_matrix(out).noalias() = as_matrix(a.value()) * as_matrix(b.value());
  return make_result(std::move(out), {a, b}, [](detail::Node& self) {
    const auto dc = as_matrix(self.grad);
    if (Tensor* ga = parent_grad(self, 0)) {
      as_matrix(*ga).noalias() +=
          dc * as_matrix(self.parents[1]->value).transpose();
    }
    if (Tensor* gb = parent_grad(self, 1)) {
      as_matrix(*gb).noalias() +=
          as_matrix(self.parents[0]->value).transpose() * dc;
    }
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  require_matrix(a.value(), "matmul_nt");
  require_matrix(b.value(), "matmul_nt");
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: inner dimensions differ for " +
                     shape_to_string(a.shape()) + " and " +
                     shape_to_string(b.shape()));
  }
  Tensor out({a.rows(), b.rows()});
  as_matrix(out).noalias() = as_matrix(a.value()) * as_matrix(b.value()).transpose();
  return make_result(std::move(out), {a, b}, [](detail::Node& self) {
    const auto dc = as_matrix(self.grad);
    if (Tensor* ga = parent_grad(self, 0)) {
      as_matrix(*ga).noalias() += dc * as_matrix(self.parents[1]->value);
    }
    if (Tensor* gb = parent_grad(self, 1)) {
      as_matrix(*gb).noalias() +=
          dc.transpose() * as_matrix(self.parents[0]->value);
    }
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  const auto bd = b.value().data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] += bd[i];
  return make_result(std::move(out), {a, b}, [](detail::Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (Tensor* g = parent_grad(self, p)) {
        auto gd = g->data();
        const auto sd = self.grad.data();
        for (std::size_t i = 0; i < gd.size(); ++i) gd[i] += sd[i];
      }
    }
  });
}

Var add_row(const Var& x, const Var& row) {
  require_matrix(x.value(), "add_row");
  if (row.value().size() != x.cols()) {
    throw ShapeError("add_row: row " + shape_to_string(row.shape()) +
                     " does not broadcast over " + shape_to_string(x.shape()));
  }
  Tensor out = x.value();
  const std::size_t n = x.cols();
  const auto rd = row.value().data();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto orow = out.row(r);
    for (std::size_t c = 0; c < n; ++c) orow[c] += rd[c];
  }
  return make_result(std::move(out), {x, row}, [n](detail::Node& self) {
    const Tensor& g = self.grad;
    if (Tensor* gx = parent_grad(self, 0)) {
      auto gd = gx->data();
      const auto sd = g.data();
      for (std::size_t i = 0; i < gd.size(); ++i) gd[i] += sd[i];
    }
    if (Tensor* gr = parent_grad(self, 1)) {
      auto gd = gr->data();
      for (std::size_t r = 0; r < g.rows(); ++r) {
        const auto grow = g.row(r);
        for (std::size_t c = 0; c < n; ++c) gd[c] += grow[c];
      }
    }
  });
}

Var scale(const Var& x, double factor) {
  Tensor out = x.value();
  for (double& v : out.data()) v *= factor;
  return make_result(std::move(out), {x}, [factor](detail::Node& self) {
    if (Tensor* g = parent_grad(self, 0)) {
      auto gd = g->data();
      const auto sd = self.grad.data();
      for (std::size_t i = 0; i < gd.size(); ++i) gd[i] += factor * sd[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  const auto bd = b.value().data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] *= bd[i];
  return make_result(std::move(out), {a, b}, [](detail::Node& self) {
    const auto sd = self.grad.data();
    for (std::size_t p = 0; p < 2; ++p) {
      if (Tensor* g = parent_grad(self, p)) {
        const auto other = self.parents[1 - p]->value.data();
        auto gd = g->data();
        for (std::size_t i = 0; i < gd.size(); ++i) gd[i] += sd[i] * other[i];
      }
    }
  });
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return make_result(std::move(out), {x}, [](detail::Node& self) {
    if (Tensor* g = parent_grad(self, 0)) {
      const auto xd = self.parents[0]->value.data();
      const auto sd = self.grad.data();
      auto gd = g->data();
      for (std::size_t i = 0; i < gd.size(); ++i) {
        if (xd[i] > 0.0) gd[i] += sd[i];
      }
    }
  });
}

Var tanh(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = std::tanh(v);
  return make_result(std::move(out), {x}, [](detail::Node& self) {
    if (Tensor* g = parent_grad(self, 0)) {
      const auto yd = self.value.data();
      const auto sd = self.grad.data();
      auto gd = g->data();
      for (std::size_t i = 0; i < gd.size(); ++i) {
        gd[i] += sd[i] * (1.0 - yd[i] * yd[i]);
      }
    }
  });
}

Var sum(const Var& x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return make_result(Tensor::scalar(total), {x}, [](detail::Node& self) {
    if (Tensor* g = parent_grad(self, 0)) {
      const double s = self.grad[0];
      for (double& v : g->data()) v += s;
    }
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  require_matrix(x.value(), "layer_norm");
  const std::size_t n = x.cols();
  if (gain.value().size() != n || bias.value().size() != n) {
    throw ShapeError("layer_norm: gain " + shape_to_string(gain.shape()) +
                     " / bias " + shape_to_string(bias.shape()) +
                     " do not match input " + shape_to_string(x.shape()));
  }
  const std::size_t m = x.rows();
  Tensor out({m, n});
  Tensor xhat({m, n});
  std::vector<double> inv_std(m);
  const auto gd = gain.value().data();
  const auto bd = bias.value().data();
  for (std::size_t r = 0; r < m; ++r) {
    const auto xr = x.value().row(r);
    double mean = 0.0;
    for (double v : xr) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : xr) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[r] = inv;
    auto hr = xhat.row(r);
    auto orow = out.row(r);
    for (std::size_t c = 0; c < n; ++c) {
      hr[c] = (xr[c] - mean) * inv;
      orow[c] = hr[c] * gd[c] + bd[c];
    }
  }
  return make_result(
      std::move(out), {x, gain, bias},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), n,
       m](detail::Node& self) {
        const Tensor& dy = self.grad;
        const auto g = self.parents[1]->value.data();
        Tensor* gx = parent_grad(self, 0);
        Tensor* gg = parent_grad(self, 1);
        Tensor* gb = parent_grad(self, 2);
        std::vector<double> dxhat(n);
        for (std::size_t r = 0; r < m; ++r) {
          const auto dyr = dy.row(r);
          const auto hr = xhat.row(r);
          if (gg) {
            auto ggd = gg->data();
            for (std::size_t c = 0; c < n; ++c) ggd[c] += dyr[c] * hr[c];
          }
          if (gb) {
            auto gbd = gb->data();
            for (std::size_t c = 0; c < n; ++c) gbd[c] += dyr[c];
          }
          if (gx) {
            double sum_d = 0.0;
            double sum_dh = 0.0;
            for (std::size_t c = 0; c < n; ++c) {
              dxhat[c] = dyr[c] * g[c];
              sum_d += dxhat[c];
              sum_dh += dxhat[c] * hr[c];
            }
            const double k = inv_std[r] / static_cast<double>(n);
            auto gxr = gx->row(r);
            for (std::size_t c = 0; c < n; ++c) {
              gxr[c] += k * (static_cast<double>(n) * dxhat[c] - sum_d -
                             hr[c] * sum_dh);
            }
          }
        }
      });
}

Var dropout(const Var& x, double rate, std::mt19937_64* rng) {
  if (rate <= 0.0 || rng == nullptr) return x;
  if (rate >= 1.0) throw ConfigError("dropout rate must be in [0, 1)");
  const double keep_scale = 1.0 / (1.0 - rate);
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<double> mask(x.value().size());
  for (double& m : mask) m = keep(*rng) ? keep_scale : 0.0;
  Tensor out = x.value();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] *= mask[i];
  return make_result(std::move(out), {x},
                     [mask = std::move(mask)](detail::Node& self) {
                       if (Tensor* g = parent_grad(self, 0)) {
                         auto gd = g->data();
                         const auto sd = self.grad.data();
                         for (std::size_t i = 0; i < gd.size(); ++i) {
                           gd[i] += sd[i] * mask[i];
                         }
                       }
                     });
}

Var embedding(const Var& table, std::span<const int> indices) {
  require_matrix(table.value(), "embedding");
  const std::size_t vocab = table.rows();
  const std::size_t dim = table.cols();
  Tensor out({indices.size(), dim});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int id = indices[i];
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw VocabularyError("embedding id " + std::to_string(id) +
                            " outside table of " + std::to_string(vocab) +
                            " rows");
    }
    const auto src = table.value().row(static_cast<std::size_t>(id));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  std::vector<int> ids(indices.begin(), indices.end());
  return make_result(std::move(out), {table},
                     [ids = std::move(ids), dim](detail::Node& self) {
                       if (Tensor* g = parent_grad(self, 0)) {
                         for (std::size_t i = 0; i < ids.size(); ++i) {
                           auto dst = g->row(static_cast<std::size_t>(ids[i]));
                           const auto src = self.grad.row(i);
                           for (std::size_t c = 0; c < dim; ++c) dst[c] += src[c];
                         }
                       }
                     });
}

Var embedding_bag_mean(const Var& table,
                       const std::vector<std::vector<int>>& bags) {
  require_matrix(table.value(), "embedding_bag_mean");
  const std::size_t vocab = table.rows();
  const std::size_t dim = table.cols();
  Tensor out({bags.size(), dim});
  for (std::size_t b = 0; b < bags.size(); ++b) {
    if (bags[b].empty()) throw DataError("embedding_bag_mean: empty bag");
    const double w = 1.0 / static_cast<double>(bags[b].size());
    auto dst = out.row(b);
    for (int id : bags[b]) {
      if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
        throw VocabularyError("embedding id " + std::to_string(id) +
                              " outside table of " + std::to_string(vocab) +
                              " rows");
      }
      const auto src = table.value().row(static_cast<std::size_t>(id));
      for (std::size_t c = 0; c < dim; ++c) dst[c] += w * src[c];
    }
  }
  return make_result(std::move(out), {table}, [bags, dim](detail::Node& self) {
    if (Tensor* g = parent_grad(self, 0)) {
      for (std::size_t b = 0; b < bags.size(); ++b) {
        const double w = 1.0 / static_cast<double>(bags[b].size());
        const auto src = self.grad.row(b);
        for (int id : bags[b]) {
          auto dst = g->row(static_cast<std::size_t>(id));
          for (std::size_t c = 0; c < dim; ++c) dst[c] += w * src[c];
        }
      }
    }
  });
}

Var gather_rows(const Var& x, std::span<const std::size_t> indices) {
  require_matrix(x.value(), "gather_rows");
  const std::size_t dim = x.cols();
  Tensor out({indices.size(), dim});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= x.rows()) {
      throw ShapeError("gather_rows: row " + std::to_string(indices[i]) +
                       " outside " + shape_to_string(x.shape()));
    }
    const auto src = x.value().row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return make_result(std::move(out), {x},
                     [idx = std::move(idx), dim](detail::Node& self) {
                       if (Tensor* g = parent_grad(self, 0)) {
                         for (std::size_t i = 0; i < idx.size(); ++i) {
                           auto dst = g->row(idx[i]);
                           const auto src = self.grad.row(i);
                           for (std::size_t c = 0; c < dim; ++c) dst[c] += src[c];
                         }
                       }
                     });
}

Var slice_rows(const Var& x, std::size_t begin, std::size_t end) {
  require_matrix(x.value(), "slice_rows");
  if (begin > end || end > x.rows()) {
    throw ShapeError("slice_rows: [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") outside " +
                     shape_to_string(x.shape()));
  }
  const std::size_t dim = x.cols();
  const auto src = x.value().data().subspan(begin * dim, (end - begin) * dim);
  Tensor out({end - begin, dim}, std::vector<double>(src.begin(), src.end()));
  return make_result(std::move(out), {x}, [begin, dim](detail::Node& self) {
    if (Tensor* g = parent_grad(self, 0)) {
      auto dst = g->data().subspan(begin * dim, self.grad.size());
      const auto sd = self.grad.data();
      for (std::size_t i = 0; i < sd.size(); ++i) dst[i] += sd[i];
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t dim = parts.front().cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.cols() != dim) {
      throw ShapeError("concat_rows: column mismatch " +
                       shape_to_string(parts.front().shape()) + " vs " +
                       shape_to_string(p.shape()));
    }
    total += p.rows();
  }
  std::vector<double> data;
  data.reserve(total * dim);
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(data.size());
    const auto d = p.value().data();
    data.insert(data.end(), d.begin(), d.end());
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return make_result(Tensor({total, dim}, std::move(data)), inputs,
                     [offsets = std::move(offsets)](detail::Node& self) {
                       const auto sd = self.grad.data();
                       for (std::size_t p = 0; p < self.parents.size(); ++p) {
                         if (Tensor* g = parent_grad(self, p)) {
                           auto gd = g->data();
                           for (std::size_t i = 0; i < gd.size(); ++i) {
                             gd[i] += sd[offsets[p] + i];
                           }
                         }
                       }
                     });
}

Var attention(const Var& q, const Var& k, const Var& v,
              const AttentionMask& mask, int num_heads,
              std::vector<Tensor>* weights) {
  require_matrix(q.value(), "attention");
  require_matrix(k.value(), "attention");
  require_matrix(v.value(), "attention");
  const std::size_t m = q.rows();
  const std::size_t n = k.rows();
  const std::size_t h = q.cols();
  if (k.cols() != h || v.cols() != h || v.rows() != n) {
    throw ShapeError("attention: incompatible q " + shape_to_string(q.shape()) +
                     ", k " + shape_to_string(k.shape()) + ", v " +
                     shape_to_string(v.shape()));
  }
  if (num_heads <= 0 || h % static_cast<std::size_t>(num_heads) != 0) {
    throw ShapeError("attention: hidden size " + std::to_string(h) +
                     " not divisible by " + std::to_string(num_heads) +
                     " heads");
  }
  if (mask.rows() != m || mask.cols() != n) {
    throw ShapeError("attention: mask " + std::to_string(mask.rows()) + "x" +
                     std::to_string(mask.cols()) + " does not match " +
                     std::to_string(m) + "x" + std::to_string(n) + " scores");
  }
  for (std::size_t i = 0; i < m; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < n && !any; ++j) any = mask.allowed(i, j);
    if (!any) {
      throw NumericError("attention: fully masked query row " +
                         std::to_string(i));
    }
  }

  const auto heads = static_cast<std::size_t>(num_heads);
  const std::size_t dh = h / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto em = static_cast<Eigen::Index>(m);
  const auto en = static_cast<Eigen::Index>(n);
  const auto edh = static_cast<Eigen::Index>(dh);
  const Strided stride(static_cast<Eigen::Index>(h));

  std::vector<Tensor> probs;
  probs.reserve(heads);
  Tensor out({m, h});
  for (std::size_t hd = 0; hd < heads; ++hd) {
    const std::size_t off = hd * dh;
    ConstMapBlock qh(q.value().data().data() + off, em, edh, stride);
    ConstMapBlock kh(k.value().data().data() + off, en, edh, stride);
    ConstMapBlock vh(v.value().data().data() + off, en, edh, stride);
    Tensor p({m, n});
    auto pm = as_matrix(p);
    pm.noalias() = (qh * kh.transpose()) * inv_sqrt;
    for (std::size_t i = 0; i < m; ++i) {
      auto row = p.row(i);
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) {
        if (!mask.allowed(i, j)) row[j] += kMaskedLogit;
        mx = std::max(mx, row[j]);
      }
      double z = 0.0;
      for (double& s : row) {
        s = std::exp(s - mx);
        z += s;
      }
      for (double& s : row) s /= z;
    }
    MapBlock oh(out.data().data() + off, em, edh, stride);
    oh.noalias() = pm * vh;
    probs.push_back(std::move(p));
  }
  if (weights) *weights = probs;

  return make_result(
      std::move(out), {q, k, v},
      [probs = std::move(probs), heads, dh, m, n, h, inv_sqrt](
          detail::Node& self) {
        const auto em = static_cast<Eigen::Index>(m);
        const auto en = static_cast<Eigen::Index>(n);
        const auto edh = static_cast<Eigen::Index>(dh);
        const Strided stride(static_cast<Eigen::Index>(h));
        Tensor* gq = parent_grad(self, 0);
        Tensor* gk = parent_grad(self, 1);
        Tensor* gv = parent_grad(self, 2);
        const Tensor& qv = self.parents[0]->value;
        const Tensor& kv = self.parents[1]->value;
        const Tensor& vv = self.parents[2]->value;
        RowMat dp(em, en);
        for (std::size_t hd = 0; hd < heads; ++hd) {
          const std::size_t off = hd * dh;
          const auto pm = as_matrix(probs[hd]);
          ConstMapBlock doh(self.grad.data().data() + off, em, edh, stride);
          ConstMapBlock qh(qv.data().data() + off, em, edh, stride);
          ConstMapBlock kh(kv.data().data() + off, en, edh, stride);
          ConstMapBlock vh(vv.data().data() + off, en, edh, stride);
          if (gv) {
            MapBlock gvh(gv->data().data() + off, en, edh, stride);
            gvh.noalias() += pm.transpose() * doh;
          }
          if (!gq && !gk) continue;
          dp.noalias() = doh * vh.transpose();
          // Softmax Jacobian: ds = p * (dp - rowsum(dp * p)).
          for (Eigen::Index i = 0; i < em; ++i) {
            const double dot = (dp.row(i).array() * pm.row(i).array()).sum();
            dp.row(i) =
                (pm.row(i).array() * (dp.row(i).array() - dot)).matrix();
          }
          dp *= inv_sqrt;
          if (gq) {
            MapBlock gqh(gq->data().data() + off, em, edh, stride);
            gqh.noalias() += dp * kh;
          }
          if (gk) {
            MapBlock gkh(gk->data().data() + off, en, edh, stride);
            gkh.noalias() += dp.transpose() * qh;
          }
        }
      });
}

Tensor log_softmax_row(std::span<const double> logits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  const double lse = mx + std::log(z);
  Tensor out({1, logits.size()});
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Var cross_entropy(const Var& logits, std::span<const int> targets,
                  std::span<const double> weights) {
  require_matrix(logits.value(), "cross_entropy");
  const std::size_t m = logits.rows();
  const std::size_t classes = logits.cols();
  if (targets.size() != m || weights.size() != m) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) +
                     " targets / " + std::to_string(weights.size()) +
                     " weights for logits " + shape_to_string(logits.shape()));
  }
  Tensor probs({m, classes});
  double total = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    const int t = targets[r];
    if (t < 0 || static_cast<std::size_t>(t) >= classes) {
      throw std::out_of_range("cross_entropy: target index " +
                              std::to_string(t) + " outside [0, " +
                              std::to_string(classes) + ")");
    }
    if (weights[r] < 0.0) {
      throw std::invalid_argument("cross_entropy: negative weight");
    }
    const Tensor lp = log_softmax_row(logits.value().row(r));
    total -= weights[r] * lp[static_cast<std::size_t>(t)];
    auto pr = probs.row(r);
    for (std::size_t c = 0; c < classes; ++c) pr[c] = std::exp(lp[c]);
  }
  std::vector<int> tg(targets.begin(), targets.end());
  std::vector<double> wt(weights.begin(), weights.end());
  return make_result(
      Tensor::scalar(total), {logits},
      [probs = std::move(probs), tg = std::move(tg), wt = std::move(wt)](
          detail::Node& self) {
        if (Tensor* g = parent_grad(self, 0)) {
          const double s = self.grad[0];
          for (std::size_t r = 0; r < tg.size(); ++r) {
            if (wt[r] == 0.0) continue;
            auto gr = g->row(r);
            const auto pr = probs.row(r);
            for (std::size_t c = 0; c < gr.size(); ++c) {
              const double onehot =
                  c == static_cast<std::size_t>(tg[r]) ? 1.0 : 0.0;
              gr[c] += s * wt[r] * (pr[c] - onehot);
            }
          }
        }
      });
}

Var softmax_cross_entropy(const Var& logits, int target, double weight) {
  if (logits.value().rank() != 2 || logits.rows() != 1) {
    throw ShapeError("softmax_cross_entropy: expected a 1 x V row, got " +
                     shape_to_string(logits.shape()));
  }
  if (!(weight > 0.0)) {
    throw std::invalid_argument("softmax_cross_entropy: weight must be > 0");
  }
  const int targets[] = {target};
  const double weights[] = {weight};
  return cross_entropy(logits, targets, weights);
}

Var weighted_bce_with_logits(const Var& logits, std::span<const double> targets,
                             double pos_weight) {
  require_matrix(logits.value(), "weighted_bce_with_logits");
  if (logits.cols() != 1 || logits.rows() != targets.size()) {
    throw ShapeError("weighted_bce_with_logits: logits " +
                     shape_to_string(logits.shape()) + " vs " +
                     std::to_string(targets.size()) + " targets");
  }
  double total = 0.0;
  const auto x = logits.value().data();
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double d = targets[i];
    total += pos_weight * d * softplus(-x[i]) + (1.0 - d) * softplus(x[i]);
  }
  std::vector<double> tg(targets.begin(), targets.end());
  return make_result(Tensor::scalar(total), {logits},
                     [tg = std::move(tg), pos_weight](detail::Node& self) {
                       if (Tensor* g = parent_grad(self, 0)) {
                         const double s = self.grad[0];
                         const auto x = self.parents[0]->value.data();
                         auto gd = g->data();
                         for (std::size_t i = 0; i < tg.size(); ++i) {
                           const double p = sigmoid(x[i]);
                           gd[i] += s * (pos_weight * tg[i] * (p - 1.0) +
                                         (1.0 - tg[i]) * p);
                         }
                       }
                     });
}

}  // namespace obsgen
