// Copyright 2026 The dgrain Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dgrain/tensor.hpp"

namespace dgrain {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; only valid while the graph
/// that produced it is alive.
struct Var {
  Graph *graph = nullptr;
  std::size_t id = 0;

  const Tensor &value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Append-only tape for reverse-mode differentiation. Nodes are recorded in
/// evaluation order, so inputs always precede outputs and replaying the tape
/// backwards visits every node after all of its consumers.
class Graph {
public:
  using Backward = std::function<void(Graph &, std::size_t self)>;

  Graph() = default;
  Graph(const Graph &) = delete;
  Graph &operator=(const Graph &) = delete;

  Var constant(Tensor t) {
    return push("constant", std::move(t), nullptr, nullptr, {}, {}, false);
  }
  /// Constant that aliases `t` instead of copying it. `t` must outlive the
  /// graph and stay unmodified while the graph is in use.
  Var constant_ref(const Tensor &t) {
    return push("constant", Tensor{}, &t, nullptr, {}, {}, false);
  }
  /// Trainable leaf. backward() accumulates d(root)/d(t) into t.grad().
  Var parameter(Tensor &t) {
    if (!t.requires_grad())
      t.set_requires_grad(true);
    return push("parameter", Tensor{}, &t, &t, {}, {}, true);
  }

  /// Records an op output. `fn` receives the node id and reads its upstream
  /// gradient through out_grad(); it adds into inputs via accum().
  Var record(std::string_view tag, Tensor out, std::vector<std::size_t> inputs,
             Backward fn) {
    bool needs = false;
    for (auto i : inputs)
      needs = needs || nodes_[i].requires_grad;
    require_finite(out, tag.data());
    return push(tag, std::move(out), nullptr, nullptr, std::move(inputs),
                needs ? std::move(fn) : Backward{}, needs);
  }

  const Tensor &value(std::size_t id) const { return nodes_.at(id).value(); }
  std::string_view tag(std::size_t id) const { return nodes_.at(id).tag; }
  const std::vector<std::size_t> &inputs(std::size_t id) const {
    return nodes_.at(id).inputs;
  }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool finalized() const noexcept { return finalized_; }

  /// Upstream gradient of node `id` during backward().
  std::span<const double> out_grad(std::size_t id) const {
    return nodes_[id].grad;
  }
  /// Gradient buffer of input node `id`, zero-initialised on first touch.
  /// Empty when that node does not lead to a trainable leaf.
  std::span<double> accum(std::size_t id) {
    Node &n = nodes_[id];
    if (!n.requires_grad)
      return {};
    if (n.grad.empty())
      n.grad.assign(n.value().size(), 0.0);
    return n.grad;
  }

  /// Propagates d(root)/d(leaf) into every parameter reachable from `root`.
  /// Gradients add onto whatever the parameters already hold.
  void backward(Var root) {
    if (root.graph != this)
      throw ContractError("backward: root belongs to another graph");
    if (finalized_)
      throw ContractError("backward: graph already consumed");
    if (!value(root.id).is_scalar())
      throw ContractError("backward: root must be scalar, got " +
                          value(root.id).shape_str());
    finalized_ = true;
    if (!nodes_[root.id].requires_grad)
      return;
    nodes_[root.id].grad.assign(1, 1.0);
    for (std::size_t k = root.id + 1; k-- > 0;) {
      Node &n = nodes_[k];
      if (n.grad.empty())
        continue;
      if (n.param != nullptr) {
        auto dst = n.param->grad();
        for (std::size_t i = 0; i < dst.size(); ++i)
          dst[i] += n.grad[i];
      } else if (n.backward) {
        n.backward(*this, k);
      }
    }
  }

private:
  struct Node {
    std::string_view tag;
    Tensor owned;
    const Tensor *external = nullptr;
    Tensor *param = nullptr;
    std::vector<std::size_t> inputs;
    Backward backward;
    bool requires_grad = false;
    std::vector<double> grad;

    const Tensor &value() const { return external ? *external : owned; }
  };

  Var push(std::string_view tag, Tensor owned, const Tensor *external,
           Tensor *param, std::vector<std::size_t> inputs, Backward fn,
           bool requires_grad) {
    if (finalized_)
      throw ContractError("graph is finalized; no further nodes");
    nodes_.push_back(Node{tag, std::move(owned), external, param,
                          std::move(inputs), std::move(fn), requires_grad, {}});
    return Var{this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
  bool finalized_ = false;
};

inline const Tensor &Var::value() const { return graph->value(id); }

namespace detail {
inline Graph &same_graph(Var a, Var b) {
  if (a.graph == nullptr || a.graph != b.graph)
    throw ContractError("operands belong to different graphs");
  return *a.graph;
}
} // namespace detail

// Differentiable ops --------------------------------------------------------

inline Var matmul(Var a, Var b) {
  Graph &g = detail::same_graph(a, b);
  Tensor out = matmul(a.value(), b.value());
  return g.record("matmul", std::move(out), {a.id, b.id},
                  [a = a.id, b = b.id](Graph &g, std::size_t self) {
                    const Tensor &A = g.value(a), &B = g.value(b);
                    const auto G = g.out_grad(self);
                    const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
                    if (auto dA = g.accum(a); !dA.empty())
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j) {
                          const double gij = G[i * n + j];
                          if (gij == 0.0)
                            continue;
                          for (std::size_t p = 0; p < k; ++p)
                            dA[i * k + p] += gij * B(p, j);
                        }
                    if (auto dB = g.accum(b); !dB.empty())
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t p = 0; p < k; ++p) {
                          const double aip = A(i, p);
                          if (aip == 0.0)
                            continue;
                          for (std::size_t j = 0; j < n; ++j)
                            dB[p * n + j] += aip * G[i * n + j];
                        }
                  });
}

inline Var transpose(Var a) {
  Graph &g = *a.graph;
  return g.record("transpose", transpose(a.value()), {a.id},
                  [a = a.id](Graph &g, std::size_t self) {
                    const Tensor &A = g.value(a);
                    const auto G = g.out_grad(self);
                    auto dA = g.accum(a);
                    for (std::size_t i = 0; i < A.rows(); ++i)
                      for (std::size_t j = 0; j < A.cols(); ++j)
                        dA[i * A.cols() + j] += G[j * A.rows() + i];
                  });
}

inline Var add(Var a, Var b) {
  Graph &g = detail::same_graph(a, b);
  if (!a.value().same_shape(b.value()))
    throw DimensionError("add " + a.value().shape_str() + " + " +
                         b.value().shape_str());
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i)
    o[i] += bv[i];
  return g.record("add", std::move(out), {a.id, b.id},
                  [a = a.id, b = b.id](Graph &g, std::size_t self) {
                    const auto G = g.out_grad(self);
                    for (auto in : {a, b})
                      if (auto d = g.accum(in); !d.empty())
                        for (std::size_t i = 0; i < d.size(); ++i)
                          d[i] += G[i];
                  });
}

/// c * a for a constant c. A zero factor cuts the gradient path entirely.
inline Var scale(Var a, double c) {
  Graph &g = *a.graph;
  Tensor out = a.value();
  for (double &x : out.data())
    x *= c;
  return g.record("scale", std::move(out), {a.id},
                  [a = a.id, c](Graph &g, std::size_t self) {
                    if (c == 0.0)
                      return;
                    const auto G = g.out_grad(self);
                    auto d = g.accum(a);
                    for (std::size_t i = 0; i < d.size(); ++i)
                      d[i] += c * G[i];
                  });
}

/// s * a where s is a 1x1 node.
inline Var mul_scalar(Var a, Var s) {
  Graph &g = detail::same_graph(a, s);
  if (!s.value().is_scalar())
    throw DimensionError("mul_scalar: multiplier is " + s.value().shape_str());
  const double sv = s.value().item();
  Tensor out = a.value();
  for (double &x : out.data())
    x *= sv;
  return g.record("mul_scalar", std::move(out), {a.id, s.id},
                  [a = a.id, s = s.id](Graph &g, std::size_t self) {
                    const auto G = g.out_grad(self);
                    const auto A = g.value(a).data();
                    const double sv = g.value(s).item();
                    if (auto dA = g.accum(a); !dA.empty())
                      for (std::size_t i = 0; i < dA.size(); ++i)
                        dA[i] += sv * G[i];
                    if (auto dS = g.accum(s); !dS.empty()) {
                      double acc = 0.0;
                      for (std::size_t i = 0; i < A.size(); ++i)
                        acc += G[i] * A[i];
                      dS[0] += acc;
                    }
                  });
}

inline Var exp(Var a) {
  Graph &g = *a.graph;
  Tensor out = a.value();
  for (double &x : out.data())
    x = std::exp(x);
  return g.record("exp", std::move(out), {a.id},
                  [a = a.id](Graph &g, std::size_t self) {
                    const auto G = g.out_grad(self);
                    const auto Y = g.value(self).data();
                    auto d = g.accum(a);
                    for (std::size_t i = 0; i < d.size(); ++i)
                      d[i] += G[i] * Y[i];
                  });
}

/// Rows of `table` selected by `ids` (embedding lookup).
inline Var gather_rows(Var table, std::span<const std::size_t> ids) {
  Graph &g = *table.graph;
  const Tensor &T = table.value();
  Tensor out(ids.size(), T.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= T.rows())
      throw DimensionError("gather_rows: id " + std::to_string(ids[r]) +
                           " >= " + std::to_string(T.rows()));
    auto src = T.row_span(ids[r]);
    std::copy(src.begin(), src.end(), out.row_span(r).begin());
  }
  return g.record(
      "gather_rows", std::move(out), {table.id},
      [t = table.id, idx = std::vector<std::size_t>(ids.begin(), ids.end())](
          Graph &g, std::size_t self) {
        const auto G = g.out_grad(self);
        const std::size_t n = g.value(t).cols();
        auto d = g.accum(t);
        for (std::size_t r = 0; r < idx.size(); ++r)
          for (std::size_t j = 0; j < n; ++j)
            d[idx[r] * n + j] += G[r * n + j];
      });
}

inline Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  Graph &g = *a.graph;
  const Tensor &A = a.value();
  if (begin + count > A.rows())
    throw DimensionError("slice_rows beyond " + A.shape_str());
  const std::size_t n = A.cols();
  std::vector<double> d(A.data().begin() + begin * n,
                        A.data().begin() + (begin + count) * n);
  return g.record("slice_rows", Tensor(count, n, std::move(d)), {a.id},
                  [a = a.id, begin](Graph &g, std::size_t self) {
                    const auto G = g.out_grad(self);
                    const std::size_t n = g.value(a).cols();
                    auto dA = g.accum(a);
                    for (std::size_t i = 0; i < G.size(); ++i)
                      dA[begin * n + i] += G[i];
                  });
}

/// Column-wise mean over rows: m x n -> 1 x n.
inline Var mean_rows(Var a) {
  Graph &g = *a.graph;
  const Tensor &A = a.value();
  if (A.rows() == 0)
    throw DimensionError("mean_rows of empty tensor");
  Tensor out(1, A.cols());
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < A.cols(); ++j)
      out(0, j) += A(i, j);
  const double inv = 1.0 / static_cast<double>(A.rows());
  for (double &x : out.data())
    x *= inv;
  return g.record("mean_rows", std::move(out), {a.id},
                  [a = a.id](Graph &g, std::size_t self) {
                    const auto G = g.out_grad(self);
                    const Tensor &A = g.value(a);
                    const double inv = 1.0 / static_cast<double>(A.rows());
                    auto d = g.accum(a);
                    for (std::size_t i = 0; i < A.rows(); ++i)
                      for (std::size_t j = 0; j < A.cols(); ++j)
                        d[i * A.cols() + j] += inv * G[j];
                  });
}

/// Stacks equally wide row blocks vertically.
inline Var concat_rows(std::span<const Var> parts) {
  if (parts.empty())
    throw DimensionError("concat_rows of nothing");
  Graph &g = *parts.front().graph;
  const std::size_t n = parts.front().cols();
  std::size_t rows = 0;
  for (const Var &p : parts) {
    detail::same_graph(parts.front(), p);
    if (p.cols() != n)
      throw DimensionError("concat_rows width mismatch");
    rows += p.rows();
  }
  std::vector<double> d;
  d.reserve(rows * n);
  std::vector<std::size_t> ids;
  for (const Var &p : parts) {
    auto v = p.value().data();
    d.insert(d.end(), v.begin(), v.end());
    ids.push_back(p.id);
  }
  return g.record("concat_rows", Tensor(rows, n, std::move(d)), ids,
                  [ids](Graph &g, std::size_t self) {
                    const auto G = g.out_grad(self);
                    std::size_t off = 0;
                    for (auto id : ids) {
                      const std::size_t len = g.value(id).size();
                      if (auto d = g.accum(id); !d.empty())
                        for (std::size_t i = 0; i < len; ++i)
                          d[i] += G[off + i];
                      off += len;
                    }
                  });
}

inline Var row_softmax(Var a) {
  Graph &g = *a.graph;
  return g.record("row_softmax", row_softmax(a.value()), {a.id},
                  [a = a.id](Graph &g, std::size_t self) {
                    const Tensor &Y = g.value(self);
                    const auto G = g.out_grad(self);
                    auto d = g.accum(a);
                    const std::size_t n = Y.cols();
                    for (std::size_t i = 0; i < Y.rows(); ++i) {
                      double inner = 0.0;
                      for (std::size_t j = 0; j < n; ++j)
                        inner += G[i * n + j] * Y(i, j);
                      for (std::size_t j = 0; j < n; ++j)
                        d[i * n + j] += Y(i, j) * (G[i * n + j] - inner);
                    }
                  });
}

inline Var row_log_softmax(Var a) {
  Graph &g = *a.graph;
  return g.record("row_log_softmax", row_log_softmax(a.value()), {a.id},
                  [a = a.id](Graph &g, std::size_t self) {
                    const Tensor &Y = g.value(self);
                    const auto G = g.out_grad(self);
                    auto d = g.accum(a);
                    const std::size_t n = Y.cols();
                    for (std::size_t i = 0; i < Y.rows(); ++i) {
                      double gsum = 0.0;
                      for (std::size_t j = 0; j < n; ++j)
                        gsum += G[i * n + j];
                      for (std::size_t j = 0; j < n; ++j)
                        d[i * n + j] += G[i * n + j] - std::exp(Y(i, j)) * gsum;
                    }
                  });
}

/// Row-wise l2 normalisation; see the plain overload for the eps contract.
inline Var l2_normalize(Var a, double eps = kDefaultNormEps) {
  Graph &g = *a.graph;
  const Tensor &A = a.value();
  std::vector<double> norms(A.rows());
  for (std::size_t i = 0; i < A.rows(); ++i)
    norms[i] = l2_norm(A.row_span(i));
  return g.record("l2_normalize", l2_normalize(A, eps), {a.id},
                  [a = a.id, norms](Graph &g, std::size_t self) {
                    const Tensor &Y = g.value(self);
                    const auto G = g.out_grad(self);
                    auto d = g.accum(a);
                    const std::size_t n = Y.cols();
                    for (std::size_t i = 0; i < Y.rows(); ++i) {
                      double yg = 0.0;
                      for (std::size_t j = 0; j < n; ++j)
                        yg += Y(i, j) * G[i * n + j];
                      for (std::size_t j = 0; j < n; ++j)
                        d[i * n + j] += (G[i * n + j] - Y(i, j) * yg) / norms[i];
                    }
                  });
}

/// Trace of a square matrix, as a 1x1 node.
inline Var diag_sum(Var a) {
  Graph &g = *a.graph;
  const Tensor &A = a.value();
  if (A.rows() != A.cols())
    throw DimensionError("diag_sum of non-square " + A.shape_str());
  double s = 0.0;
  for (std::size_t i = 0; i < A.rows(); ++i)
    s += A(i, i);
  return g.record("diag_sum", Tensor::scalar(s), {a.id},
                  [a = a.id](Graph &g, std::size_t self) {
                    const double G = g.out_grad(self)[0];
                    const std::size_t n = g.value(a).rows();
                    auto d = g.accum(a);
                    for (std::size_t i = 0; i < n; ++i)
                      d[i * n + i] += G;
                  });
}

inline Var sum(Var a) {
  Graph &g = *a.graph;
  double s = 0.0;
  for (double x : a.value().data())
    s += x;
  return g.record("sum", Tensor::scalar(s), {a.id},
                  [a = a.id](Graph &g, std::size_t self) {
                    const double G = g.out_grad(self)[0];
                    for (double &x : g.accum(a))
                      x += G;
                  });
}

} // namespace dgrain
