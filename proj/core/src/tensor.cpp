// SPDX-License-Identifier: Apache-2.0
#include "televit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "televit/errors.hpp"
#include "televit/rng.hpp"

namespace televit {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::vector<double>& detail::Node::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

namespace {

thread_local bool t_grad_enabled = true;

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

void check_shape(const Shape& shape) {
  for (auto d : shape)
    if (d == 0) throw DimensionError("tensor dims must be positive, got " + shape_str(shape));
}

// Builds an op result. Graph edges are recorded only when some input
// requires grad and recording is enabled.
Tensor make_result(std::string_view op, Shape shape, std::vector<double> data,
                   std::initializer_list<const Tensor*> inputs, std::function<void(Node&)> rule) {
  for (double v : data)
    if (!std::isfinite(v)) throw NumericError("non-finite value produced by " + std::string(op));
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  bool track = false;
  if (t_grad_enabled)
    for (const Tensor* t : inputs) track = track || t->requires_grad();
  if (track) {
    node->requires_grad = true;
    for (const Tensor* t : inputs) node->inputs.push_back(t->node());
    node->backward = std::move(rule);
  }
  return Tensor(std::move(node));
}

Tensor make_result(std::string_view op, Shape shape, std::vector<double> data,
                   const std::vector<Tensor>& inputs, std::function<void(Node&)> rule) {
  for (double v : data)
    if (!std::isfinite(v)) throw NumericError("non-finite value produced by " + std::string(op));
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  bool track = false;
  if (t_grad_enabled)
    for (const auto& t : inputs) track = track || t.requires_grad();
  if (track) {
    node->requires_grad = true;
    for (const auto& t : inputs) node->inputs.push_back(t.node());
    node->backward = std::move(rule);
  }
  return Tensor(std::move(node));
}

// C[m,n] += A[m,k] * B[k,n]
// Register tile of C[MR,NR] += A[MR,k] * B[k,NR]. Each element accumulates
// its products in ascending k order, so tiles and edges agree bitwise.
template <std::size_t MR, std::size_t NR>
inline void gemm_tile(std::size_t k, const double* a, std::size_t lda, const double* b,
                      std::size_t ldb, double* c, std::size_t ldc) {
  double acc[MR][NR];
  for (std::size_t r = 0; r < MR; ++r)
    for (std::size_t j = 0; j < NR; ++j) acc[r][j] = c[r * ldc + j];
  for (std::size_t p = 0; p < k; ++p) {
    const double* bp = b + p * ldb;
    for (std::size_t r = 0; r < MR; ++r) {
      const double av = a[r * lda + p];
      for (std::size_t j = 0; j < NR; ++j) acc[r][j] += av * bp[j];
    }
  }
  for (std::size_t r = 0; r < MR; ++r)
    for (std::size_t j = 0; j < NR; ++j) c[r * ldc + j] = acc[r][j];
}

void gemm_edge(std::size_t rows, std::size_t cols, std::size_t k, const double* a, std::size_t lda,
               const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < cols; ++j) {
      double acc = c[r * ldc + j];
      for (std::size_t p = 0; p < k; ++p) acc += a[r * lda + p] * b[p * ldb + j];
      c[r * ldc + j] = acc;
    }
}

// C[m,n] += A[m,k] * B[k,n]
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  constexpr std::size_t MR = 4, NR = 8;
  const std::size_t m_main = m - m % MR, n_main = n - n % NR;
  for (std::size_t i = 0; i < m_main; i += MR) {
    for (std::size_t j = 0; j < n_main; j += NR)
      gemm_tile<MR, NR>(k, a + i * k, k, b + j, n, c + i * n + j, n);
    if (n_main < n) gemm_edge(MR, n - n_main, k, a + i * k, k, b + n_main, n, c + i * n + n_main, n);
  }
  if (m_main < m) gemm_edge(m - m_main, n, k, a + m_main * k, k, b, n, c + m_main * n, n);
}

void transpose_into(std::size_t rows, std::size_t cols, const double* src, std::vector<double>& dst) {
  dst.resize(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

// dA[m,k] += G[m,n] * B[k,n]^T
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* g, const double* b,
             double* da) {
  thread_local std::vector<double> bt;
  transpose_into(k, n, b, bt);
  gemm_nn(m, n, k, g, bt.data(), da);
}

// dB[k,n] += A[m,k]^T * G[m,n]
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* g,
             double* db) {
  thread_local std::vector<double> at;
  transpose_into(m, k, a, at);
  gemm_nn(k, m, n, at.data(), g, db);
}

void require_same_shape(std::string_view op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ");
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() : node_(std::make_shared<Node>()) { node_->data.assign(1, 0.0); }

Tensor::Tensor(Shape shape, bool requires_grad) : node_(std::make_shared<Node>()) {
  check_shape(shape);
  node_->data.assign(shape_numel(shape), 0.0);
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : node_(std::make_shared<Node>()) {
  check_shape(shape);
  if (shape_numel(shape) != data.size())
    throw DimensionError("shape " + shape_str(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<double>{value}, requires_grad);
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) t.mutable_data()[i * n + i] = 1.0;
  return t;
}

Tensor Tensor::full(Shape shape, double value) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank())
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_str(shape()));
  return node_->shape[axis];
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

std::span<double> Tensor::mutable_grad() { return node_->ensure_grad(); }

Tensor Tensor::detach() const { return Tensor(shape(), node_->data, false); }

// ---------------------------------------------------------------------------
// Graph

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

ComputationGraph trace(const Tensor& root) {
  ComputationGraph graph;
  std::unordered_map<const Node*, std::size_t> ids;
  // Iterative post-order DFS; a node is emitted after all of its inputs.
  std::vector<std::pair<const Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  std::unordered_map<const Node*, bool> on_stack;
  on_stack[root.node().get()] = true;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      const Node* child = node->inputs[next++].get();
      if (!ids.count(child) && !on_stack[child]) {
        on_stack[child] = true;
        stack.emplace_back(child, 0);
      }
      continue;
    }
    GraphRecord rec;
    rec.op = node->op;
    rec.node = node;
    for (const auto& in : node->inputs) rec.inputs.push_back(ids.at(in.get()));
    ids[node] = graph.nodes.size();
    graph.nodes.push_back(std::move(rec));
    stack.pop_back();
  }
  return graph;
}

void backward(const Tensor& root) {
  if (root.rank() != 0)
    throw ContractError("backward() needs a scalar root, got shape " + shape_str(root.shape()));
  if (!root.requires_grad()) return;
  const ComputationGraph graph = trace(root);
  root.node()->ensure_grad()[0] += 1.0;
  for (auto it = graph.nodes.rbegin(); it != graph.nodes.rend(); ++it) {
    auto* node = const_cast<Node*>(it->node);
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  const bool batched = a.rank() == 3;
  if ((a.rank() != 2 && !batched) || b.rank() != 2 || a.shape().back() != b.dim(0))
    throw DimensionError("matmul: shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " are incompatible");
  const std::size_t rows = batched ? a.dim(0) * a.dim(1) : a.dim(0);
  const std::size_t k = b.dim(0), n = b.dim(1);
  std::vector<double> out(rows * n, 0.0);
  gemm_nn(rows, k, n, a.data().data(), b.data().data(), out.data());
  Shape shape = batched ? Shape{a.dim(0), a.dim(1), n} : Shape{rows, n};
  return make_result("matmul", std::move(shape), std::move(out), {&a, &b},
                     [rows, k, n](Node& self) {
                       auto& na = *self.inputs[0];
                       auto& nb = *self.inputs[1];
                       if (na.requires_grad)
                         gemm_nt(rows, k, n, self.grad.data(), nb.data.data(),
                                 na.ensure_grad().data());
                       if (nb.requires_grad)
                         gemm_tn(rows, k, n, na.data.data(), self.grad.data(),
                                 nb.ensure_grad().data());
                     });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
    throw DimensionError("bmm: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " are incompatible");
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  std::vector<double> out(batch * m * n, 0.0);
  for (std::size_t s = 0; s < batch; ++s)
    gemm_nn(m, k, n, a.data().data() + s * m * k, b.data().data() + s * k * n,
            out.data() + s * m * n);
  return make_result("bmm", Shape{batch, m, n}, std::move(out), {&a, &b},
                     [batch, m, k, n](Node& self) {
                       auto& na = *self.inputs[0];
                       auto& nb = *self.inputs[1];
                       for (std::size_t s = 0; s < batch; ++s) {
                         const double* g = self.grad.data() + s * m * n;
                         if (na.requires_grad)
                           gemm_nt(m, k, n, g, nb.data.data() + s * k * n,
                                   na.ensure_grad().data() + s * m * k);
                         if (nb.requires_grad)
                           gemm_tn(m, k, n, na.data.data() + s * m * k, g,
                                   nb.ensure_grad().data() + s * k * n);
                       }
                     });
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result("add", a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      auto& g = in->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_result("sub", a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    const double sign[2] = {1.0, -1.0};
    for (std::size_t s = 0; s < 2; ++s) {
      auto& in = *self.inputs[s];
      if (!in.requires_grad) continue;
      auto& g = in.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign[s] * self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result("mul", a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    auto& na = *self.inputs[0];
    auto& nb = *self.inputs[1];
    if (na.requires_grad) {
      auto& g = na.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * nb.data[i];
    }
    if (nb.requires_grad) {
      auto& g = nb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * na.data[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
  return make_result("scale", a.shape(), std::move(out), {&a}, [factor](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rank() != 1 || x.rank() == 0 || x.shape().back() != bias.dim(0))
    throw DimensionError("add_bias: shapes " + shape_str(x.shape()) + " and " +
                         shape_str(bias.shape()) + " are incompatible");
  const std::size_t n = bias.dim(0);
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias.data()[i % n];
  return make_result("add_bias", x.shape(), std::move(out), {&x, &bias}, [n](Node& self) {
    auto& nx = *self.inputs[0];
    auto& nb = *self.inputs[1];
    if (nx.requires_grad) {
      auto& g = nx.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (nb.requires_grad) {
      auto& g = nb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % n] += self.grad[i];
    }
  });
}

Tensor gelu(const Tensor& x) {
  constexpr double kAlpha = 0.044715;
  const double c = std::sqrt(2.0 / std::numbers::pi);
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.data()[i];
    out[i] = 0.5 * v * (1.0 + std::tanh(c * (v + kAlpha * v * v * v)));
  }
  return make_result("gelu", x.shape(), std::move(out), {&x}, [c](Node& self) {
    auto& in = *self.inputs[0];
    auto& g = in.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = in.data[i];
      const double t = std::tanh(c * (v + kAlpha * v * v * v));
      const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * c * (1.0 + 3.0 * kAlpha * v * v);
      g[i] += self.grad[i] * d;
    }
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank())
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " +
                         shape_str(x.shape()));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t n = x.dim(axis);
  std::vector<double> out(x.numel());
  const double* in = x.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t q = 0; q < inner; ++q) {
      const std::size_t base = o * n * inner + q;
      double mx = in[base];
      for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, in[base + j * inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(in[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= total;
    }
  }
  return make_result("softmax", x.shape(), std::move(out), {&x}, [outer, inner, n](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    const auto& y = self.data;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t q = 0; q < inner; ++q) {
        const std::size_t base = o * n * inner + q;
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += self.grad[base + j * inner] * y[base + j * inner];
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t idx = base + j * inner;
          g[idx] += y[idx] * (self.grad[idx] - s);
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() == 0 || gamma.rank() != 1 || beta.rank() != 1 ||
      gamma.dim(0) != x.shape().back() || beta.dim(0) != x.shape().back())
    throw DimensionError("layer_norm: x " + shape_str(x.shape()) + ", gamma " +
                         shape_str(gamma.shape()) + ", beta " + shape_str(beta.shape()));
  if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  std::vector<double> xhat(x.numel()), rstd(rows), out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = x.data().data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[r * n + j] = (row[j] - mu) * rstd[r];
      out[r * n + j] = gamma.data()[j] * xhat[r * n + j] + beta.data()[j];
    }
  }
  return make_result(
      "layer_norm", x.shape(), std::move(out), {&x, &gamma, &beta},
      [n, rows, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
        auto& nx = *self.inputs[0];
        auto& ng = *self.inputs[1];
        auto& nb = *self.inputs[2];
        const double inv_n = 1.0 / static_cast<double>(n);
        std::vector<double> dxhat(n);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* g = self.grad.data() + r * n;
          const double* xh = xhat.data() + r * n;
          if (ng.requires_grad) {
            auto& dg = ng.ensure_grad();
            for (std::size_t j = 0; j < n; ++j) dg[j] += g[j] * xh[j];
          }
          if (nb.requires_grad) {
            auto& db = nb.ensure_grad();
            for (std::size_t j = 0; j < n; ++j) db[j] += g[j];
          }
          if (nx.requires_grad) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              dxhat[j] = g[j] * ng.data[j];
              s1 += dxhat[j];
              s2 += dxhat[j] * xh[j];
            }
            auto& dx = nx.ensure_grad();
            for (std::size_t j = 0; j < n; ++j)
              dx[r * n + j] += rstd[r] * (dxhat[j] - inv_n * s1 - xh[j] * inv_n * s2);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_result("sum", Shape{}, {total}, {&x}, [](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  const double inv = 1.0 / static_cast<double>(x.numel());
  return make_result("mean", Shape{}, {total * inv}, {&x}, [inv](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (auto& v : g) v += self.grad[0] * inv;
  });
}

Tensor dot(const Tensor& a, const Tensor& b) {
  require_same_shape("dot", a, b);
  double total = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) total += a.data()[i] * b.data()[i];
  return make_result("dot", Shape{}, {total}, {&a, &b}, [](Node& self) {
    auto& na = *self.inputs[0];
    auto& nb = *self.inputs[1];
    const double g0 = self.grad[0];
    if (na.requires_grad) {
      auto& g = na.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0 * nb.data[i];
    }
    if (nb.requires_grad) {
      auto& g = nb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0 * na.data[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Layout

Tensor reshape(const Tensor& x, Shape shape) {
  check_shape(shape);
  if (shape_numel(shape) != x.numel())
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result("reshape", std::move(shape), std::move(out), {&x}, [](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
  const std::size_t r = x.rank();
  if (perm.size() != r)
    throw DimensionError("permute: " + std::to_string(perm.size()) + " axes for " +
                         shape_str(x.shape()));
  std::vector<bool> seen(r, false);
  for (auto p : perm) {
    if (p >= r || seen[p]) throw DimensionError("permute: invalid axis order");
    seen[p] = true;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = x.dim(perm[i]);
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * x.dim(i);
  // Map each output flat index to its source flat index.
  std::vector<std::size_t> src(x.numel());
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t flat = 0; flat < src.size(); ++flat) {
    std::size_t s = 0;
    for (std::size_t i = 0; i < r; ++i) s += idx[i] * in_strides[perm[i]];
    src[flat] = s;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[src[i]];
  return make_result("permute", std::move(out_shape), std::move(out), {&x},
                     [src = std::move(src)](Node& self) {
                       auto& g = self.inputs[0]->ensure_grad();
                       for (std::size_t i = 0; i < src.size(); ++i) g[src[i]] += self.grad[i];
                     });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("transpose: expects rank 2, got " + shape_str(x.shape()));
  return permute(x, {1, 0});
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  Shape shape = parts.front().shape();
  if (shape.empty()) throw DimensionError("concat: rank-0 inputs");
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.rank() != shape.size() || !std::equal(shape.begin() + 1, shape.end(), p.shape().begin() + 1))
      throw DimensionError("concat: shapes " + shape_str(shape) + " and " +
                           shape_str(p.shape()) + " disagree");
    rows += p.dim(0);
  }
  shape[0] = rows;
  std::vector<double> out;
  out.reserve(shape_numel(shape));
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(out.size());
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  return make_result("concat", std::move(shape), std::move(out), parts,
                     [offsets = std::move(offsets)](Node& self) {
                       for (std::size_t s = 0; s < self.inputs.size(); ++s) {
                         auto& in = *self.inputs[s];
                         if (!in.requires_grad) continue;
                         auto& g = in.ensure_grad();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[offsets[s] + i];
                       }
                     });
}

Tensor slice(const Tensor& x, std::size_t begin, std::size_t end) {
  if (x.rank() == 0 || begin >= end || end > x.dim(0))
    throw DimensionError("slice: rows [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for " + shape_str(x.shape()));
  const std::size_t row = x.numel() / x.dim(0);
  Shape shape = x.shape();
  shape[0] = end - begin;
  std::vector<double> out(x.data().begin() + begin * row, x.data().begin() + end * row);
  const std::size_t offset = begin * row;
  return make_result("slice", std::move(shape), std::move(out), {&x}, [offset](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[offset + i] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Loss and regularization

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 3)
    throw DimensionError("cross_entropy: logits must be [B,C,P], got " + shape_str(logits.shape()));
  const std::size_t batch = logits.dim(0), classes = logits.dim(1), positions = logits.dim(2);
  if (labels.size() != batch * positions)
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                         shape_str(logits.shape()));
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= classes)
      throw ContractError("cross_entropy: label " + std::to_string(l) + " out of range");
  const double* z = logits.data().data();
  std::vector<double> probs(logits.numel());
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t p = 0; p < positions; ++p) {
      const std::size_t base = b * classes * positions + p;
      double mx = z[base];
      for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, z[base + c * positions]);
      double s = 0.0;
      for (std::size_t c = 0; c < classes; ++c) s += std::exp(z[base + c * positions] - mx);
      const double lse = mx + std::log(s);
      for (std::size_t c = 0; c < classes; ++c)
        probs[base + c * positions] = std::exp(z[base + c * positions] - lse);
      const int label = labels[b * positions + p];
      total += lse - z[base + static_cast<std::size_t>(label) * positions];
    }
  }
  const double inv = 1.0 / static_cast<double>(batch * positions);
  std::vector<int> lab(labels.begin(), labels.end());
  return make_result("cross_entropy", Shape{}, {total * inv}, {&logits},
                     [probs = std::move(probs), lab = std::move(lab), classes, positions,
                      inv](Node& self) {
                       auto& g = self.inputs[0]->ensure_grad();
                       const double scale_g = self.grad[0] * inv;
                       for (std::size_t i = 0; i < probs.size(); ++i) g[i] += scale_g * probs[i];
                       for (std::size_t q = 0; q < lab.size(); ++q) {
                         const std::size_t b = q / positions, p = q % positions;
                         g[b * classes * positions + static_cast<std::size_t>(lab[q]) * positions + p] -= scale_g;
                       }
                     });
}

Tensor dropout(const Tensor& x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ContractError("dropout: rate must be in [0, 1)");
  if (rate == 0.0) return x;
  const double keep = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = rng.uniform() < rate ? 0.0 : keep;
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * mask[i];
  return make_result("dropout", x.shape(), std::move(out), {&x},
                     [mask = std::move(mask)](Node& self) {
                       auto& g = self.inputs[0]->ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
                     });
}

}  // namespace televit
