// SPDX-License-Identifier: Apache-2.0
//
// Dense f64 tensors with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle to a graph node. Ops on tensors that require
// gradients record their inputs and a backward rule; backward() on a scalar
// root walks the recorded graph in reverse topological order and accumulates
// gradients into every leaf that requires them. Graph recording is disabled
// inside a NoGradGuard scope, which is what inference paths use.
//
// Broadcasting is limited to a leading batch dimension (matmul) and row-wise
// bias addition. All data is row-major.
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace televit {

class Rng;

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient flows in
  bool requires_grad = false;
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad();
};

}  // namespace detail

class Tensor {
 public:
  /// Rank-0 zero.
  Tensor();
  /// Zero-filled tensor.
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor identity(std::size_t n);
  static Tensor full(Shape shape, double value);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  /// Mutable view of the values. Intended for leaves (parameters, inputs).
  std::span<double> mutable_data() { return node_->data; }
  double item() const;
  double at(std::size_t flat_index) const { return node_->data.at(flat_index); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value) { node_->requires_grad = value; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad();
  void zero_grad() { node_->grad.clear(); }

  bool is_leaf() const { return !node_->backward; }
  std::string_view op() const { return node_->op; }

  /// Copy of the values with no graph history.
  Tensor detach() const;
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// ---------------------------------------------------------------------------
// Graph control

/// True unless a NoGradGuard is alive on this thread.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

struct GraphRecord {
  std::string_view op;
  std::vector<std::size_t> inputs;  // indices into ComputationGraph::nodes
  const detail::Node* node = nullptr;
};

/// The recorded graph below a root, topologically ordered (inputs first).
struct ComputationGraph {
  std::vector<GraphRecord> nodes;
};

ComputationGraph trace(const Tensor& root);

/// Accumulates d(root)/d(leaf) into every reachable leaf that requires grad.
/// The root must be rank 0.
void backward(const Tensor& root);

// ---------------------------------------------------------------------------
// Ops

/// [m,k]x[k,n] -> [m,n], or [B,m,k]x[k,n] -> [B,m,n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// [B,m,k]x[B,k,n] -> [B,m,n].
Tensor bmm(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// x[..., n] + bias[n], broadcast over all leading positions.
Tensor add_bias(const Tensor& x, const Tensor& bias);

/// Tanh-form GELU: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
Tensor gelu(const Tensor& x);
Tensor softmax(const Tensor& x, std::size_t axis);
/// Normalizes over the last dimension, then applies gamma * xhat + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor dot(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm);
/// Swap of a rank-2 tensor's axes.
Tensor transpose(const Tensor& x);
/// Joins along axis 0; all other dims must agree.
Tensor concat(const std::vector<Tensor>& parts);
/// Rows [begin, end) along axis 0.
Tensor slice(const Tensor& x, std::size_t begin, std::size_t end);

/// Mean over (batch, position) of -log softmax(logits)[label], classes on axis 1.
/// logits: [B, C, P]; labels: B*P class ids laid out batch-major.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Inverted dropout. Identity when rate == 0.
Tensor dropout(const Tensor& x, double rate, Rng& rng);

}  // namespace televit
