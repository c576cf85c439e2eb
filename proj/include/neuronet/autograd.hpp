#pragma once

// Small reverse-mode automatic differentiation layer.
//
// A Var is a handle to a graph node holding a value tensor, an optional
// gradient and the closure that pushes the node's gradient into its parents.
// Graphs are built eagerly and released when the last Var referencing them
// goes out of scope. Gradients accumulate into parameters until zero_grad().

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "neuronet/tensor.hpp"

namespace neuronet::ag {

struct Node {
  Tensor value;
  Tensor grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& grad_buffer();  // allocates zeros on first use
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape; }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_ && !node_->grad.data.empty(); }
  const Tensor& grad() const { return node_->grad; }
  Tensor& grad_buffer() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad = Tensor(); }
  // Freezes (false) or unfreezes a leaf.
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  double item() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

// Leaf that never receives gradients.
Var constant(Tensor t);
// Leaf that accumulates gradients.
Var parameter(Tensor t);
// Cuts the graph: same value, no history.
Var detach(const Var& v);

// Builds an interior node. `fn` receives the node itself and must accumulate
// node.grad into the grad_buffer() of each parent that requires_grad. The
// history is dropped when no parent needs gradients or grad mode is off.
Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn);

// Seeds d(loss)/d(loss) = 1 and runs the tape in reverse topological order.
void backward(const Var& loss);

// Disables graph construction while alive (inference, frozen feature caches).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};
bool grad_enabled();

// ---- elementwise ---------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
// a[..., D] + b[D]
Var add_row_vector(const Var& a, const Var& b);

enum class Unary { Elu, Gelu, Silu, Softplus, Sigmoid, Tanh, Exp, Neg };
Var unary(const Var& a, Unary op);
inline Var elu(const Var& a) { return unary(a, Unary::Elu); }
inline Var gelu(const Var& a) { return unary(a, Unary::Gelu); }
inline Var silu(const Var& a) { return unary(a, Unary::Silu); }
inline Var softplus(const Var& a) { return unary(a, Unary::Softplus); }
inline Var sigmoid(const Var& a) { return unary(a, Unary::Sigmoid); }
inline Var tanh(const Var& a) { return unary(a, Unary::Tanh); }
inline Var exp(const Var& a) { return unary(a, Unary::Exp); }
inline Var neg(const Var& a) { return unary(a, Unary::Neg); }

// ---- shape ---------------------------------------------------------------
Var reshape(const Var& a, Shape shape);
// Rows of a viewed as [rows, cols]; output [idx.size(), cols].
Var gather_rows(const Var& a, std::vector<std::size_t> idx);
// Row concatenation of two [*, D] tensors -> [Ra + Rb, D].
Var concat_rows(const Var& a, const Var& b);
// Column concatenation of [R, Di] tensors -> [R, sum Di].
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(const Var& a, std::size_t start, std::size_t len);

// ---- dense ---------------------------------------------------------------
// x[..., in] W[in, out] + b[out]; b may be empty.
Var linear(const Var& x, const Var& w, const Var& b);

// ---- reductions / losses -------------------------------------------------
Var sum(const Var& a);
Var mean(const Var& a);
// mean over all elements of (pred - target)^2
Var mse(const Var& pred, const Var& target);
// Rows scaled to unit L2 norm. Throws NumericalError on a zero row.
Var l2_normalize_rows(const Var& a);
// Mean (optionally weighted) softmax cross-entropy of logits[R, C].
Var cross_entropy(const Var& logits, const std::vector<int>& labels,
                  const std::vector<double>& class_weights = {});

// ---- normalisation -------------------------------------------------------
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

struct BatchNormStats {
  Tensor& running_mean;
  Tensor& running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};
// x[B, C, L]; statistics over B and L per channel. Training mode normalises
// with batch statistics and updates the running ones (only while grad mode is
// on); eval mode uses the running statistics.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormStats stats,
               bool training);

// ---- convolution / pooling -----------------------------------------------
// x[B, Cin, L], w[Cout, Cin, K], b[Cout] (may be empty)
Var conv1d(const Var& x, const Var& w, const Var& b, std::size_t stride, std::size_t pad);
// Non-overlapping max pooling over the last axis; trailing remainder dropped.
Var max_pool1d(const Var& x, std::size_t width);
// x[B, C, L] -> [B, C]
Var global_avg_pool(const Var& x);

// ---- sequence ops --------------------------------------------------------
// q[B, Sq, D], k and v [B, Sk, D] -> [B, Sq, D]; scaled dot-product attention
// per head. Causal masking requires Sq == Sk.
Var attention(const Var& q, const Var& k, const Var& v, std::size_t heads, bool causal = false);
// x[B, L, C], w[C, K], b[C]: y[t] = b + sum_j w[j] x[t - K + 1 + j] (zero history)
Var causal_depthwise_conv(const Var& x, const Var& w, const Var& b);

// Checks for NaN/Inf; throws NumericalError naming `where`.
void check_finite(const Var& v, const std::string& where);

}  // namespace neuronet::ag
