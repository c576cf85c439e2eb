#include "neuronet/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <sstream>
#include <unordered_set>

#include "neuronet/kernels.hpp"

namespace neuronet {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace neuronet

namespace neuronet::ag {

namespace k = neuronet::kernels::omp;

namespace {

thread_local bool g_grad_enabled = true;

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

Tensor& pgrad(Node& self, std::size_t i) { return self.parents[i]->grad_buffer(); }
bool pneeds(const Node& self, std::size_t i) { return self.parents[i]->requires_grad; }
const Tensor& pval(const Node& self, std::size_t i) { return self.parents[i]->value; }

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.data.empty()) grad = Tensor(value.shape, 0.0);
  return grad;
}

double Var::item() const {
  if (size() != 1) throw ShapeError("item() on non-scalar " + shape_str(shape()));
  return value()[0];
}

Var constant(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  return Var(std::move(n));
}

Var parameter(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  n->requires_grad = true;
  return Var(std::move(n));
}

Var detach(const Var& v) { return constant(v.value()); }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (!g_grad_enabled) return Var(std::move(n));
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return Var(std::move(n));
  n->requires_grad = true;
  n->parents.reserve(parents.size());
  for (const auto& p : parents) n->parents.push_back(p.node_ptr());
  n->backward_fn = std::move(fn);
  return Var(std::move(n));
}

void backward(const Var& loss) {
  if (!loss.requires_grad()) return;
  // iterative post-order DFS
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  auto& g = loss.node()->grad_buffer();
  std::fill(g.data.begin(), g.data.end(), 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.data.empty()) n->backward_fn(*n);
  }
  // interior gradients are not needed after the sweep
  for (Node* n : order)
    if (n->backward_fn) n->grad = Tensor();
}

void check_finite(const Var& v, const std::string& where) {
  if (!v.value().all_finite()) throw NumericalError(where);
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (!pneeds(self, p)) continue;
      auto& g = pgrad(self, p);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    if (pneeds(self, 0)) {
      auto& g = pgrad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pneeds(self, 1)) {
      auto& g = pgrad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    const auto& av = pval(self, 0);
    const auto& bv = pval(self, 1);
    if (pneeds(self, 0)) {
      auto& g = pgrad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (pneeds(self, 1)) {
      auto& g = pgrad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  for (auto& v : out.data) v *= s;
  return make_op(std::move(out), {a}, [s](Node& self) {
    auto& g = pgrad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

Var add_row_vector(const Var& a, const Var& b) {
  const std::size_t d = a.value().cols();
  if (b.size() != d) throw ShapeError("add_row_vector: width mismatch");
  Tensor out = a.value();
  const std::size_t rows = out.rows();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] += b.value()[c];
  return make_op(std::move(out), {a, b}, [rows, d](Node& self) {
    if (pneeds(self, 0)) {
      auto& g = pgrad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pneeds(self, 1)) {
      auto& g = pgrad(self, 1);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < d; ++c) g[c] += self.grad[r * d + c];
    }
  });
}

namespace {

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double unary_forward(Unary op, double x) {
  switch (op) {
    case Unary::Elu: return x > 0 ? x : std::expm1(x);
    case Unary::Gelu: return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
    case Unary::Silu: return x * sigmoid_scalar(x);
    case Unary::Softplus: return x > 30.0 ? x : std::log1p(std::exp(x));
    case Unary::Sigmoid: return sigmoid_scalar(x);
    case Unary::Tanh: return std::tanh(x);
    case Unary::Exp: return std::exp(x);
    case Unary::Neg: return -x;
  }
  return 0.0;
}

double unary_derivative(Unary op, double x, double y) {
  switch (op) {
    case Unary::Elu: return x > 0 ? 1.0 : y + 1.0;
    case Unary::Gelu: {
      const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
      const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
      return cdf + x * pdf;
    }
    case Unary::Silu: {
      const double s = sigmoid_scalar(x);
      return s * (1.0 + x * (1.0 - s));
    }
    case Unary::Softplus: return sigmoid_scalar(x);
    case Unary::Sigmoid: return y * (1.0 - y);
    case Unary::Tanh: return 1.0 - y * y;
    case Unary::Exp: return y;
    case Unary::Neg: return -1.0;
  }
  return 0.0;
}

}  // namespace

Var unary(const Var& a, Unary op) {
  Tensor out(a.shape());
  const auto& x = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = unary_forward(op, x[i]);
  return make_op(std::move(out), {a}, [op](Node& self) {
    const auto& x = pval(self, 0);
    auto& g = pgrad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] += self.grad[i] * unary_derivative(op, x[i], self.value[i]);
  });
}

// ---------------------------------------------------------------------------
// shape
// ---------------------------------------------------------------------------

Var reshape(const Var& a, Shape shape) {
  if (shape_numel(shape) != a.size())
    throw ShapeError("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
  Tensor out(std::move(shape), a.value().data);
  return make_op(std::move(out), {a}, [](Node& self) {
    auto& g = pgrad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var gather_rows(const Var& a, std::vector<std::size_t> idx) {
  const std::size_t d = a.value().cols();
  const std::size_t rows = a.value().rows();
  Tensor out({idx.size(), d});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= rows) throw ShapeError("gather_rows: index out of range");
    std::copy_n(a.value().ptr() + idx[r] * d, d, out.ptr() + r * d);
  }
  return make_op(std::move(out), {a}, [idx = std::move(idx), d](Node& self) {
    auto& g = pgrad(self, 0);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      double* dst = g.ptr() + idx[r] * d;
      const double* src = self.grad.ptr() + r * d;
      for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
    }
  });
}

Var concat_rows(const Var& a, const Var& b) {
  const std::size_t d = a.value().cols();
  if (b.value().cols() != d) throw ShapeError("concat_rows: width mismatch");
  const std::size_t ra = a.value().rows();
  const std::size_t rb = b.value().rows();
  Tensor out({ra + rb, d});
  std::copy(a.value().data.begin(), a.value().data.end(), out.data.begin());
  std::copy(b.value().data.begin(), b.value().data.end(), out.data.begin() + ra * d);
  return make_op(std::move(out), {a, b}, [ra, rb, d](Node& self) {
    if (pneeds(self, 0)) {
      auto& g = pgrad(self, 0);
      for (std::size_t i = 0; i < ra * d; ++i) g[i] += self.grad[i];
    }
    if (pneeds(self, 1)) {
      auto& g = pgrad(self, 1);
      for (std::size_t i = 0; i < rb * d; ++i) g[i] += self.grad[ra * d + i];
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts[0].value().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.value().rows() != rows) throw ShapeError("concat_cols: row mismatch");
    widths.push_back(p.value().cols());
    total += widths.back();
  }
  Tensor out({rows, total});
  std::size_t off = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(parts[i].value().ptr() + r * widths[i], widths[i], out.ptr() + r * total + off);
    off += widths[i];
  }
  return make_op(std::move(out), parts, [widths, rows, total](Node& self) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      if (pneeds(self, i)) {
        auto& g = pgrad(self, i);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < widths[i]; ++c)
            g[r * widths[i] + c] += self.grad[r * total + off + c];
      }
      off += widths[i];
    }
  });
}

Var slice_cols(const Var& a, std::size_t start, std::size_t len) {
  const std::size_t d = a.value().cols();
  const std::size_t rows = a.value().rows();
  if (start + len > d) throw ShapeError("slice_cols: out of range");
  Shape shape = a.shape();
  shape.back() = len;
  Tensor out(shape);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(a.value().ptr() + r * d + start, len, out.ptr() + r * len);
  return make_op(std::move(out), {a}, [rows, d, start, len](Node& self) {
    auto& g = pgrad(self, 0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < len; ++c) g[r * d + start + c] += self.grad[r * len + c];
  });
}

// ---------------------------------------------------------------------------
// dense
// ---------------------------------------------------------------------------

Var linear(const Var& x, const Var& w, const Var& b) {
  const std::size_t in = x.value().cols();
  const std::size_t rows = x.value().rows();
  if (w.value().rank() != 2 || w.value().dim(0) != in)
    throw ShapeError("linear: input width " + std::to_string(in) + " vs weight " +
                     shape_str(w.shape()));
  const std::size_t out_dim = w.value().dim(1);
  const bool has_bias = static_cast<bool>(b);
  if (has_bias && b.size() != out_dim) throw ShapeError("linear: bias width mismatch");
  Shape shape = x.shape();
  shape.back() = out_dim;
  Tensor out(shape);
  k::gemm_nn(rows, in, out_dim, x.value().data, w.value().data, out.data, false);
  if (has_bias)
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < out_dim; ++c) out[r * out_dim + c] += b.value()[c];
  std::vector<Var> parents{x, w};
  if (has_bias) parents.push_back(b);
  return make_op(std::move(out), std::move(parents), [rows, in, out_dim, has_bias](Node& self) {
    const auto& xv = pval(self, 0);
    const auto& wv = pval(self, 1);
    if (pneeds(self, 0)) k::gemm_nt(rows, out_dim, in, self.grad.data, wv.data, pgrad(self, 0).data, true);
    if (pneeds(self, 1)) k::gemm_tn(in, rows, out_dim, xv.data, self.grad.data, pgrad(self, 1).data, true);
    if (has_bias && pneeds(self, 2)) {
      auto& gb = pgrad(self, 2);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < out_dim; ++c) gb[c] += self.grad[r * out_dim + c];
    }
  });
}

// ---------------------------------------------------------------------------
// reductions / losses
// ---------------------------------------------------------------------------

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data) s += v;
  return make_op(Tensor({1}, s), {a}, [](Node& self) {
    auto& g = pgrad(self, 0);
    for (auto& v : g.data) v += self.grad[0];
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.size());
  double s = 0.0;
  for (double v : a.value().data) s += v;
  return make_op(Tensor({1}, s / n), {a}, [n](Node& self) {
    auto& g = pgrad(self, 0);
    for (auto& v : g.data) v += self.grad[0] / n;
  });
}

Var mse(const Var& pred, const Var& target) {
  require_same_shape(pred, target, "mse");
  const double n = static_cast<double>(pred.size());
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.value()[i] - target.value()[i];
    s += d * d;
  }
  return make_op(Tensor({1}, s / n), {pred, target}, [n](Node& self) {
    const auto& p = pval(self, 0);
    const auto& t = pval(self, 1);
    const double g0 = self.grad[0] * 2.0 / n;
    if (pneeds(self, 0)) {
      auto& g = pgrad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0 * (p[i] - t[i]);
    }
    if (pneeds(self, 1)) {
      auto& g = pgrad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= g0 * (p[i] - t[i]);
    }
  });
}

Var l2_normalize_rows(const Var& a) {
  const std::size_t d = a.value().cols();
  const std::size_t rows = a.value().rows();
  Tensor out(a.shape());
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += a.value()[r * d + c] * a.value()[r * d + c];
    norms[r] = std::sqrt(s);
    if (!(norms[r] > 0.0) || !std::isfinite(norms[r]))
      throw NumericalError("l2_normalize_rows (zero or non-finite row " + std::to_string(r) + ")");
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] = a.value()[r * d + c] / norms[r];
  }
  return make_op(std::move(out), {a}, [norms = std::move(norms), rows, d](Node& self) {
    auto& g = pgrad(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += self.value[r * d + c] * self.grad[r * d + c];
      for (std::size_t c = 0; c < d; ++c)
        g[r * d + c] += (self.grad[r * d + c] - self.value[r * d + c] * dot) / norms[r];
    }
  });
}

Var cross_entropy(const Var& logits, const std::vector<int>& labels,
                  const std::vector<double>& class_weights) {
  const std::size_t c = logits.value().cols();
  const std::size_t rows = logits.value().rows();
  if (labels.size() != rows) throw ShapeError("cross_entropy: label count mismatch");
  Tensor probs({rows, c});
  std::vector<double> w(rows, 1.0);
  double wsum = 0.0;
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* z = logits.value().ptr() + r * c;
    const double mx = *std::max_element(z, z + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(z[j] - mx);
    const auto y = static_cast<std::size_t>(labels[r]);
    if (labels[r] < 0 || y >= c) throw ConfigError("cross_entropy: label out of range");
    for (std::size_t j = 0; j < c; ++j) probs[r * c + j] = std::exp(z[j] - mx) / s;
    if (!class_weights.empty()) w[r] = class_weights.at(y);
    wsum += w[r];
    loss += w[r] * -(z[y] - mx - std::log(s));
  }
  loss /= wsum;
  return make_op(Tensor({1}, loss), {logits},
                 [probs = std::move(probs), w = std::move(w), wsum, labels, c, rows](Node& self) {
                   auto& g = pgrad(self, 0);
                   const double g0 = self.grad[0] / wsum;
                   for (std::size_t r = 0; r < rows; ++r) {
                     for (std::size_t j = 0; j < c; ++j) {
                       const double onehot = static_cast<int>(j) == labels[r] ? 1.0 : 0.0;
                       g[r * c + j] += g0 * w[r] * (probs[r * c + j] - onehot);
                     }
                   }
                 });
}

// ---------------------------------------------------------------------------
// normalisation
// ---------------------------------------------------------------------------

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const std::size_t d = x.value().cols();
  const std::size_t rows = x.value().rows();
  if (gamma.size() != d || beta.size() != d) throw ShapeError("layer_norm: affine width mismatch");
  Tensor out(x.shape());
  Tensor xhat(x.shape());
  std::vector<double> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.value().ptr() + r * d;
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += xr[c];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      xhat[r * d + c] = (xr[c] - mu) * rstd[r];
      out[r * d + c] = xhat[r * d + c] * gamma.value()[c] + beta.value()[c];
    }
  }
  return make_op(std::move(out), {x, gamma, beta},
                 [xhat = std::move(xhat), rstd = std::move(rstd), rows, d](Node& self) {
                   const auto& gam = pval(self, 1);
                   if (pneeds(self, 1) || pneeds(self, 2)) {
                     auto& gg = pgrad(self, 1);
                     auto& gb = pgrad(self, 2);
                     for (std::size_t r = 0; r < rows; ++r)
                       for (std::size_t c = 0; c < d; ++c) {
                         gg[c] += self.grad[r * d + c] * xhat[r * d + c];
                         gb[c] += self.grad[r * d + c];
                       }
                   }
                   if (!pneeds(self, 0)) return;
                   auto& gx = pgrad(self, 0);
                   const double inv_d = 1.0 / static_cast<double>(d);
                   for (std::size_t r = 0; r < rows; ++r) {
                     double s1 = 0.0, s2 = 0.0;
                     for (std::size_t c = 0; c < d; ++c) {
                       const double gh = self.grad[r * d + c] * gam[c];
                       s1 += gh;
                       s2 += gh * xhat[r * d + c];
                     }
                     for (std::size_t c = 0; c < d; ++c) {
                       const double gh = self.grad[r * d + c] * gam[c];
                       gx[r * d + c] += rstd[r] * (gh - inv_d * s1 - xhat[r * d + c] * inv_d * s2);
                     }
                   }
                 });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormStats stats,
               bool training) {
  if (x.value().rank() != 3) throw ShapeError("batch_norm expects [B, C, L]");
  const std::size_t B = x.value().dim(0), C = x.value().dim(1), L = x.value().dim(2);
  if (gamma.size() != C || beta.size() != C) throw ShapeError("batch_norm: affine width mismatch");
  if (stats.running_mean.size() != C) {
    stats.running_mean = Tensor({C}, 0.0);
    stats.running_var = Tensor({C}, 1.0);
  }
  const double n = static_cast<double>(B * L);
  std::vector<double> mu(C), rstd(C);
  const auto& xv = x.value();
  for (std::size_t c = 0; c < C; ++c) {
    if (training) {
      double s = 0.0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < L; ++t) s += xv[(b * C + c) * L + t];
      mu[c] = s / n;
      double v = 0.0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < L; ++t) {
          const double dlt = xv[(b * C + c) * L + t] - mu[c];
          v += dlt * dlt;
        }
      v /= n;
      rstd[c] = 1.0 / std::sqrt(v + stats.eps);
      if (grad_enabled()) {
        const double unbiased = n > 1 ? v * n / (n - 1) : v;
        stats.running_mean[c] = (1 - stats.momentum) * stats.running_mean[c] + stats.momentum * mu[c];
        stats.running_var[c] = (1 - stats.momentum) * stats.running_var[c] + stats.momentum * unbiased;
      }
    } else {
      mu[c] = stats.running_mean[c];
      rstd[c] = 1.0 / std::sqrt(stats.running_var[c] + stats.eps);
    }
  }
  Tensor out(x.shape());
  Tensor xhat(x.shape());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < L; ++t) {
        const std::size_t i = (b * C + c) * L + t;
        xhat[i] = (xv[i] - mu[c]) * rstd[c];
        out[i] = xhat[i] * gamma.value()[c] + beta.value()[c];
      }
  return make_op(
      std::move(out), {x, gamma, beta},
      [xhat = std::move(xhat), rstd = std::move(rstd), B, C, L, n, training](Node& self) {
        const auto& gam = pval(self, 1);
        std::vector<double> sg(C, 0.0), sgx(C, 0.0);
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t t = 0; t < L; ++t) {
              const std::size_t i = (b * C + c) * L + t;
              sg[c] += self.grad[i];
              sgx[c] += self.grad[i] * xhat[i];
            }
        if (pneeds(self, 1)) {
          auto& gg = pgrad(self, 1);
          for (std::size_t c = 0; c < C; ++c) gg[c] += sgx[c];
        }
        if (pneeds(self, 2)) {
          auto& gb = pgrad(self, 2);
          for (std::size_t c = 0; c < C; ++c) gb[c] += sg[c];
        }
        if (!pneeds(self, 0)) return;
        auto& gx = pgrad(self, 0);
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t t = 0; t < L; ++t) {
              const std::size_t i = (b * C + c) * L + t;
              if (training)
                gx[i] += gam[c] * rstd[c] * (self.grad[i] - sg[c] / n - xhat[i] * sgx[c] / n);
              else
                gx[i] += gam[c] * rstd[c] * self.grad[i];
            }
      });
}

// ---------------------------------------------------------------------------
// convolution / pooling
// ---------------------------------------------------------------------------

Var conv1d(const Var& x, const Var& w, const Var& b, std::size_t stride, std::size_t pad) {
  if (x.value().rank() != 3 || w.value().rank() != 3) throw ShapeError("conv1d expects rank-3 input and weight");
  kernels::Conv1dDims d;
  d.batch = x.value().dim(0);
  d.in_ch = x.value().dim(1);
  d.in_len = x.value().dim(2);
  d.out_ch = w.value().dim(0);
  d.kernel = w.value().dim(2);
  d.stride = stride;
  d.pad = pad;
  if (w.value().dim(1) != d.in_ch) throw ShapeError("conv1d: channel mismatch");
  if (d.in_len + 2 * pad < d.kernel) throw ShapeError("conv1d: input shorter than kernel");
  const bool has_bias = static_cast<bool>(b);
  Tensor out({d.batch, d.out_ch, d.out_len()});
  static const std::vector<double> no_bias;
  k::conv1d_forward(d, x.value().data, w.value().data,
                    has_bias ? std::span<const double>(b.value().data) : std::span<const double>(no_bias),
                    out.data);
  std::vector<Var> parents{x, w};
  if (has_bias) parents.push_back(b);
  return make_op(std::move(out), std::move(parents), [d, has_bias](Node& self) {
    if (pneeds(self, 0)) k::conv1d_backward_input(d, self.grad.data, pval(self, 1).data, pgrad(self, 0).data);
    const bool need_w = pneeds(self, 1);
    const bool need_b = has_bias && pneeds(self, 2);
    if (need_w || need_b) {
      Tensor gw_scratch;
      std::span<double> gw;
      if (need_w) {
        gw = pgrad(self, 1).data;
      } else {
        gw_scratch = Tensor(pval(self, 1).shape);
        gw = gw_scratch.data;
      }
      std::span<double> gb;
      if (need_b) gb = pgrad(self, 2).data;
      k::conv1d_backward_weight(d, pval(self, 0).data, self.grad.data, gw, gb);
    }
  });
}

Var max_pool1d(const Var& x, std::size_t width) {
  if (x.value().rank() != 3) throw ShapeError("max_pool1d expects [B, C, L]");
  const std::size_t B = x.value().dim(0), C = x.value().dim(1), L = x.value().dim(2);
  const std::size_t out_len = L / width;
  if (out_len == 0) throw ShapeError("max_pool1d: input shorter than window");
  Tensor out({B, C, out_len});
  std::vector<std::size_t> arg(out.size());
  const auto& xv = x.value();
  for (std::size_t bc = 0; bc < B * C; ++bc)
    for (std::size_t t = 0; t < out_len; ++t) {
      std::size_t best = bc * L + t * width;
      for (std::size_t j = 1; j < width; ++j) {
        const std::size_t i = bc * L + t * width + j;
        if (xv[i] > xv[best]) best = i;
      }
      out[bc * out_len + t] = xv[best];
      arg[bc * out_len + t] = best;
    }
  return make_op(std::move(out), {x}, [arg = std::move(arg)](Node& self) {
    auto& g = pgrad(self, 0);
    for (std::size_t i = 0; i < arg.size(); ++i) g[arg[i]] += self.grad[i];
  });
}

Var global_avg_pool(const Var& x) {
  if (x.value().rank() != 3) throw ShapeError("global_avg_pool expects [B, C, L]");
  const std::size_t B = x.value().dim(0), C = x.value().dim(1), L = x.value().dim(2);
  Tensor out({B, C});
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    double s = 0.0;
    for (std::size_t t = 0; t < L; ++t) s += x.value()[bc * L + t];
    out[bc] = s / static_cast<double>(L);
  }
  return make_op(std::move(out), {x}, [B, C, L](Node& self) {
    auto& g = pgrad(self, 0);
    for (std::size_t bc = 0; bc < B * C; ++bc)
      for (std::size_t t = 0; t < L; ++t) g[bc * L + t] += self.grad[bc] / static_cast<double>(L);
  });
}

// ---------------------------------------------------------------------------
// sequence ops
// ---------------------------------------------------------------------------

Var attention(const Var& q, const Var& kk, const Var& v, std::size_t heads, bool causal) {
  require_same_shape(kk, v, "attention");
  if (q.value().rank() != 3 || kk.value().rank() != 3) throw ShapeError("attention expects [B, S, D]");
  const std::size_t B = q.value().dim(0), Sq = q.value().dim(1), D = q.value().dim(2);
  const std::size_t Sk = kk.value().dim(1);
  if (kk.value().dim(0) != B || kk.value().dim(2) != D)
    throw ShapeError("attention: query " + shape_str(q.shape()) + " vs key " + shape_str(kk.shape()));
  if (causal && Sq != Sk) throw ShapeError("causal attention needs equal query and key lengths");
  if (heads == 0 || D % heads != 0) throw ConfigError("attention: dim not divisible by heads");
  const std::size_t dh = D / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor out({B, Sq, D});
  Tensor probs({B, heads, Sq, Sk});
  const auto& Q = q.value();
  const auto& K = kk.value();
  const auto& V = v.value();
#pragma omp parallel for schedule(static) if (B * heads > 1 && Sq * Sk * dh * B * heads > 65536)
  for (std::int64_t bh = 0; bh < static_cast<std::int64_t>(B * heads); ++bh) {
    const std::size_t b = static_cast<std::size_t>(bh) / heads;
    const std::size_t h = static_cast<std::size_t>(bh) % heads;
    double* P = probs.ptr() + static_cast<std::size_t>(bh) * Sq * Sk;
    for (std::size_t i = 0; i < Sq; ++i) {
      const double* qi = Q.ptr() + (b * Sq + i) * D + h * dh;
      const std::size_t jmax = causal ? i + 1 : Sk;
      double mx = -1e300;
      for (std::size_t j = 0; j < jmax; ++j) {
        const double* kj = K.ptr() + (b * Sk + j) * D + h * dh;
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
        P[i * Sk + j] = s * inv;
        mx = std::max(mx, P[i * Sk + j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < jmax; ++j) {
        P[i * Sk + j] = std::exp(P[i * Sk + j] - mx);
        z += P[i * Sk + j];
      }
      for (std::size_t j = 0; j < Sk; ++j) P[i * Sk + j] = j < jmax ? P[i * Sk + j] / z : 0.0;
      double* oi = out.ptr() + (b * Sq + i) * D + h * dh;
      for (std::size_t j = 0; j < jmax; ++j) {
        const double p = P[i * Sk + j];
        const double* vj = V.ptr() + (b * Sk + j) * D + h * dh;
        for (std::size_t c = 0; c < dh; ++c) oi[c] += p * vj[c];
      }
    }
  }
  return make_op(std::move(out), {q, kk, v}, [probs = std::move(probs), B, Sq, Sk, D, heads, dh, inv](Node& self) {
    const auto& Q = pval(self, 0);
    const auto& K = pval(self, 1);
    const auto& V = pval(self, 2);
    const bool nq = pneeds(self, 0), nk = pneeds(self, 1), nv = pneeds(self, 2);
    Tensor* gq = nq ? &pgrad(self, 0) : nullptr;
    Tensor* gk = nk ? &pgrad(self, 1) : nullptr;
    Tensor* gv = nv ? &pgrad(self, 2) : nullptr;
    const Tensor& GO = self.grad;
#pragma omp parallel for schedule(static) if (B * heads > 1 && Sq * Sk * dh * B * heads > 65536)
    for (std::int64_t bh = 0; bh < static_cast<std::int64_t>(B * heads); ++bh) {
      const std::size_t b = static_cast<std::size_t>(bh) / heads;
      const std::size_t h = static_cast<std::size_t>(bh) % heads;
      const double* P = probs.ptr() + static_cast<std::size_t>(bh) * Sq * Sk;
      std::vector<double> gs(Sk);
      for (std::size_t i = 0; i < Sq; ++i) {
        const double* goi = GO.ptr() + (b * Sq + i) * D + h * dh;
        // dP_ij = <gO_i, V_j>
        double rowdot = 0.0;
        for (std::size_t j = 0; j < Sk; ++j) {
          const double* vj = V.ptr() + (b * Sk + j) * D + h * dh;
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += goi[c] * vj[c];
          gs[j] = s;
          rowdot += s * P[i * Sk + j];
        }
        for (std::size_t j = 0; j < Sk; ++j) {
          const double pij = P[i * Sk + j];
          if (pij == 0.0) continue;
          const double gscore = pij * (gs[j] - rowdot) * inv;
          const double* qi = Q.ptr() + (b * Sq + i) * D + h * dh;
          const double* kj = K.ptr() + (b * Sk + j) * D + h * dh;
          if (gq) {
            double* g = gq->ptr() + (b * Sq + i) * D + h * dh;
            for (std::size_t c = 0; c < dh; ++c) g[c] += gscore * kj[c];
          }
          if (gk) {
            double* g = gk->ptr() + (b * Sk + j) * D + h * dh;
            for (std::size_t c = 0; c < dh; ++c) g[c] += gscore * qi[c];
          }
          if (gv) {
            double* g = gv->ptr() + (b * Sk + j) * D + h * dh;
            for (std::size_t c = 0; c < dh; ++c) g[c] += pij * goi[c];
          }
        }
      }
    }
  });
}

Var causal_depthwise_conv(const Var& x, const Var& w, const Var& b) {
  if (x.value().rank() != 3) throw ShapeError("causal_depthwise_conv expects [B, L, C]");
  const std::size_t B = x.value().dim(0), L = x.value().dim(1), C = x.value().dim(2);
  if (w.value().rank() != 2 || w.value().dim(0) != C) throw ShapeError("causal_depthwise_conv: weight shape");
  const std::size_t K = w.value().dim(1);
  if (b.size() != C) throw ShapeError("causal_depthwise_conv: bias shape");
  Tensor out({B, L, C});
  const auto& xv = x.value();
  const auto& wv = w.value();
  for (std::size_t bi = 0; bi < B; ++bi)
    for (std::size_t t = 0; t < L; ++t)
      for (std::size_t c = 0; c < C; ++c) {
        double s = b.value()[c];
        for (std::size_t j = 0; j < K; ++j) {
          const auto src = static_cast<std::int64_t>(t + j) - static_cast<std::int64_t>(K - 1);
          if (src < 0) continue;
          s += wv[c * K + j] * xv[(bi * L + static_cast<std::size_t>(src)) * C + c];
        }
        out[(bi * L + t) * C + c] = s;
      }
  return make_op(std::move(out), {x, w, b}, [B, L, C, K](Node& self) {
    const auto& xv = pval(self, 0);
    const auto& wv = pval(self, 1);
    Tensor* gx = pneeds(self, 0) ? &pgrad(self, 0) : nullptr;
    Tensor* gw = pneeds(self, 1) ? &pgrad(self, 1) : nullptr;
    Tensor* gb = pneeds(self, 2) ? &pgrad(self, 2) : nullptr;
    for (std::size_t bi = 0; bi < B; ++bi)
      for (std::size_t t = 0; t < L; ++t)
        for (std::size_t c = 0; c < C; ++c) {
          const double g = self.grad[(bi * L + t) * C + c];
          if (gb) (*gb)[c] += g;
          for (std::size_t j = 0; j < K; ++j) {
            const auto src = static_cast<std::int64_t>(t + j) - static_cast<std::int64_t>(K - 1);
            if (src < 0) continue;
            const std::size_t xi = (bi * L + static_cast<std::size_t>(src)) * C + c;
            if (gw) (*gw)[c * K + j] += g * xv[xi];
            if (gx) (*gx)[xi] += g * wv[c * K + j];
          }
        }
  });
}

}  // namespace neuronet::ag
