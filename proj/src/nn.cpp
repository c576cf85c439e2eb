#include "neuronet/nn.hpp"

#include <cmath>

namespace neuronet::nn {

ag::Var ParamSet::add_param(const std::string& name, Tensor init) {
  if (contains(name)) throw ConfigError("duplicate parameter name " + name);
  entries_.push_back({name, ag::parameter(std::move(init)), false});
  return entries_.back().var;
}

ag::Var ParamSet::add_buffer(const std::string& name, Tensor init) {
  if (contains(name)) throw ConfigError("duplicate buffer name " + name);
  entries_.push_back({name, ag::constant(std::move(init)), true});
  return entries_.back().var;
}

ag::Var ParamSet::get(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.var;
  throw ConfigError("no parameter named " + name);
}

bool ParamSet::contains(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return true;
  return false;
}

std::vector<ag::Var> ParamSet::trainable() const {
  std::vector<ag::Var> out;
  for (const auto& e : entries_)
    if (!e.buffer && e.var.requires_grad()) out.push_back(e.var);
  return out;
}

void ParamSet::set_trainable(const std::string& prefix, bool on) {
  for (auto& e : entries_)
    if (!e.buffer && e.name.rfind(prefix, 0) == 0) {
      e.var.node()->requires_grad = on;
      if (!on) e.var.node()->grad = Tensor();
    }
}

void ParamSet::zero_grad() {
  for (auto& e : entries_) e.var.node()->grad = Tensor();
}

std::size_t ParamSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_)
    if (!e.buffer) n += e.var.size();
  return n;
}

std::vector<std::vector<double>> ParamSet::snapshot() const {
  std::vector<std::vector<double>> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.var.value().data);
  return out;
}

Tensor uniform_init(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.data) v = dist(rng);
  return t;
}

Linear::Linear(ParamSet& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
               bool with_bias) {
  weight = ps.add_param(name + ".weight", uniform_init({in, out}, in, rng));
  if (with_bias) bias = ps.add_param(name + ".bias", uniform_init({out}, in, rng));
}

LayerNorm::LayerNorm(ParamSet& ps, const std::string& name, std::size_t dim) {
  gamma = ps.add_param(name + ".gamma", Tensor({dim}, 1.0));
  beta = ps.add_param(name + ".beta", Tensor({dim}, 0.0));
}

Conv1d::Conv1d(ParamSet& ps, const std::string& name, std::size_t in, std::size_t out,
               std::size_t kernel, std::size_t stride_, std::size_t pad_, Rng& rng)
    : stride(stride_), pad(pad_) {
  weight = ps.add_param(name + ".weight", uniform_init({out, in, kernel}, in * kernel, rng));
  bias = ps.add_param(name + ".bias", uniform_init({out}, in * kernel, rng));
}

BatchNorm1d::BatchNorm1d(ParamSet& ps, const std::string& name, std::size_t channels) {
  gamma = ps.add_param(name + ".gamma", Tensor({channels}, 1.0));
  beta = ps.add_param(name + ".beta", Tensor({channels}, 0.0));
  running_mean = ps.add_buffer(name + ".running_mean", Tensor({channels}, 0.0));
  running_var = ps.add_buffer(name + ".running_var", Tensor({channels}, 1.0));
}

ag::Var BatchNorm1d::operator()(const ag::Var& x, bool training) {
  return ag::batch_norm(x, gamma, beta,
                        {running_mean.mutable_value(), running_var.mutable_value(), momentum, eps},
                        training);
}

TransformerBlock::TransformerBlock(ParamSet& ps, const std::string& name, std::size_t dim,
                                   std::size_t heads_, std::size_t mlp_ratio, Rng& rng)
    : heads(heads_) {
  if (heads == 0 || dim % heads != 0)
    throw ConfigError(name + ": dim " + std::to_string(dim) + " not divisible by heads " +
                      std::to_string(heads));
  ln1 = LayerNorm(ps, name + ".ln1", dim);
  q = Linear(ps, name + ".attn.q", dim, dim, rng);
  k = Linear(ps, name + ".attn.k", dim, dim, rng);
  v = Linear(ps, name + ".attn.v", dim, dim, rng);
  o = Linear(ps, name + ".attn.o", dim, dim, rng);
  ln2 = LayerNorm(ps, name + ".ln2", dim);
  fc1 = Linear(ps, name + ".mlp.fc1", dim, dim * mlp_ratio, rng);
  fc2 = Linear(ps, name + ".mlp.fc2", dim * mlp_ratio, dim, rng);
}

ag::Var TransformerBlock::operator()(const ag::Var& x, bool causal) const {
  const ag::Var h = ln1(x);
  const ag::Var a = o(ag::attention(q(h), k(h), v(h), heads, causal));
  const ag::Var x1 = ag::add(x, a);
  const ag::Var m = fc2(ag::gelu(fc1(ln2(x1))));
  return ag::add(x1, m);
}

ag::Var TransformerBlock::first_row(const ag::Var& x) const {
  if (x.value().rank() != 3) throw ShapeError("first_row expects [B, S, D]");
  const std::size_t b = x.shape()[0], s = x.shape()[1], d = x.shape()[2];
  std::vector<std::size_t> rows(b);
  for (std::size_t i = 0; i < b; ++i) rows[i] = i * s;
  const ag::Var h = ln1(x);
  const ag::Var h0 = ag::reshape(ag::gather_rows(h, rows), {b, 1, d});
  const ag::Var a = o(ag::attention(q(h0), k(h), v(h), heads, false));
  const ag::Var x0 = ag::reshape(ag::gather_rows(x, rows), {b, 1, d});
  const ag::Var x1 = ag::add(x0, a);
  return ag::add(x1, fc2(ag::gelu(fc1(ln2(x1)))));
}

std::vector<double> sinusoidal_position(std::size_t pos, std::size_t dim) {
  std::vector<double> pe(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    const double pair = static_cast<double>(i / 2 * 2);
    const double freq = std::pow(10000.0, -pair / static_cast<double>(dim));
    pe[i] = (i % 2 == 0) ? std::sin(static_cast<double>(pos) * freq)
                         : std::cos(static_cast<double>(pos) * freq);
  }
  return pe;
}

AdamW::AdamW(const ParamSet& params, AdamWOptions opts) : opts_(opts) {
  vars_ = params.trainable();
  for (const auto& v : vars_) {
    m_.emplace_back(v.size(), 0.0);
    v_.emplace_back(v.size(), 0.0);
  }
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    auto& var = vars_[i];
    if (!var.requires_grad()) continue;  // frozen after construction
    auto& p = var.mutable_value().data;
    const bool has_grad = var.has_grad();
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double g = has_grad ? var.grad()[j] : 0.0;
      p[j] -= opts_.lr * opts_.weight_decay * p[j];
      m_[i][j] = opts_.beta1 * m_[i][j] + (1 - opts_.beta1) * g;
      v_[i][j] = opts_.beta2 * v_[i][j] + (1 - opts_.beta2) * g * g;
      const double mhat = m_[i][j] / bc1;
      const double vhat = v_[i][j] / bc2;
      p[j] -= opts_.lr * mhat / (std::sqrt(vhat) + opts_.eps);
    }
    var.zero_grad();
  }
}

}  // namespace neuronet::nn
