#include "neuronet/tcm.hpp"

#include <cmath>
#include <random>

#include "neuronet/stages.hpp"

namespace neuronet {

// ---- selective scan ------------------------------------------------------------

namespace {

struct ScanDims {
  std::size_t b, l, di, ds;
};

ScanDims scan_dims(const Tensor& x, const Tensor& delta, const Tensor& a, const Tensor& bs, const Tensor& cs,
                   const Tensor& d) {
  if (x.rank() != 3) throw ShapeError("selective_scan: x must be [B, L, Di]");
  ScanDims s{x.dim(0), x.dim(1), x.dim(2), a.rank() == 2 ? a.dim(1) : 0};
  if (delta.shape != x.shape) throw ShapeError("selective_scan: delta shape " + shape_str(delta.shape));
  if (a.rank() != 2 || a.dim(0) != s.di) throw ShapeError("selective_scan: A shape " + shape_str(a.shape));
  const Shape bc{s.b, s.l, s.ds};
  if (bs.shape != bc || cs.shape != bc) throw ShapeError("selective_scan: B/C must be [B, L, Ds]");
  if (d.size() != s.di) throw ShapeError("selective_scan: D shape " + shape_str(d.shape));
  return s;
}

[[noreturn]] void scan_blowup(std::size_t t, std::size_t channel) {
  throw NumericalError("selective_scan at t=" + std::to_string(t) + ", channel=" + std::to_string(channel));
}

}  // namespace

ag::Var selective_scan(const ag::Var& x, const ag::Var& delta, const ag::Var& a, const ag::Var& bs,
                       const ag::Var& cs, const ag::Var& d) {
  const ScanDims s = scan_dims(x.value(), delta.value(), a.value(), bs.value(), cs.value(), d.value());
  const Tensor& X = x.value();
  const Tensor& DT = delta.value();
  const Tensor& A = a.value();
  const Tensor& Bv = bs.value();
  const Tensor& Cv = cs.value();
  const Tensor& Dv = d.value();

  Tensor y({s.b, s.l, s.di});
  // states after each step, kept for the backward pass: [B, L, Di, Ds]
  Tensor hs({s.b, s.l, s.di, s.ds});
  for (std::size_t b = 0; b < s.b; ++b) {
    for (std::size_t i = 0; i < s.di; ++i) {
      std::vector<double> h(s.ds, 0.0);
      for (std::size_t t = 0; t < s.l; ++t) {
        const std::size_t xi = (b * s.l + t) * s.di + i;
        const std::size_t bt = (b * s.l + t) * s.ds;
        const double dt = DT[xi], xv = X[xi];
        double acc = Dv[i] * xv;
        double* hrow = hs.ptr() + xi * s.ds;
        for (std::size_t n = 0; n < s.ds; ++n) {
          h[n] = std::exp(dt * A[i * s.ds + n]) * h[n] + dt * Bv[bt + n] * xv;
          acc += Cv[bt + n] * h[n];
          hrow[n] = h[n];
        }
        if (!std::isfinite(acc)) scan_blowup(t, i);
        y[xi] = acc;
      }
    }
  }

  return ag::make_op(std::move(y), {x, delta, a, bs, cs, d}, [s, hs = std::move(hs)](ag::Node& self) {
    const Tensor& X = self.parents[0]->value;
    const Tensor& DT = self.parents[1]->value;
    const Tensor& A = self.parents[2]->value;
    const Tensor& Bv = self.parents[3]->value;
    const Tensor& Cv = self.parents[4]->value;
    const Tensor& Dv = self.parents[5]->value;
    const Tensor& GY = self.grad;
    auto need = [&](int k) { return self.parents[static_cast<std::size_t>(k)]->requires_grad; };
    Tensor gx(X.shape), gdt(DT.shape), gb(Bv.shape), gc(Cv.shape);
    // A and D gradients are shared by all batch rows: one slab per row, summed
    // in order afterwards so the result does not depend on thread count.
    Tensor ga_rows({s.b, s.di, s.ds}), gd_rows({s.b, s.di});
#pragma omp parallel for schedule(static) if (s.b > 1)
    for (std::int64_t bb = 0; bb < static_cast<std::int64_t>(s.b); ++bb) {
      const auto b = static_cast<std::size_t>(bb);
      std::vector<double> dh(s.ds), da(s.ds);
      for (std::size_t i = 0; i < s.di; ++i) {
        std::fill(dh.begin(), dh.end(), 0.0);
        for (std::size_t t = s.l; t-- > 0;) {
          const std::size_t xi = (b * s.l + t) * s.di + i;
          const std::size_t bt = (b * s.l + t) * s.ds;
          const double g = GY[xi], dt = DT[xi], xv = X[xi];
          const double* h = hs.ptr() + xi * s.ds;
          const double* hprev = t > 0 ? hs.ptr() + ((b * s.l + t - 1) * s.di + i) * s.ds : nullptr;
          gd_rows[b * s.di + i] += g * xv;
          double gxv = g * Dv[i];
          double gdtv = 0.0;
          for (std::size_t n = 0; n < s.ds; ++n) {
            gc[bt + n] += g * h[n];
            dh[n] += g * Cv[bt + n];
            const double an = A[i * s.ds + n];
            const double decay = std::exp(dt * an);
            const double hp = hprev ? hprev[n] : 0.0;
            // h = decay * hp + dt * B * x
            const double gdecay = dh[n] * hp * decay;
            gdtv += gdecay * an + dh[n] * Bv[bt + n] * xv;
            ga_rows[(b * s.di + i) * s.ds + n] += gdecay * dt;
            gb[bt + n] += dh[n] * dt * xv;
            gxv += dh[n] * dt * Bv[bt + n];
            da[n] = decay;
          }
          gx[xi] += gxv;
          gdt[xi] += gdtv;
          for (std::size_t n = 0; n < s.ds; ++n) dh[n] *= da[n];
        }
      }
    }
    auto add_to = [](ag::Node& p, const Tensor& g) {
      auto& buf = p.grad_buffer();
      for (std::size_t j = 0; j < g.size(); ++j) buf[j] += g[j];
    };
    if (need(0)) add_to(*self.parents[0], gx);
    if (need(1)) add_to(*self.parents[1], gdt);
    if (need(2)) {
      auto& buf = self.parents[2]->grad_buffer();
      for (std::size_t b = 0; b < s.b; ++b)
        for (std::size_t j = 0; j < s.di * s.ds; ++j) buf[j] += ga_rows[b * s.di * s.ds + j];
    }
    if (need(3)) add_to(*self.parents[3], gb);
    if (need(4)) add_to(*self.parents[4], gc);
    if (need(5)) {
      auto& buf = self.parents[5]->grad_buffer();
      for (std::size_t b = 0; b < s.b; ++b)
        for (std::size_t i = 0; i < s.di; ++i) buf[i] += gd_rows[b * s.di + i];
    }
  });
}

Tensor selective_scan_chunked(const Tensor& x, const Tensor& delta, const Tensor& a, const Tensor& bs,
                              const Tensor& cs, const Tensor& d, std::size_t chunk) {
  const ScanDims s = scan_dims(x, delta, a, bs, cs, d);
  if (chunk == 0) throw ConfigError("chunk length must be positive");
  Tensor y({s.b, s.l, s.di});
  std::vector<double> carry(s.ds), lam(chunk * s.ds);
  for (std::size_t b = 0; b < s.b; ++b) {
    for (std::size_t i = 0; i < s.di; ++i) {
      std::fill(carry.begin(), carry.end(), 0.0);
      for (std::size_t c0 = 0; c0 < s.l; c0 += chunk) {
        const std::size_t len = std::min(chunk, s.l - c0);
        // cumulative log-decay lam[t][n] = sum_{u <= t} delta_u * A[n] within the chunk
        for (std::size_t t = 0; t < len; ++t) {
          const double dt = delta[(b * s.l + c0 + t) * s.di + i];
          for (std::size_t n = 0; n < s.ds; ++n)
            lam[t * s.ds + n] = (t ? lam[(t - 1) * s.ds + n] : 0.0) + dt * a[i * s.ds + n];
        }
        for (std::size_t t = 0; t < len; ++t) {
          const std::size_t xi = (b * s.l + c0 + t) * s.di + i;
          double out = d[i] * x[xi];
          for (std::size_t n = 0; n < s.ds; ++n) {
            double h = std::exp(lam[t * s.ds + n]) * carry[n];
            for (std::size_t u = 0; u <= t; ++u) {
              const std::size_t xu = (b * s.l + c0 + u) * s.di + i;
              const double bu = bs[(b * s.l + c0 + u) * s.ds + n];
              h += std::exp(lam[t * s.ds + n] - lam[u * s.ds + n]) * delta[xu] * bu * x[xu];
            }
            out += cs[(b * s.l + c0 + t) * s.ds + n] * h;
            if (t + 1 == len) carry[n] = h;
          }
          y[xi] = out;
        }
      }
    }
  }
  return y;
}

// ---- Mamba block -------------------------------------------------------------

MambaBlock::MambaBlock(nn::ParamSet& ps, const std::string& prefix, std::size_t d_model, const MambaConfig& cfg,
                       nn::Rng& rng)
    : cfg_(cfg) {
  if (cfg.d_state == 0 || cfg.d_conv == 0 || cfg.expand == 0) throw ConfigError("mamba sizes must be positive");
  d_inner_ = cfg.expand * d_model;
  dt_rank_ = (d_model + 15) / 16;
  ln_ = nn::LayerNorm(ps, prefix + "ln", d_model);
  in_proj_ = nn::Linear(ps, prefix + "in_proj", d_model, 2 * d_inner_, rng, false);
  conv_w_ = ps.add_param(prefix + "conv.weight", nn::uniform_init({d_inner_, cfg.d_conv}, cfg.d_conv, rng));
  conv_b_ = ps.add_param(prefix + "conv.bias", nn::uniform_init({d_inner_}, cfg.d_conv, rng));
  x_proj_ = nn::Linear(ps, prefix + "x_proj", d_inner_, dt_rank_ + 2 * cfg.d_state, rng, false);
  dt_proj_ = nn::Linear(ps, prefix + "dt_proj", dt_rank_, d_inner_, rng);
  {
    // softplus(bias) spread log-uniformly over [1e-3, 1e-1]
    std::uniform_real_distribution<double> u(std::log(1e-3), std::log(1e-1));
    auto& bias = dt_proj_.bias.mutable_value();
    for (auto& v : bias.data) {
      const double dt = std::exp(u(rng));
      v = dt + std::log(-std::expm1(-dt));
    }
  }
  Tensor alog({d_inner_, cfg.d_state});
  for (std::size_t i = 0; i < d_inner_; ++i)
    for (std::size_t n = 0; n < cfg.d_state; ++n) alog.at(i, n) = std::log(static_cast<double>(n + 1));
  a_log_ = ps.add_param(prefix + "A_log", std::move(alog));
  d_ = ps.add_param(prefix + "D", Tensor({d_inner_}, 1.0));
  out_proj_ = nn::Linear(ps, prefix + "out_proj", d_inner_, d_model, rng, false);
}

ag::Var MambaBlock::operator()(const ag::Var& x) const {
  if (x.value().rank() != 3) throw ShapeError("mamba block expects [B, L, d_model]");
  const ag::Var xz = in_proj_(ln_(x));
  ag::Var xb = ag::slice_cols(xz, 0, d_inner_);
  const ag::Var z = ag::slice_cols(xz, d_inner_, d_inner_);
  xb = ag::silu(ag::causal_depthwise_conv(xb, conv_w_, conv_b_));
  const ag::Var xdbl = x_proj_(xb);
  const ag::Var dt = ag::softplus(dt_proj_(ag::slice_cols(xdbl, 0, dt_rank_)));
  const ag::Var b = ag::slice_cols(xdbl, dt_rank_, cfg_.d_state);
  const ag::Var c = ag::slice_cols(xdbl, dt_rank_ + cfg_.d_state, cfg_.d_state);
  const ag::Var a = ag::neg(ag::exp(a_log_));
  ag::Var y = selective_scan(xb, dt, a, b, c, d_);
  y = ag::mul(y, ag::silu(z));
  return ag::add(x, out_proj_(y));
}

// ---- temporal context models --------------------------------------------------

void TcmConfig::validate(std::size_t d_model) const {
  if (context_length == 0) throw ConfigError("context_length must be >= 1");
  if (model != "mamba" && model != "lstm" && model != "attention" && model != "lstm_attention")
    throw ConfigError("unknown tcm.model '" + model + "'");
  if (output_mode != "seq2seq" && output_mode != "many2one")
    throw ConfigError("tcm.output_mode must be seq2seq or many2one");
  if ((model == "attention" || model == "lstm_attention") && (heads == 0 || d_model % heads != 0))
    throw ConfigError("tcm heads must divide d_model");
}

namespace {

Tensor positions_for(std::size_t b, std::size_t l, std::size_t d) {
  Tensor t({b, l, d});
  for (std::size_t p = 0; p < l; ++p) {
    const auto pe = nn::sinusoidal_position(p, d);
    for (std::size_t i = 0; i < b; ++i) std::copy(pe.begin(), pe.end(), t.ptr() + (i * l + p) * d);
  }
  return t;
}

class Lstm {
 public:
  Lstm() = default;
  Lstm(nn::ParamSet& ps, const std::string& prefix, std::size_t in, std::size_t hidden, nn::Rng& rng)
      : hidden_(hidden) {
    wx_ = nn::Linear(ps, prefix + "wx", in, 4 * hidden, rng);
    wh_ = nn::Linear(ps, prefix + "wh", hidden, 4 * hidden, rng, false);
    auto& bias = wx_.bias.mutable_value();
    for (std::size_t j = hidden; j < 2 * hidden; ++j) bias[j] = 1.0;  // forget gate
  }

  // [B, L, in] -> [B, L, hidden]
  ag::Var operator()(const ag::Var& seq) const {
    const std::size_t b = seq.shape()[0], l = seq.shape()[1];
    const ag::Var gx_all = wx_(seq);  // [B, L, 4H]
    ag::Var h = ag::constant(Tensor({b, hidden_}));
    ag::Var c = ag::constant(Tensor({b, hidden_}));
    std::vector<ag::Var> outs;
    std::vector<std::size_t> rows(b);
    for (std::size_t t = 0; t < l; ++t) {
      for (std::size_t i = 0; i < b; ++i) rows[i] = i * l + t;
      const ag::Var g = ag::add(ag::gather_rows(gx_all, rows), wh_(h));
      const ag::Var ig = ag::sigmoid(ag::slice_cols(g, 0, hidden_));
      const ag::Var fg = ag::sigmoid(ag::slice_cols(g, hidden_, hidden_));
      const ag::Var cg = ag::tanh(ag::slice_cols(g, 2 * hidden_, hidden_));
      const ag::Var og = ag::sigmoid(ag::slice_cols(g, 3 * hidden_, hidden_));
      c = ag::add(ag::mul(fg, c), ag::mul(ig, cg));
      h = ag::mul(og, ag::tanh(c));
      outs.push_back(h);
    }
    return ag::reshape(ag::concat_cols(outs), {b, l, hidden_});
  }

 private:
  std::size_t hidden_ = 0;
  nn::Linear wx_, wh_;
};

class Head {
 public:
  Head() = default;
  Head(nn::ParamSet& ps, const std::string& prefix, std::size_t d, nn::Rng& rng)
      : ln_(ps, prefix + "ln", d), fc_(ps, prefix + "fc", d, kNumStages, rng) {}
  ag::Var operator()(const ag::Var& h) const { return fc_(ln_(h)); }

 private:
  nn::LayerNorm ln_;
  nn::Linear fc_;
};

class MambaTcm : public TemporalContextModel {
 public:
  MambaTcm(nn::ParamSet& ps, const std::string& prefix, std::size_t d, const TcmConfig& cfg, nn::Rng& rng) {
    for (std::size_t i = 0; i < cfg.blocks; ++i)
      blocks_.emplace_back(ps, prefix + "mamba" + std::to_string(i) + ".", d, cfg.mamba, rng);
    head_ = Head(ps, prefix + "head.", d, rng);
  }
  ag::Var forward(const ag::Var& seq) const override {
    ag::Var h = seq;
    for (const auto& b : blocks_) h = b(h);
    return head_(h);
  }

 private:
  std::vector<MambaBlock> blocks_;
  Head head_;
};

class LstmTcm : public TemporalContextModel {
 public:
  LstmTcm(nn::ParamSet& ps, const std::string& prefix, std::size_t d, nn::Rng& rng)
      : lstm_(ps, prefix + "lstm.", d, d, rng), head_(ps, prefix + "head.", d, rng) {}
  ag::Var forward(const ag::Var& seq) const override { return head_(lstm_(seq)); }

 private:
  Lstm lstm_;
  Head head_;
};

class AttentionTcm : public TemporalContextModel {
 public:
  AttentionTcm(nn::ParamSet& ps, const std::string& prefix, std::size_t d, const TcmConfig& cfg, nn::Rng& rng,
               bool with_lstm)
      : with_lstm_(with_lstm) {
    if (with_lstm) lstm_ = Lstm(ps, prefix + "lstm.", d, d, rng);
    const std::size_t n = with_lstm ? 1 : cfg.blocks;
    for (std::size_t i = 0; i < n; ++i)
      blocks_.emplace_back(ps, prefix + "attn" + std::to_string(i) + ".", d, cfg.heads, 4, rng);
    head_ = Head(ps, prefix + "head.", d, rng);
  }
  ag::Var forward(const ag::Var& seq) const override {
    ag::Var h = with_lstm_ ? lstm_(seq) : seq;
    h = ag::add(h, ag::constant(positions_for(h.shape()[0], h.shape()[1], h.shape()[2])));
    for (const auto& b : blocks_) h = b(h);
    return head_(h);
  }

 private:
  bool with_lstm_;
  Lstm lstm_;
  std::vector<nn::TransformerBlock> blocks_;
  Head head_;
};

}  // namespace

std::unique_ptr<TemporalContextModel> make_tcm(nn::ParamSet& ps, const std::string& prefix, std::size_t d_model,
                                               const TcmConfig& cfg, nn::Rng& rng) {
  cfg.validate(d_model);
  if (cfg.model == "mamba") return std::make_unique<MambaTcm>(ps, prefix, d_model, cfg, rng);
  if (cfg.model == "lstm") return std::make_unique<LstmTcm>(ps, prefix, d_model, rng);
  if (cfg.model == "attention") return std::make_unique<AttentionTcm>(ps, prefix, d_model, cfg, rng, false);
  return std::make_unique<AttentionTcm>(ps, prefix, d_model, cfg, rng, true);
}

ag::Var tcm_classify(const TemporalContextModel& tcm, const TcmConfig& cfg, const ag::Var& cls_tokens) {
  if (cls_tokens.value().rank() != 2 || cls_tokens.shape()[0] != cfg.context_length)
    throw ShapeError("tcm_classify expects [" + std::to_string(cfg.context_length) + ", d_model], got " +
                     shape_str(cls_tokens.shape()));
  const std::size_t l = cls_tokens.shape()[0], d = cls_tokens.shape()[1];
  return ag::reshape(tcm.forward(ag::reshape(cls_tokens, {1, l, d})), {l, kNumStages});
}

// ---- windowing -------------------------------------------------------------

namespace {

Window padded_window(std::size_t first, std::size_t n_epochs, std::size_t context) {
  const std::size_t real = n_epochs - first;
  Window w;
  w.keep_from = context - real;
  w.epochs.assign(w.keep_from, first);
  for (std::size_t e = first; e < n_epochs; ++e) w.epochs.push_back(e);
  return w;
}

Window full_window(std::size_t start, std::size_t context, std::size_t keep_from = 0) {
  Window w;
  w.keep_from = keep_from;
  for (std::size_t j = 0; j < context; ++j) w.epochs.push_back(start + j);
  return w;
}

}  // namespace

std::vector<Window> inference_windows(std::size_t n_epochs, std::size_t context, TailPolicy tail) {
  if (context == 0) throw ConfigError("context length must be >= 1");
  std::vector<Window> out;
  std::size_t start = 0;
  for (; start + context <= n_epochs; start += context) out.push_back(full_window(start, context));
  if (start < n_epochs) {
    const std::size_t rest = n_epochs - start;
    if (tail == TailPolicy::Backfill && n_epochs >= context)
      out.push_back(full_window(n_epochs - context, context, context - rest));
    else
      out.push_back(padded_window(start, n_epochs, context));
  }
  return out;
}

std::vector<Window> training_windows(std::size_t n_epochs, std::size_t context, std::size_t stride) {
  if (context == 0 || stride == 0) throw ConfigError("context length and stride must be >= 1");
  std::vector<Window> out;
  if (n_epochs == 0) return out;
  if (n_epochs < context) {
    out.push_back(padded_window(0, n_epochs, context));
    return out;
  }
  std::size_t start = 0;
  for (; start + context <= n_epochs; start += stride) out.push_back(full_window(start, context));
  if (out.back().epochs.front() + context != n_epochs) out.push_back(full_window(n_epochs - context, context));
  return out;
}

std::vector<Window> trailing_windows(std::size_t n_epochs, std::size_t context) {
  if (context == 0) throw ConfigError("context length must be >= 1");
  std::vector<Window> out;
  for (std::size_t e = 0; e < n_epochs; ++e) {
    Window w;
    w.keep_from = context - 1;
    for (std::size_t j = 0; j < context; ++j) {
      const std::size_t back = context - 1 - j;
      w.epochs.push_back(e >= back ? e - back : 0);
    }
    out.push_back(std::move(w));
  }
  return out;
}

TailPolicy parse_tail_policy(const std::string& s) {
  if (s == "backfill") return TailPolicy::Backfill;
  if (s == "repeat_first") return TailPolicy::RepeatFirst;
  throw ConfigError("unknown tail policy '" + s + "' (backfill | repeat_first)");
}

}  // namespace neuronet
