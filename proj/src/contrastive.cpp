#include "neuronet/contrastive.hpp"

#include <cmath>
#include <limits>

#include "neuronet/kernels.hpp"

namespace neuronet {

ProjectionHead::ProjectionHead(nn::ParamSet& ps, const std::string& prefix, std::size_t in_dim,
                               const ProjectionConfig& cfg, nn::Rng& rng) {
  fc1_ = nn::Linear(ps, prefix + "fc1", in_dim, cfg.hidden, rng);
  fc2_ = nn::Linear(ps, prefix + "fc2", cfg.hidden, cfg.out, rng);
}

ag::Var ProjectionHead::operator()(const ag::Var& h) const {
  ag::check_finite(h, "projection.input");
  return ag::l2_normalize_rows(fc2_(ag::elu(fc1_(h))));
}

ag::Var nt_xent_interleaved(const ag::Var& c, double tau) {
  if (!(tau > 0.0)) throw ConfigError("temperature must be positive");
  if (c.value().rank() != 2 || c.shape()[0] % 2 != 0) throw ShapeError("nt_xent expects [2N, D]");
  const std::size_t rows = c.shape()[0], d = c.shape()[1];
  if (rows < 4) throw ConfigError("nt_xent needs N >= 2 samples so that negatives exist");

  const Tensor& cv = c.value();
  // logits s = C C^T / tau; row softmax over k != i
  Tensor s({rows, rows});
  kernels::omp::gemm_nt(rows, d, rows, cv.data, cv.data, s.data, false);
  Tensor p({rows, rows});
  double total = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < rows; ++k) {
      s.at(i, k) /= tau;
      if (k != i) mx = std::max(mx, s.at(i, k));
    }
    double z = 0.0;
    for (std::size_t k = 0; k < rows; ++k)
      if (k != i) z += std::exp(s.at(i, k) - mx);
    const double lse = mx + std::log(z);
    for (std::size_t k = 0; k < rows; ++k) p.at(i, k) = k == i ? 0.0 : std::exp(s.at(i, k) - lse);
    total += lse - s.at(i, i ^ 1);
  }
  Tensor out({1}, total / static_cast<double>(rows));
  return ag::make_op(std::move(out), {c}, [p = std::move(p), rows, d, tau](ag::Node& node) {
    const double g = node.grad[0] / static_cast<double>(rows);
    // G_ik = dL/ds_ik
    Tensor gs({rows, rows});
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t k = 0; k < rows; ++k) gs.at(i, k) = g * (p.at(i, k) - (k == (i ^ 1) ? 1.0 : 0.0));
    // s = C C^T / tau  =>  dC = (G + G^T) C / tau
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t k = i; k < rows; ++k) {
        const double v = (gs.at(i, k) + gs.at(k, i)) / tau;
        gs.at(i, k) = v;
        gs.at(k, i) = v;
      }
    auto& parent = *node.parents[0];
    if (!parent.requires_grad) return;
    kernels::omp::gemm_nn(rows, rows, d, gs.data, parent.value.data, parent.grad_buffer().data, true);
  });
}

ag::Var nt_xent(const ag::Var& c1, const ag::Var& c2, double tau) {
  if (c1.shape() != c2.shape() || c1.value().rank() != 2) throw ShapeError("nt_xent views must both be [N, D]");
  const std::size_t n = c1.shape()[0];
  if (n < 2) throw ConfigError("nt_xent needs N >= 2 samples so that negatives exist");
  std::vector<std::size_t> order(2 * n);
  for (std::size_t k = 0; k < n; ++k) {
    order[2 * k] = k;
    order[2 * k + 1] = n + k;
  }
  return nt_xent_interleaved(ag::gather_rows(ag::concat_rows(c1, c2), order), tau);
}

}  // namespace neuronet
