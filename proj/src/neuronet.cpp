#include "neuronet/neuronet.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

#include "neuronet/checkpoint.hpp"

namespace neuronet {

LossBundle NeuroNetModel::SslOutput::losses() const {
  return {rec1.item(), rec2.item(), contra.item(), total.item()};
}

NeuroNetModel::NeuroNetModel(const NeuroNetConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.frame_net.embed_dim = cfg_.encoder.dim;
  cfg_.validate();
  nn::Rng rng(init_seed);
  frame_net_ = FrameNetwork(ps_, "frame_net.", cfg_.frame_net, rng);
  encoder_ = Encoder(ps_, "encoder.", cfg_.embed_dim(), cfg_.encoder, rng);
  decoder_ = Decoder(ps_, "decoder.", cfg_.encoder.dim, cfg_.embed_dim(), cfg_.decoder, rng);
  projection_ = ProjectionHead(ps_, "projection.", cfg_.encoder.dim, cfg_.projection, rng);
}

std::size_t NeuroNetModel::frames_per_epoch() const { return frame_count(kEpochLen, cfg_.frame); }

ag::Var NeuroNetModel::frame_embeddings(const Tensor& epochs, bool training) {
  const std::size_t n = epochs.dim(0);
  const std::size_t m = frame_count(epochs.dim(1), cfg_.frame);
  const ag::Var z = frame_net_(ag::constant(frame_batch(epochs, cfg_.frame)), training);
  return ag::reshape(z, {n, m, cfg_.embed_dim()});
}

NeuroNetModel::SslOutput NeuroNetModel::ssl_forward(const Tensor& epochs, const std::vector<std::uint64_t>& sample_ids,
                                                    std::uint64_t seed, const SslDebug* debug) {
  const std::size_t n = epochs.dim(0);
  if (n < 2) throw ConfigError("an SSL step needs at least 2 epochs");
  if (sample_ids.size() != n) throw ShapeError("one sample id per epoch required");
  SslOutput out;
  out.z = frame_embeddings(epochs, true);
  const std::size_t m = out.z.shape()[1];
  for (std::size_t i = 0; i < n; ++i) {
    out.plans1.push_back(sample_mask(m, cfg_.mask_ratio, derive_seed(seed, sample_ids[i], 1)));
    out.plans2.push_back(sample_mask(m, cfg_.mask_ratio, derive_seed(seed, sample_ids[i], 2)));
  }
  auto path = [&](const std::vector<MaskPlan>& plans, ag::Var& cls, ag::Var& r) {
    const ag::Var h = encoder_(out.z, plans);
    auto [c, rest] = split_class_token(h);
    cls = c;
    r = (debug && debug->perfect_reconstruction) ? ag::detach(out.z) : decoder_(rest, plans);
    return reconstruction_loss(out.z, r, plans, cfg_.stopgrad_targets);
  };
  out.rec1 = path(out.plans1, out.cls1, out.r1);
  out.rec2 = path(out.plans2, out.cls2, out.r2);
  out.contra = nt_xent(projection_(out.cls1), projection_(out.cls2), cfg_.temperature);
  out.total = ag::add(ag::scale(ag::add(out.rec1, out.rec2), 0.5), ag::scale(out.contra, cfg_.alpha));
  ag::check_finite(out.total, "l_total");
  return out;
}

Tensor NeuroNetModel::embed(const Tensor& epochs) {
  ag::NoGradGuard guard;
  const ag::Var z = frame_embeddings(epochs, false);
  const std::vector<MaskPlan> plans(z.shape()[0], full_plan(z.shape()[1]));
  return encoder_.class_token_from(encoder_.tokens_before(z, plans, 0), 0).value();
}

Tensor NeuroNetModel::last_block_inputs(const Tensor& epochs) {
  ag::NoGradGuard guard;
  const ag::Var z = frame_embeddings(epochs, false);
  const std::vector<MaskPlan> plans(z.shape()[0], full_plan(z.shape()[1]));
  const std::size_t depth = encoder_.depth();
  return encoder_.tokens_before(z, plans, depth ? depth - 1 : 0).value();
}

void NeuroNetModel::save(const std::filesystem::path& stem, const nlohmann::json& meta) const {
  save_checkpoint(ps_, stem, meta);
}

void NeuroNetModel::load(const std::filesystem::path& stem) { load_checkpoint(ps_, stem); }

Tensor gather_epochs(const std::vector<StagedRecording>& recs,
                     const std::vector<std::pair<std::size_t, std::size_t>>& items) {
  if (items.empty()) throw ShapeError("gather_epochs: empty selection");
  const std::size_t len = recs.at(items.front().first).epoch_len;
  Tensor out({items.size(), len});
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto ep = recs.at(items[i].first).epoch(items[i].second);
    std::copy(ep.begin(), ep.end(), out.data.begin() + static_cast<std::ptrdiff_t>(i * len));
  }
  return out;
}

std::vector<double> embed_epoch(NeuroNetModel& model, std::span<const float> epoch) {
  Tensor t({1, epoch.size()});
  std::copy(epoch.begin(), epoch.end(), t.data.begin());
  return model.embed(t).data;
}

LossBundle ssl_step(NeuroNetModel& model, nn::AdamW& opt, const Tensor& epochs,
                    const std::vector<std::uint64_t>& sample_ids, std::uint64_t seed) {
  auto out = model.ssl_forward(epochs, sample_ids, seed);
  const LossBundle lb = out.losses();
  ag::backward(out.total);
  opt.step();
  return lb;
}

std::vector<LossBundle> pretrain(NeuroNetModel& model, const std::vector<StagedRecording>& recs,
                                 const PretrainOptions& opts) {
  const auto& tc = model.config().train;
  std::vector<std::pair<std::size_t, std::size_t>> pool;
  for (std::size_t r = 0; r < recs.size(); ++r)
    for (std::size_t e = 0; e < recs[r].num_epochs(); ++e) pool.emplace_back(r, e);
  if (pool.size() < 2) throw ConfigError("pretraining needs at least 2 epochs of data");

  nn::AdamW opt(model.params(), {tc.lr, tc.beta1, tc.beta2, 1e-8, tc.weight_decay});
  std::vector<LossBundle> history;
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    nn::Rng rng(derive_seed(opts.seed, epoch, 0x5eed));
    std::shuffle(order.begin(), order.end(), rng);
    LossBundle last;
    for (std::size_t start = 0; start + 1 < order.size(); start += tc.batch_size) {
      const std::size_t end = std::min(order.size(), start + tc.batch_size);
      if (end - start < 2) break;
      std::vector<std::pair<std::size_t, std::size_t>> items;
      std::vector<std::uint64_t> ids;
      for (std::size_t i = start; i < end; ++i) {
        items.push_back(pool[order[i]]);
        ids.push_back(static_cast<std::uint64_t>(epoch) * pool.size() + order[i]);
      }
      last = ssl_step(model, opt, gather_epochs(recs, items), ids, opts.seed);
      history.push_back(last);
      ++step;
      if (opts.log) {
        const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        nlohmann::json j = {{"step", step},          {"epoch", epoch},          {"l_rec1", last.l_rec1},
                            {"l_rec2", last.l_rec2}, {"l_contra", last.l_contra}, {"l_total", last.l_total},
                            {"lr", tc.lr},           {"wall_ms", ms}};
        *opts.log << j.dump() << '\n' << std::flush;
      }
      if (opts.max_steps && step >= opts.max_steps) return history;
    }
    if (opts.on_epoch) opts.on_epoch(epoch, last);
  }
  return history;
}

}  // namespace neuronet
