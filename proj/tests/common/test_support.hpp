#pragma once

// Independent oracles and helpers shared by the unit and acceptance tests.
// Nothing here calls the library code it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "neuronet/autograd.hpp"
#include "neuronet/config.hpp"
#include "neuronet/edf.hpp"
#include "neuronet/metrics.hpp"

namespace testsupport {

using neuronet::Tensor;
namespace ag = neuronet::ag;

inline Tensor random_tensor(neuronet::Shape shape, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data) v = u(rng);
  return t;
}

struct GradCheck {
  double max_rel_err = 0;
  std::string worst;  // "leaf[i]" of the worst element
  std::size_t checked = 0;
};

// Central differences against backward(). Relative error per element is
// |analytic - numeric| / max(|analytic|, |numeric|, floor). At most
// `max_per_leaf` elements of each leaf are probed (0 = all), chosen by `seed`.
inline GradCheck gradcheck(const std::vector<ag::Var>& leaves, const std::function<ag::Var()>& loss_fn,
                           double eps = 1e-6, std::size_t max_per_leaf = 0, std::uint64_t seed = 1,
                           double floor = 1e-6) {
  for (auto leaf : leaves) leaf.zero_grad();
  const ag::Var loss = loss_fn();
  ag::backward(loss);
  std::vector<Tensor> analytic;
  for (const auto& leaf : leaves)
    analytic.push_back(leaf.has_grad() ? leaf.grad() : Tensor(leaf.shape(), 0.0));
  GradCheck out;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    ag::Var leaf = leaves[l];
    std::vector<std::size_t> idx(leaf.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (max_per_leaf && idx.size() > max_per_leaf) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(max_per_leaf);
    }
    for (std::size_t i : idx) {
      double& v = leaf.mutable_value().data[i];
      const double orig = v;
      double lp, lm;
      {
        ag::NoGradGuard g;
        v = orig + eps;
        lp = loss_fn().item();
        v = orig - eps;
        lm = loss_fn().item();
      }
      v = orig;
      const double numeric = (lp - lm) / (2 * eps);
      const double a = analytic[l].data[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++out.checked;
      if (rel > out.max_rel_err) {
        out.max_rel_err = rel;
        out.worst = "leaf" + std::to_string(l) + "[" + std::to_string(i) + "] analytic=" + std::to_string(a) +
                    " numeric=" + std::to_string(numeric);
      }
    }
  }
  for (auto leaf : leaves) leaf.zero_grad();
  return out;
}

// Plain double loop over all ordered pairs: each of the 2N views is the
// anchor once, its partner is the positive, every other view a negative.
inline double nt_xent_naive(const std::vector<std::vector<double>>& v1, const std::vector<std::vector<double>>& v2,
                            double tau) {
  std::vector<std::vector<double>> all;
  for (std::size_t k = 0; k < v1.size(); ++k) {
    all.push_back(v1[k]);
    all.push_back(v2[k]);
  }
  auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      ab += a[i] * b[i];
      aa += a[i] * a[i];
      bb += b[i] * b[i];
    }
    return ab / std::sqrt(aa * bb);
  };
  const std::size_t n2 = all.size();
  double total = 0;
  for (std::size_t i = 0; i < n2; ++i) {
    const std::size_t pos = i ^ 1u;
    double denom = 0;
    for (std::size_t k = 0; k < n2; ++k)
      if (k != i) denom += std::exp(cosine(all[i], all[k]) / tau);
    total += -std::log(std::exp(cosine(all[i], all[pos]) / tau) / denom);
  }
  return total / static_cast<double>(n2);
}

// Step-by-step recurrence of the selective scan. Shapes as in the library:
// x, delta [B, L, Di]; a [Di, Ds]; bs, cs [B, L, Ds]; d [Di].
inline Tensor selective_scan_naive(const Tensor& x, const Tensor& delta, const Tensor& a, const Tensor& bs,
                                   const Tensor& cs, const Tensor& d) {
  const std::size_t B = x.dim(0), L = x.dim(1), Di = x.dim(2), Ds = a.dim(1);
  Tensor y({B, L, Di});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < Di; ++i) {
      std::vector<double> h(Ds, 0.0);
      for (std::size_t t = 0; t < L; ++t) {
        const double dt = delta.data[(b * L + t) * Di + i];
        const double xt = x.data[(b * L + t) * Di + i];
        double acc = 0;
        for (std::size_t n = 0; n < Ds; ++n) {
          h[n] = std::exp(dt * a.data[i * Ds + n]) * h[n] + dt * bs.data[(b * L + t) * Ds + n] * xt;
          acc += cs.data[(b * L + t) * Ds + n] * h[n];
        }
        y.data[(b * L + t) * Di + i] = acc + d.data[i] * xt;
      }
    }
  return y;
}

// Confusion-matrix-first metrics: build the table, then read every number
// off it with the textbook definitions.
struct OracleMetrics {
  double acc = 0, mf1 = 0;
  std::array<double, 5> f1{};
};

inline OracleMetrics metrics_oracle(const std::vector<int>& truth, const std::vector<int>& pred) {
  std::array<std::array<long, 5>, 5> cm{};
  for (std::size_t i = 0; i < truth.size(); ++i) cm[truth[i]][pred[i]]++;
  OracleMetrics m;
  long diag = 0, total = 0;
  for (int c = 0; c < 5; ++c) {
    diag += cm[c][c];
    long tp = cm[c][c], fp = 0, fn = 0;
    for (int o = 0; o < 5; ++o) {
      total += cm[c][o];
      if (o != c) {
        fp += cm[o][c];
        fn += cm[c][o];
      }
    }
    const double precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    m.f1[c] = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    m.mf1 += m.f1[c] / 5.0;
  }
  m.acc = static_cast<double>(diag) / static_cast<double>(total);
  return m;
}

// Power of x in [lo, hi) Hz by direct DFT over the bins in that band.
inline double band_power(const std::vector<double>& x, double fs, double lo, double hi) {
  const std::size_t n = x.size();
  double p = 0;
  for (std::size_t k = 1; k < n / 2; ++k) {
    const double f = static_cast<double>(k) * fs / static_cast<double>(n);
    if (f < lo || f >= hi) continue;
    double re = 0, im = 0;
    for (std::size_t t = 0; t < n; ++t) {
      const double ph = 2 * M_PI * static_cast<double>(k * t % n) / static_cast<double>(n);
      re += x[t] * std::cos(ph);
      im -= x[t] * std::sin(ph);
    }
    p += re * re + im * im;
  }
  return p;
}

// Random but valid EDF/EDF+ header and samples. Field values are chosen so
// that they fit the fixed-width ASCII fields.
struct RandomEdf {
  neuronet::edf::RecordingHeader header;
  std::vector<std::vector<std::int16_t>> digital;
};

inline RandomEdf random_edf(std::mt19937_64& rng) {
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto word = [&](std::size_t max_len) {
    static const char alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789_-";
    std::string w;
    const std::size_t len = static_cast<std::size_t>(pick(1, static_cast<int>(max_len)));
    for (std::size_t i = 0; i < len; ++i) w += alphabet[pick(0, 63)];
    return w;
  };
  RandomEdf r;
  auto& h = r.header;
  h.patient_id = word(40);
  h.recording_id = word(40);
  h.start = {pick(1, 28), pick(1, 12), pick(1985, 2084), pick(0, 23), pick(0, 59), pick(0, 59)};
  h.reserved = pick(0, 1) ? "EDF+C" : "";
  h.num_data_records = pick(1, 6);
  h.record_duration = std::array<double, 4>{1.0, 2.0, 0.5, 30.0}[static_cast<std::size_t>(pick(0, 3))];
  const int ns = pick(1, 4);
  for (int i = 0; i < ns; ++i) {
    neuronet::edf::SignalSpec s;
    s.label = i == 0 ? "EEG Fpz-Cz" : "S" + word(8);
    s.transducer = word(20);
    s.physical_dimension = pick(0, 1) ? "uV" : "mV";
    s.physical_min = -pick(1, 99999) / 10.0;
    s.physical_max = pick(1, 99999) / 10.0;
    s.digital_min = pick(-32768, -1);
    s.digital_max = pick(1, 32767);
    s.prefilter = pick(0, 1) ? "HP:0.5Hz LP:100Hz" : "";
    s.samples_per_record = pick(1, 300);
    h.signals.push_back(s);
    std::vector<std::int16_t> d(static_cast<std::size_t>(h.num_data_records * s.samples_per_record));
    for (auto& v : d) v = static_cast<std::int16_t>(pick(s.digital_min, s.digital_max));
    r.digital.push_back(std::move(d));
  }
  return r;
}

// Smallest model that still exercises every component: 19 frames per epoch,
// 2-channel frame network, one 16-wide encoder block pair.
inline neuronet::NeuroNetConfig tiny_model_config() {
  auto c = neuronet::RunConfig::preset("desk").model;
  c.frame = {300, 150};
  c.frame_net.shared_channels = 2;
  c.frame_net.branch_channels = 2;
  c.frame_net.blocks_per_branch = 1;
  c.encoder = {16, 2, 2, 2};
  c.decoder = {8, 1, 2, 2};
  c.projection = {16, 8};
  c.frame_net.embed_dim = c.encoder.dim;
  c.train.batch_size = 8;
  c.train.epochs = 1;
  return c;
}

// Same tiny model as a config file, with short downstream schedules.
inline std::string tiny_run_config_text() {
  return "preset = desk\n"
         "frame.size = 300\nframe.step = 150\n"
         "frame_net.shared_channels = 2\nframe_net.branch_channels = 2\nframe_net.blocks_per_branch = 1\n"
         "encoder.dim = 16\nencoder.depth = 2\nencoder.heads = 2\nencoder.mlp_ratio = 2\n"
         "decoder.dim = 8\ndecoder.depth = 1\ndecoder.heads = 2\ndecoder.mlp_ratio = 2\n"
         "projection.hidden = 16,8\n"
         "pretrain.epochs = 1\npretrain.batch_size = 8\n"
         "probe.epochs = 5\nprobe.batch_size = 16\n"
         "finetune.epochs = 1\nfinetune.batch_size = 8\n"
         "tcm.blocks = 1\ntcm.heads = 2\ntcm.context_length = 5\nmamba.d_state = 4\n"
         "eval.folds = 2\neval.val_count = 1\n";
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("nn_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

}  // namespace testsupport
