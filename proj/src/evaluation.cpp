#include "neuronet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "neuronet/checkpoint.hpp"

namespace neuronet {

nlohmann::json FoldSplit::to_json() const {
  return {{"fold", fold}, {"train", train}, {"val", val}, {"test", test}};
}

std::vector<FoldSplit> split_subject_kfold(const std::vector<std::string>& subjects, std::size_t k,
                                           std::size_t val_count, std::uint64_t seed) {
  if (k < 2) throw ConfigError("k-fold needs k >= 2");
  if (std::set<std::string>(subjects.begin(), subjects.end()).size() != subjects.size())
    throw ConfigError("duplicate subject ids");
  if (subjects.size() < k + val_count)
    throw ConfigError("need at least k + val_count = " + std::to_string(k + val_count) + " subjects, got " +
                      std::to_string(subjects.size()));
  std::vector<std::string> order = subjects;
  std::sort(order.begin(), order.end());  // input order must not matter
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<FoldSplit> folds(k);
  const std::size_t base = order.size() / k, extra = order.size() % k;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t len = base + (f < extra ? 1 : 0);
    folds[f].fold = f;
    folds[f].test.assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                         order.begin() + static_cast<std::ptrdiff_t>(pos + len));
    std::vector<std::string> rest(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(pos));
    rest.insert(rest.end(), order.begin() + static_cast<std::ptrdiff_t>(pos + len), order.end());
    if (rest.size() < val_count + 1) throw ConfigError("fold " + std::to_string(f) + " leaves no training subjects");
    std::mt19937_64 vrng(derive_seed(seed, f, 0xfa1d));
    std::shuffle(rest.begin(), rest.end(), vrng);
    folds[f].val.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(val_count));
    folds[f].train.assign(rest.begin() + static_cast<std::ptrdiff_t>(val_count), rest.end());
    std::sort(folds[f].test.begin(), folds[f].test.end());
    std::sort(folds[f].val.begin(), folds[f].val.end());
    std::sort(folds[f].train.begin(), folds[f].train.end());
    pos += len;
  }
  return folds;
}

std::vector<StagedRecording> select_subjects(const std::vector<StagedRecording>& recs,
                                             const std::vector<std::string>& ids) {
  std::vector<StagedRecording> out;
  for (const auto& id : ids) {
    auto it = std::find_if(recs.begin(), recs.end(), [&](const StagedRecording& r) { return r.subject_id == id; });
    if (it == recs.end()) throw ConfigError("subject '" + id + "' not in dataset");
    out.push_back(*it);
  }
  return out;
}

std::vector<std::string> subject_ids(const std::vector<StagedRecording>& recs) {
  std::vector<std::string> ids;
  for (const auto& r : recs) ids.push_back(r.subject_id);
  return ids;
}

std::vector<StagedRecording> apply_normalization(std::vector<StagedRecording> recs, const std::string& scope) {
  if (scope == "none") return recs;
  if (scope == "recording") {
    for (auto& r : recs) r = z_normalize(r);
    return recs;
  }
  if (scope != "epoch") throw ConfigError("unknown normalisation scope '" + scope + "' (recording | epoch | none)");
  for (auto& r : recs) {
    for (std::size_t e = 0; e < r.num_epochs(); ++e) {
      auto x = r.epoch(e);
      double mean = 0, var = 0;
      for (float v : x) mean += v;
      mean /= static_cast<double>(x.size());
      for (float v : x) var += (v - mean) * (v - mean);
      const double sd = std::sqrt(var / static_cast<double>(x.size()));
      const double inv = sd > 1e-12 ? 1.0 / sd : 0.0;
      for (float& v : x) v = static_cast<float>((v - mean) * inv);
    }
    r.provenance["znorm"] = {{"scope", "epoch"}};
  }
  return recs;
}

nlohmann::json ScenarioResult::to_json() const {
  nlohmann::json j = metrics.to_json();
  j["train_loss"] = train_loss;
  j["subjects"] = nlohmann::json::array();
  for (const auto& s : subjects) j["subjects"].push_back(s.subject_id);
  return j;
}

ScenarioResult score_predictions(std::vector<SubjectPrediction> subjects) {
  std::vector<int> truth, pred;
  for (const auto& s : subjects) {
    if (s.truth.size() != s.pred.size()) throw ShapeError("prediction length mismatch for " + s.subject_id);
    truth.insert(truth.end(), s.truth.begin(), s.truth.end());
    pred.insert(pred.end(), s.pred.begin(), s.pred.end());
  }
  ScenarioResult r;
  r.metrics = compute_metrics(truth, pred);
  r.subjects = std::move(subjects);
  return r;
}

std::vector<int> stage_labels(const StagedRecording& rec) {
  std::vector<int> y;
  for (Stage s : rec.labels) y.push_back(stage_index(s));
  return y;
}

std::vector<double> inverse_frequency_weights(const std::vector<int>& labels) {
  std::vector<double> count(kNumStages, 0.0), w(kNumStages, 0.0);
  for (int y : labels) count.at(static_cast<std::size_t>(y)) += 1;
  for (std::size_t c = 0; c < kNumStages; ++c)
    if (count[c] > 0) w[c] = static_cast<double>(labels.size()) / (kNumStages * count[c]);
  return w;
}

ProbRow softmax_row(const double* z) {
  ProbRow p{};
  const double mx = *std::max_element(z, z + kNumStages);
  double s = 0;
  for (std::size_t c = 0; c < kNumStages; ++c) s += (p[c] = std::exp(z[c] - mx));
  for (double& v : p) v /= s;
  return p;
}

namespace {

int argmax(const ProbRow& p) { return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin()); }

SubjectPrediction make_prediction(const StagedRecording& rec, std::vector<ProbRow> probs) {
  SubjectPrediction sp;
  sp.subject_id = rec.subject_id;
  sp.truth = stage_labels(rec);
  for (const auto& p : probs) sp.pred.push_back(argmax(p));
  sp.probs = std::move(probs);
  return sp;
}

}  // namespace

// ---- scenario 1 --------------------------------------------------------------

Tensor embed_recordings(NeuroNetModel& model, const std::vector<StagedRecording>& recs, std::size_t batch) {
  std::vector<std::pair<std::size_t, std::size_t>> items;
  for (std::size_t r = 0; r < recs.size(); ++r)
    for (std::size_t e = 0; e < recs[r].num_epochs(); ++e) items.emplace_back(r, e);
  const std::size_t dim = model.config().encoder.dim;
  Tensor out({items.size(), dim});
  for (std::size_t start = 0; start < items.size(); start += batch) {
    const std::size_t end = std::min(items.size(), start + batch);
    const std::vector<std::pair<std::size_t, std::size_t>> chunk(items.begin() + static_cast<std::ptrdiff_t>(start),
                                                                 items.begin() + static_cast<std::ptrdiff_t>(end));
    const Tensor e = model.embed(gather_epochs(recs, chunk));
    std::copy(e.data.begin(), e.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(start * dim));
  }
  return out;
}

LinearProbe::LinearProbe(std::size_t dim, std::uint64_t seed) {
  nn::Rng rng(seed);
  linear_ = nn::Linear(ps_, "probe", dim, kNumStages, rng);
}

std::vector<ProbRow> LinearProbe::predict_proba(const Tensor& features) const {
  ag::NoGradGuard guard;
  const Tensor z = logits(ag::constant(features)).value();
  std::vector<ProbRow> out;
  for (std::size_t r = 0; r < z.rows(); ++r) out.push_back(softmax_row(z.ptr() + r * kNumStages));
  return out;
}

std::vector<double> train_probe(LinearProbe& probe, const Tensor& features, const std::vector<int>& labels,
                                const ProbeConfig& cfg, std::uint64_t seed) {
  if (features.rows() != labels.size()) throw ShapeError("probe: feature/label count mismatch");
  if (cfg.batch_size == 0) throw ConfigError("probe batch size must be >= 1");
  const std::size_t n = labels.size(), dim = features.cols();
  const auto weights = cfg.class_weights ? inverse_frequency_weights(labels) : std::vector<double>{};
  nn::AdamW opt(probe.params(), {cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::vector<double> history;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      Tensor x({end - start, dim});
      std::vector<int> y;
      for (std::size_t i = start; i < end; ++i) {
        std::copy_n(features.ptr() + order[i] * dim, dim, x.ptr() + (i - start) * dim);
        y.push_back(labels[order[i]]);
      }
      const ag::Var loss = ag::cross_entropy(probe.logits(ag::constant(std::move(x))), y, weights);
      total += loss.item();
      ++batches;
      ag::backward(loss);
      opt.step();
    }
    history.push_back(total / static_cast<double>(std::max<std::size_t>(1, batches)));
  }
  return history;
}

ScenarioResult run_scenario1(NeuroNetModel& model, const std::vector<StagedRecording>& val,
                             const std::vector<StagedRecording>& test, const ProbeConfig& cfg, std::uint64_t seed,
                             LinearProbe* trained) {
  const Tensor train_x = embed_recordings(model, val);
  std::vector<int> train_y;
  for (const auto& r : val) {
    const auto y = stage_labels(r);
    train_y.insert(train_y.end(), y.begin(), y.end());
  }
  LinearProbe probe(model.config().encoder.dim, derive_seed(seed, 1, 0x9b0e));
  auto history = train_probe(probe, train_x, train_y, cfg, derive_seed(seed, 2, 0x9b0e));
  std::vector<SubjectPrediction> preds;
  for (const auto& r : test) preds.push_back(make_prediction(r, probe.predict_proba(embed_recordings(model, {r}))));
  auto result = score_predictions(std::move(preds));
  result.train_loss = std::move(history);
  if (trained) *trained = std::move(probe);
  return result;
}

// ---- scenario 2 --------------------------------------------------------------

SequenceClassifier::SequenceClassifier(NeuroNetModel& backbone, const TcmConfig& cfg, std::uint64_t seed)
    : backbone_(backbone), cfg_(cfg) {
  cfg_.validate(backbone.config().encoder.dim);
  if (backbone.encoder().depth() == 0) throw ConfigError("fine-tuning needs at least one encoder block");
  nn::Rng rng(seed);
  tcm_ = make_tcm(ps_, "tcm.", backbone.config().encoder.dim, cfg_, rng);
}

void SequenceClassifier::freeze_backbone() {
  auto& ps = backbone_.params();
  ps.set_trainable("", false);
  ps.set_trainable(backbone_.encoder().block_prefix(backbone_.encoder().depth() - 1), true);
}

Tensor SequenceClassifier::cache_tokens(const StagedRecording& rec, std::size_t batch) const {
  const std::size_t n = rec.num_epochs();
  Tensor out;
  for (std::size_t start = 0; start < n; start += batch) {
    std::vector<std::pair<std::size_t, std::size_t>> items;
    for (std::size_t e = start; e < std::min(n, start + batch); ++e) items.emplace_back(0, e);
    const Tensor t = backbone_.last_block_inputs(gather_epochs({rec}, items));
    if (out.shape.empty()) out = Tensor({n, t.dim(1), t.dim(2)});
    std::copy(t.data.begin(), t.data.end(),
              out.data.begin() + static_cast<std::ptrdiff_t>(start * t.dim(1) * t.dim(2)));
  }
  return out;
}

ag::Var SequenceClassifier::window_logits(const Tensor& tokens, const std::vector<Window>& windows) const {
  const std::size_t ctx = cfg_.context_length;
  const std::size_t slab = tokens.dim(1) * tokens.dim(2);
  // Last block runs once per distinct epoch, then rows are gathered into windows.
  std::vector<std::size_t> uniq;
  for (const auto& w : windows) {
    if (w.epochs.size() != ctx) throw ShapeError("window length differs from context_length");
    uniq.insert(uniq.end(), w.epochs.begin(), w.epochs.end());
  }
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  Tensor sel({uniq.size(), tokens.dim(1), tokens.dim(2)});
  for (std::size_t i = 0; i < uniq.size(); ++i)
    std::copy_n(tokens.ptr() + uniq[i] * slab, slab, sel.ptr() + i * slab);
  const auto& enc = backbone_.encoder();
  const ag::Var cls = enc.class_token_from(ag::constant(std::move(sel)), enc.depth() - 1);
  std::vector<std::size_t> idx;
  for (const auto& w : windows)
    for (std::size_t e : w.epochs) idx.push_back(static_cast<std::size_t>(
        std::lower_bound(uniq.begin(), uniq.end(), e) - uniq.begin()));
  const std::size_t d = cls.shape()[1];
  const ag::Var seq = ag::reshape(ag::gather_rows(cls, std::move(idx)), {windows.size(), ctx, d});
  return ag::reshape(tcm_->forward(seq), {windows.size() * ctx, kNumStages});
}

std::vector<ProbRow> SequenceClassifier::predict(const StagedRecording& rec, TailPolicy tail) const {
  ag::NoGradGuard guard;
  const Tensor tokens = cache_tokens(rec);
  const std::size_t n = rec.num_epochs(), ctx = cfg_.context_length;
  const auto windows = cfg_.seq2seq() ? inference_windows(n, ctx, tail) : trailing_windows(n, ctx);
  std::vector<ProbRow> probs(n);
  std::vector<bool> seen(n, false);
  constexpr std::size_t kChunk = 32;
  for (std::size_t start = 0; start < windows.size(); start += kChunk) {
    const std::vector<Window> chunk(windows.begin() + static_cast<std::ptrdiff_t>(start),
                                    windows.begin() + static_cast<std::ptrdiff_t>(std::min(windows.size(), start + kChunk)));
    const Tensor z = window_logits(tokens, chunk).value();
    for (std::size_t w = 0; w < chunk.size(); ++w)
      for (std::size_t j = chunk[w].keep_from; j < ctx; ++j) {
        const std::size_t e = chunk[w].epochs[j];
        probs[e] = softmax_row(z.ptr() + (w * ctx + j) * kNumStages);
        seen[e] = true;
      }
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end())
    throw Error("internal: windows left an epoch without a prediction");
  return probs;
}

void SequenceClassifier::save(const std::filesystem::path& stem, const nlohmann::json& meta) const {
  // The fine-tuned head plus a copy of the adapted last encoder block.
  nn::ParamSet bundle;
  for (const auto& e : ps_.entries()) bundle.add_param(e.name, e.var.value());
  const std::string block = backbone_.encoder().block_prefix(backbone_.encoder().depth() - 1);
  for (const auto& e : backbone_.params().entries())
    if (e.name.rfind(block, 0) == 0) bundle.add_param(e.name, e.var.value());
  save_checkpoint(bundle, stem, meta);
}

void SequenceClassifier::load(const std::filesystem::path& stem) {
  load_checkpoint(ps_, stem, true);
  load_checkpoint(backbone_.params(), stem, true);
}

std::vector<double> train_sequence_classifier(SequenceClassifier& clf, const std::vector<StagedRecording>& train,
                                              const FinetuneConfig& cfg, std::uint64_t seed) {
  if (cfg.batch_size == 0) throw ConfigError("finetune batch size must be >= 1");
  clf.freeze_backbone();
  const auto& tcfg = clf.config();
  const std::size_t ctx = tcfg.context_length;
  struct Item {
    std::size_t rec;
    Window w;
  };
  std::vector<Tensor> tokens;
  std::vector<Item> items;
  std::vector<int> all_labels;
  for (std::size_t r = 0; r < train.size(); ++r) {
    tokens.push_back(clf.cache_tokens(train[r]));
    const auto y = stage_labels(train[r]);
    all_labels.insert(all_labels.end(), y.begin(), y.end());
    auto ws = tcfg.seq2seq() ? training_windows(train[r].num_epochs(), ctx, cfg.window_stride)
                             : trailing_windows(train[r].num_epochs(), ctx);
    for (auto& w : ws) items.push_back({r, std::move(w)});
  }
  if (items.empty()) throw ConfigError("no training windows");
  const auto weights = cfg.class_weights ? inverse_frequency_weights(all_labels) : std::vector<double>{};

  nn::AdamW opt(clf.tcm_params(), {cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  nn::AdamW opt_block(clf.backbone().params(), {cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});

  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::vector<double> history;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      // Windows of one step may come from different recordings: stack their
      // token caches behind a per-step offset table.
      std::vector<std::size_t> recs_used;
      for (std::size_t i = start; i < end; ++i) recs_used.push_back(items[order[i]].rec);
      std::sort(recs_used.begin(), recs_used.end());
      recs_used.erase(std::unique(recs_used.begin(), recs_used.end()), recs_used.end());
      std::vector<std::size_t> offset(train.size(), 0);
      std::size_t rows = 0;
      for (std::size_t r : recs_used) {
        offset[r] = rows;
        rows += tokens[r].dim(0);
      }
      const Tensor& t0 = tokens[recs_used.front()];
      Tensor stacked({rows, t0.dim(1), t0.dim(2)});
      for (std::size_t r : recs_used)
        std::copy(tokens[r].data.begin(), tokens[r].data.end(),
                  stacked.data.begin() + static_cast<std::ptrdiff_t>(offset[r] * t0.dim(1) * t0.dim(2)));
      std::vector<Window> windows;
      std::vector<int> labels;
      for (std::size_t i = start; i < end; ++i) {
        const Item& it = items[order[i]];
        Window w = it.w;
        for (std::size_t j = 0; j < ctx; ++j) {
          const bool supervised = tcfg.seq2seq() || j + 1 == ctx;
          if (supervised) labels.push_back(stage_index(train[it.rec].labels[w.epochs[j]]));
          w.epochs[j] += offset[it.rec];
        }
        windows.push_back(std::move(w));
      }
      ag::Var logits = clf.window_logits(stacked, windows);
      if (!tcfg.seq2seq()) {
        std::vector<std::size_t> last;
        for (std::size_t w = 0; w < windows.size(); ++w) last.push_back(w * ctx + ctx - 1);
        logits = ag::gather_rows(logits, std::move(last));
      }
      const ag::Var loss = ag::cross_entropy(logits, labels, weights);
      ag::check_finite(loss, "finetune loss");
      total += loss.item();
      ++batches;
      ag::backward(loss);
      opt.step();
      opt_block.step();
    }
    history.push_back(total / static_cast<double>(std::max<std::size_t>(1, batches)));
  }
  return history;
}

ScenarioResult run_scenario2(NeuroNetModel& model, const std::vector<StagedRecording>& val,
                             const std::vector<StagedRecording>& test, const TcmConfig& tcm_cfg,
                             const FinetuneConfig& cfg, std::uint64_t seed,
                             std::unique_ptr<SequenceClassifier>* trained) {
  auto clf = std::make_unique<SequenceClassifier>(model, tcm_cfg, derive_seed(seed, 1, 0x7c3));
  auto history = train_sequence_classifier(*clf, val, cfg, derive_seed(seed, 2, 0x7c3));
  const TailPolicy tail = parse_tail_policy(cfg.tail_policy);
  std::vector<SubjectPrediction> preds;
  for (const auto& r : test) preds.push_back(make_prediction(r, clf->predict(r, tail)));
  auto result = score_predictions(std::move(preds));
  result.train_loss = std::move(history);
  if (trained) *trained = std::move(clf);
  return result;
}

// ---- scenario 3 --------------------------------------------------------------

std::vector<ProbRow> ensemble_average(const std::vector<std::vector<ProbRow>>& members) {
  if (members.empty()) throw ConfigError("ensemble needs at least one member");
  const std::size_t n = members.front().size();
  for (const auto& m : members)
    if (m.size() != n) throw ShapeError("ensemble members disagree on epoch count");
  std::vector<ProbRow> out(n);
  std::vector<double> vals(members.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < kNumStages; ++c) {
      for (std::size_t m = 0; m < members.size(); ++m) vals[m] = members[m][i][c];
      std::sort(vals.begin(), vals.end());
      out[i][c] = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(members.size());
    }
  return out;
}

ScenarioResult soft_vote(const std::vector<std::vector<SubjectPrediction>>& members) {
  if (members.empty()) throw ConfigError("ensemble needs at least one member");
  std::vector<SubjectPrediction> merged;
  for (std::size_t s = 0; s < members.front().size(); ++s) {
    std::vector<std::vector<ProbRow>> probs;
    for (const auto& m : members) {
      if (m.size() != members.front().size() || m[s].subject_id != members.front()[s].subject_id)
        throw ConfigError("ensemble members were evaluated on different subjects");
      probs.push_back(m[s].probs);
    }
    SubjectPrediction sp;
    sp.subject_id = members.front()[s].subject_id;
    sp.truth = members.front()[s].truth;
    sp.probs = ensemble_average(probs);
    for (const auto& p : sp.probs) sp.pred.push_back(argmax(p));
    merged.push_back(std::move(sp));
  }
  return score_predictions(std::move(merged));
}

}  // namespace neuronet
