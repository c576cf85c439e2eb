#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "neuronet/config.hpp"
#include "neuronet/metrics.hpp"
#include "neuronet/neuronet.hpp"

namespace neuronet {

struct FoldSplit {
  std::size_t fold = 0;
  std::vector<std::string> train, val, test;
  nlohmann::json to_json() const;
};

// Subjects are shuffled by `seed` and cut into k near-equal test partitions;
// each fold then draws `val_count` validation subjects from its non-test
// remainder and trains on the rest.
std::vector<FoldSplit> split_subject_kfold(const std::vector<std::string>& subjects, std::size_t k,
                                           std::size_t val_count, std::uint64_t seed);

std::vector<StagedRecording> select_subjects(const std::vector<StagedRecording>& recs,
                                             const std::vector<std::string>& ids);
std::vector<std::string> subject_ids(const std::vector<StagedRecording>& recs);
// Applies the configured normalisation scope ("recording", "epoch" or "none").
std::vector<StagedRecording> apply_normalization(std::vector<StagedRecording> recs, const std::string& scope);

using ProbRow = std::array<double, kNumStages>;

struct SubjectPrediction {
  std::string subject_id;
  std::vector<int> truth, pred;
  std::vector<ProbRow> probs;
};

struct ScenarioResult {
  StageMetrics metrics;
  std::vector<SubjectPrediction> subjects;
  std::vector<double> train_loss;  // mean loss per training epoch
  nlohmann::json to_json() const;
};

// Pools every subject's predictions into one metrics report.
ScenarioResult score_predictions(std::vector<SubjectPrediction> subjects);
std::vector<int> stage_labels(const StagedRecording& rec);
std::vector<double> inverse_frequency_weights(const std::vector<int>& labels);
ProbRow softmax_row(const double* logits);

// ---- scenario 1: linear probe on frozen embeddings ------------------------

// Eval-mode embeddings of every epoch of every recording, in order: [sum N, dim].
Tensor embed_recordings(NeuroNetModel& model, const std::vector<StagedRecording>& recs, std::size_t batch = 64);

class LinearProbe {
 public:
  LinearProbe(std::size_t dim, std::uint64_t seed);
  nn::ParamSet& params() { return ps_; }
  ag::Var logits(const ag::Var& features) const { return linear_(features); }
  std::vector<ProbRow> predict_proba(const Tensor& features) const;

 private:
  nn::ParamSet ps_;
  nn::Linear linear_;
};

// Cross-entropy training with AdamW on cached features; returns per-epoch mean loss.
std::vector<double> train_probe(LinearProbe& probe, const Tensor& features, const std::vector<int>& labels,
                                const ProbeConfig& cfg, std::uint64_t seed);

// Backbone frozen; a linear layer trained on `val` labels, scored on `test`.
ScenarioResult run_scenario1(NeuroNetModel& model, const std::vector<StagedRecording>& val,
                             const std::vector<StagedRecording>& test, const ProbeConfig& cfg, std::uint64_t seed,
                             LinearProbe* trained = nullptr);

// ---- scenario 2: last encoder block + temporal context model --------------

class SequenceClassifier {
 public:
  SequenceClassifier(NeuroNetModel& backbone, const TcmConfig& cfg, std::uint64_t seed);

  // Freezes every backbone parameter except the last encoder block.
  void freeze_backbone();
  nn::ParamSet& tcm_params() { return ps_; }
  const TcmConfig& config() const { return cfg_; }
  NeuroNetModel& backbone() { return backbone_; }

  // Tokens entering the last encoder block for every epoch: [n, M + 1, dim].
  Tensor cache_tokens(const StagedRecording& rec, std::size_t batch = 64) const;
  // windows of epoch indices into `tokens` -> logits [windows * context, 5]
  ag::Var window_logits(const Tensor& tokens, const std::vector<Window>& windows) const;
  std::vector<ProbRow> predict(const StagedRecording& rec, TailPolicy tail) const;

  void save(const std::filesystem::path& stem, const nlohmann::json& meta) const;
  void load(const std::filesystem::path& stem);

 private:
  NeuroNetModel& backbone_;
  TcmConfig cfg_;
  nn::ParamSet ps_;
  std::unique_ptr<TemporalContextModel> tcm_;
};

std::vector<double> train_sequence_classifier(SequenceClassifier& clf, const std::vector<StagedRecording>& train,
                                              const FinetuneConfig& cfg, std::uint64_t seed);

ScenarioResult run_scenario2(NeuroNetModel& model, const std::vector<StagedRecording>& val,
                             const std::vector<StagedRecording>& test, const TcmConfig& tcm_cfg,
                             const FinetuneConfig& cfg, std::uint64_t seed,
                             std::unique_ptr<SequenceClassifier>* trained = nullptr);

// ---- scenario 3: soft-voting ensemble --------------------------------------

// Element-wise mean of member probability rows. Each element is summed in
// sorted order so the result does not depend on member order.
std::vector<ProbRow> ensemble_average(const std::vector<std::vector<ProbRow>>& members);

// members[m][s]: member m's prediction for subject s (same subjects, same order).
ScenarioResult soft_vote(const std::vector<std::vector<SubjectPrediction>>& members);

}  // namespace neuronet
