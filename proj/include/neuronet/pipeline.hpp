#pragma once

// Fold-level orchestration shared by the command-line tool and the
// end-to-end tests: pretrain on a fold's training subjects, then run a
// downstream scenario on its validation / test subjects.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "neuronet/config.hpp"
#include "neuronet/evaluation.hpp"
#include "neuronet/neuronet.hpp"

namespace neuronet {

enum class Scenario { Probe, Finetune };

struct PipelineOptions {
  std::size_t max_pretrain_steps = 0;  // 0: full schedule
  bool verbose = false;                // progress lines on stderr
};

// Pretrains a fresh model on `train`. When `dir` is non-empty the run writes
// <dir>/config.cfg, <dir>/train_log.jsonl and <dir>/model.{bin,json}.
std::unique_ptr<NeuroNetModel> pretrain_model(const RunConfig& cfg, const std::vector<StagedRecording>& train,
                                              const std::filesystem::path& dir, std::uint64_t seed,
                                              const PipelineOptions& opts = {},
                                              std::vector<LossBundle>* trajectory = nullptr);

std::unique_ptr<NeuroNetModel> load_model(const RunConfig& cfg, const std::filesystem::path& stem);

// Runs one fold. `pretrained` is a checkpoint stem; when empty the fold
// pretrains its own backbone under <dir>/ssl. Downstream weights are written
// to <dir>/probe.* or <dir>/finetune.* when `dir` is non-empty.
ScenarioResult run_fold(const RunConfig& cfg, const std::vector<StagedRecording>& data, const FoldSplit& split,
                        Scenario scenario, const std::filesystem::path& dir,
                        const std::filesystem::path& pretrained = {}, const PipelineOptions& opts = {});

// ---- ablation sweeps --------------------------------------------------------

struct SweepRow {
  std::string value;
  double acc = 0, mf1 = 0, kappa = 0;
  std::size_t parameters = 0;  // backbone parameter count
  double wall_seconds = 0;
};

// mask_ratio, frame, decoder, context, alpha.
std::vector<std::string> sweep_knobs();
std::vector<std::string> default_sweep_values(const std::string& knob);
std::string sweep_csv_name(const std::string& knob);
// Applies one sweep value ("0.75", "300/75", "256x3", "20", "1.0") to a config.
void apply_sweep_value(RunConfig& cfg, const std::string& knob, const std::string& value);

struct SweepOptions {
  std::size_t max_folds = 0;  // 0: every fold
  PipelineOptions pipeline;
};

// Metrics are averaged over the evaluated folds. Writes <out>/<csv name>
// and a config snapshot when `out` is non-empty.
std::vector<SweepRow> run_sweep(const RunConfig& base, const std::vector<StagedRecording>& data,
                                const std::string& knob, const std::vector<std::string>& values,
                                const std::filesystem::path& out, const SweepOptions& opts = {});

std::string sweep_rows_csv(const std::string& knob, const std::vector<SweepRow>& rows);

}  // namespace neuronet
