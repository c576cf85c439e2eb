#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "neuronet/evaluation.hpp"
#include "neuronet/metrics.hpp"

namespace neuronet {

// Vertical order of the hypnogram, top to bottom.
inline constexpr std::array<Stage, kNumStages> kHypnogramOrder = {Stage::W, Stage::REM, Stage::N1, Stage::N2,
                                                                  Stage::N3};

std::string hypnogram_csv(const std::vector<int>& truth, const std::vector<int>& pred);
// Step plot of the predicted stages with the truth as a faint line; epochs
// where they differ get a red marker (class "error").
std::string hypnogram_svg(const std::vector<int>& truth, const std::vector<int>& pred,
                          const std::string& title = "");
// Writes <stem>.csv and <stem>.svg.
void export_hypnogram(const std::vector<int>& truth, const std::vector<int>& pred,
                      const std::filesystem::path& stem, const std::string& title = "");

std::string confusion_csv(const Confusion& cm);

// Per-fold reports plus mean and (population) std of acc, mf1, kappa and per-class F1.
nlohmann::json summarize_folds(const std::vector<StageMetrics>& folds);

void write_text(const std::filesystem::path& path, const std::string& text);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

// metrics.json, confusion.csv (pooled over folds) and one hypnogram per test subject.
void write_report_bundle(const std::filesystem::path& dir, const std::vector<ScenarioResult>& folds,
                         const nlohmann::json& extra = nlohmann::json::object());

}  // namespace neuronet
