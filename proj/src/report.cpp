#include "neuronet/report.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "neuronet/errors.hpp"

namespace neuronet {

namespace {

std::size_t row_of(int stage) {
  for (std::size_t r = 0; r < kNumStages; ++r)
    if (stage_index(kHypnogramOrder[r]) == stage) return r;
  throw ConfigError("stage index out of range: " + std::to_string(stage));
}

void check_lengths(const std::vector<int>& truth, const std::vector<int>& pred) {
  if (truth.size() != pred.size()) throw ShapeError("hypnogram: truth and predictions differ in length");
}

}  // namespace

std::string hypnogram_csv(const std::vector<int>& truth, const std::vector<int>& pred) {
  check_lengths(truth, pred);
  std::ostringstream os;
  os << "epoch_idx,truth,pred\n";
  for (std::size_t i = 0; i < truth.size(); ++i)
    os << i << ',' << stage_name(stage_from_index(truth[i])) << ',' << stage_name(stage_from_index(pred[i])) << '\n';
  return os.str();
}

std::string hypnogram_svg(const std::vector<int>& truth, const std::vector<int>& pred, const std::string& title) {
  check_lengths(truth, pred);
  const double left = 50, top = 30, row_h = 30, width = 900;
  const double height = top + row_h * (kNumStages - 1) + 40;
  const double n = static_cast<double>(std::max<std::size_t>(1, pred.size()));
  const double dx = (width - left - 10) / n;
  auto y = [&](int stage) { return top + row_h * static_cast<double>(row_of(stage)); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  if (!title.empty()) os << "  <text x=\"" << left << "\" y=\"16\" font-size=\"13\">" << title << "</text>\n";
  for (std::size_t r = 0; r < kNumStages; ++r)
    os << "  <text class=\"stage-label\" x=\"8\" y=\"" << top + row_h * static_cast<double>(r) + 4
       << "\" font-size=\"12\">" << stage_name(kHypnogramOrder[r]) << "</text>\n";

  auto step_path = [&](const std::vector<int>& s) {
    std::ostringstream p;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double x0 = left + dx * static_cast<double>(i);
      p << (i == 0 ? "M" : "L") << x0 << ',' << y(s[i]) << " L" << x0 + dx << ',' << y(s[i]) << ' ';
    }
    return p.str();
  };
  if (!truth.empty()) {
    os << "  <path class=\"truth\" d=\"" << step_path(truth) << "\" fill=\"none\" stroke=\"#bbbbbb\" stroke-width=\"3\"/>\n";
    os << "  <path class=\"pred\" d=\"" << step_path(pred) << "\" fill=\"none\" stroke=\"#1f4e99\" stroke-width=\"1.2\"/>\n";
  }
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] != truth[i])
      os << "  <circle class=\"error\" cx=\"" << left + dx * (static_cast<double>(i) + 0.5) << "\" cy=\"" << y(pred[i])
         << "\" r=\"2.5\" fill=\"red\"/>\n";
  os << "</svg>\n";
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

void export_hypnogram(const std::vector<int>& truth, const std::vector<int>& pred, const std::filesystem::path& stem,
                      const std::string& title) {
  auto with = [&](const char* ext) {
    auto p = stem;
    p += ext;
    return p;
  };
  write_text(with(".csv"), hypnogram_csv(truth, pred));
  write_text(with(".svg"), hypnogram_svg(truth, pred, title));
}

std::string confusion_csv(const Confusion& cm) {
  std::ostringstream os;
  os << "truth\\pred";
  for (Stage s : kAllStages) os << ',' << stage_name(s);
  os << '\n';
  for (std::size_t t = 0; t < kNumStages; ++t) {
    os << stage_name(stage_from_index(static_cast<int>(t)));
    for (std::size_t p = 0; p < kNumStages; ++p) os << ',' << cm[t][p];
    os << '\n';
  }
  return os.str();
}

nlohmann::json summarize_folds(const std::vector<StageMetrics>& folds) {
  nlohmann::json j;
  j["folds"] = nlohmann::json::array();
  for (const auto& f : folds) j["folds"].push_back(f.to_json());
  if (folds.empty()) return j;
  auto stats = [&](auto get) {
    double mean = 0, var = 0;
    for (const auto& f : folds) mean += get(f);
    mean /= static_cast<double>(folds.size());
    for (const auto& f : folds) var += (get(f) - mean) * (get(f) - mean);
    return nlohmann::json{{"mean", mean}, {"std", std::sqrt(var / static_cast<double>(folds.size()))}};
  };
  j["summary"]["acc"] = stats([](const StageMetrics& m) { return m.acc; });
  j["summary"]["mf1"] = stats([](const StageMetrics& m) { return m.mf1; });
  j["summary"]["kappa"] = stats([](const StageMetrics& m) { return m.kappa; });
  for (std::size_t c = 0; c < kNumStages; ++c)
    j["summary"]["f1"][stage_name(stage_from_index(static_cast<int>(c)))] =
        stats([c](const StageMetrics& m) { return m.f1[c]; });
  return j;
}

void write_report_bundle(const std::filesystem::path& dir, const std::vector<ScenarioResult>& folds,
                         const nlohmann::json& extra) {
  std::vector<StageMetrics> metrics;
  Confusion pooled{};
  for (const auto& f : folds) {
    metrics.push_back(f.metrics);
    for (std::size_t t = 0; t < kNumStages; ++t)
      for (std::size_t p = 0; p < kNumStages; ++p) pooled[t][p] += f.metrics.confusion[t][p];
  }
  nlohmann::json j = summarize_folds(metrics);
  for (std::size_t i = 0; i < folds.size(); ++i) j["folds"][i]["train_loss"] = folds[i].train_loss;
  if (!folds.empty()) j["pooled"] = compute_metrics(pooled).to_json();
  for (const auto& [k, v] : extra.items()) j[k] = v;
  write_json(dir / "metrics.json", j);
  write_text(dir / "confusion.csv", confusion_csv(pooled));
  for (const auto& f : folds)
    for (const auto& s : f.subjects) export_hypnogram(s.truth, s.pred, dir / ("hypnogram_" + s.subject_id), s.subject_id);
}

}  // namespace neuronet
