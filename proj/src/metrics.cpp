#include "neuronet/metrics.hpp"

#include "neuronet/errors.hpp"

namespace neuronet {

Confusion confusion_matrix(const std::vector<int>& truth, const std::vector<int>& pred) {
  if (truth.size() != pred.size()) throw ShapeError("truth and predictions differ in length");
  Confusion cm{};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= static_cast<int>(kNumStages) || pred[i] < 0 ||
        pred[i] >= static_cast<int>(kNumStages))
      throw ConfigError("stage index out of range at position " + std::to_string(i));
    ++cm[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(pred[i])];
  }
  return cm;
}

StageMetrics compute_metrics(const Confusion& cm) {
  StageMetrics m;
  m.confusion = cm;
  std::array<double, kNumStages> row{}, col{};
  double diag = 0;
  for (std::size_t t = 0; t < kNumStages; ++t)
    for (std::size_t p = 0; p < kNumStages; ++p) {
      const double v = static_cast<double>(cm[t][p]);
      row[t] += v;
      col[p] += v;
      m.count += cm[t][p];
      if (t == p) diag += v;
    }
  const double n = static_cast<double>(m.count);
  if (m.count == 0) throw ConfigError("no epochs to score");
  m.acc = diag / n;
  double expected = 0;
  for (std::size_t c = 0; c < kNumStages; ++c) {
    expected += row[c] * col[c];
    const double tp = static_cast<double>(cm[c][c]);
    const double denom = row[c] + col[c];
    m.absent[c] = denom == 0;
    m.f1[c] = denom == 0 ? 0.0 : 2 * tp / denom;
    m.mf1 += m.f1[c];
  }
  m.mf1 /= kNumStages;
  const double pe = expected / (n * n);
  m.kappa = pe >= 1.0 ? 1.0 : (m.acc - pe) / (1.0 - pe);
  return m;
}

StageMetrics compute_metrics(const std::vector<int>& truth, const std::vector<int>& pred) {
  return compute_metrics(confusion_matrix(truth, pred));
}

nlohmann::json StageMetrics::to_json() const {
  nlohmann::json j;
  j["acc"] = acc;
  j["mf1"] = mf1;
  j["kappa"] = kappa;
  j["count"] = count;
  j["absent_classes"] = nlohmann::json::array();
  for (std::size_t c = 0; c < kNumStages; ++c) {
    const auto name = std::string(stage_name(stage_from_index(c)));
    j["f1"][name] = f1[c];
    if (absent[c]) j["absent_classes"].push_back(name);
  }
  j["confusion"] = confusion;
  return j;
}

}  // namespace neuronet
