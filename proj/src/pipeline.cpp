#include "neuronet/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include "neuronet/checkpoint.hpp"
#include "neuronet/report.hpp"

namespace neuronet {

namespace fs = std::filesystem;

namespace {

std::vector<std::vector<double>> snapshot(const nn::ParamSet& ps) { return ps.snapshot(); }

void restore(nn::ParamSet& ps, const std::vector<std::vector<double>>& snap) {
  const auto& entries = ps.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    ag::Var v = entries[i].var;
    v.mutable_value().data = snap.at(i);
    v.zero_grad();
  }
}

nlohmann::json predictions_json(const ScenarioResult& r) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& s : r.subjects)
    j.push_back({{"subject_id", s.subject_id}, {"truth", s.truth}, {"pred", s.pred}, {"probs", s.probs}});
  return j;
}

}  // namespace

std::unique_ptr<NeuroNetModel> pretrain_model(const RunConfig& cfg, const std::vector<StagedRecording>& train,
                                              const fs::path& dir, std::uint64_t seed, const PipelineOptions& opts,
                                              std::vector<LossBundle>* trajectory) {
  auto model = std::make_unique<NeuroNetModel>(cfg.model, derive_seed(seed, 0, 0x1417));
  std::ofstream log;
  PretrainOptions po;
  po.seed = seed;
  po.max_steps = opts.max_pretrain_steps;
  if (!dir.empty()) {
    fs::create_directories(dir);
    cfg.save(dir / "config.cfg");
    log.open(dir / "train_log.jsonl");
    if (!log) throw IoError("cannot write " + (dir / "train_log.jsonl").string());
    po.log = &log;
  }
  if (opts.verbose)
    po.on_epoch = [](std::size_t epoch, const LossBundle& l) {
      std::cerr << "  pretrain epoch " << epoch << " l_total=" << l.l_total << " l_contra=" << l.l_contra << '\n';
    };
  auto history = pretrain(*model, train, po);
  if (!dir.empty())
    model->save(dir / "model", {{"kind", "neuronet"}, {"config", cfg.to_json()}, {"seed", seed},
                                {"steps", history.size()}, {"subjects", subject_ids(train)}});
  if (trajectory) *trajectory = std::move(history);
  return model;
}

std::unique_ptr<NeuroNetModel> load_model(const RunConfig& cfg, const fs::path& stem) {
  auto model = std::make_unique<NeuroNetModel>(cfg.model, 0);
  model->load(stem);
  return model;
}

ScenarioResult run_fold(const RunConfig& cfg, const std::vector<StagedRecording>& data, const FoldSplit& split,
                        Scenario scenario, const fs::path& dir, const fs::path& pretrained,
                        const PipelineOptions& opts) {
  const auto val = select_subjects(data, split.val);
  const auto test = select_subjects(data, split.test);
  const std::uint64_t seed = derive_seed(cfg.seed, split.fold, 0xf01d);
  std::unique_ptr<NeuroNetModel> model;
  if (!pretrained.empty()) {
    model = load_model(cfg, pretrained);
  } else {
    model = pretrain_model(cfg, select_subjects(data, split.train), dir.empty() ? fs::path() : dir / "ssl", seed,
                           opts);
  }
  ScenarioResult result;
  if (scenario == Scenario::Probe) {
    LinearProbe probe(cfg.model.encoder.dim, 0);
    result = run_scenario1(*model, val, test, cfg.probe, seed, &probe);
    if (!dir.empty()) save_checkpoint(probe.params(), dir / "probe", {{"kind", "probe"}, {"split", split.to_json()}});
  } else {
    std::unique_ptr<SequenceClassifier> clf;
    result = run_scenario2(*model, val, test, cfg.tcm, cfg.finetune, seed, &clf);
    if (!dir.empty()) clf->save(dir / "finetune", {{"kind", "finetune"}, {"split", split.to_json()}});
  }
  if (!dir.empty()) {
    fs::create_directories(dir);
    cfg.save(dir / "config.cfg");
    write_json(dir / "split.json", split.to_json());
    write_json(dir / "predictions.json", predictions_json(result));
    nlohmann::json backbone = pretrained.empty() ? (dir / "ssl" / "model").string() : pretrained.string();
    write_json(dir / "fold.json", {{"fold", split.fold},
                                   {"scenario", scenario == Scenario::Probe ? "probe" : "finetune"},
                                   {"backbone", backbone},
                                   {"metrics", result.to_json()}});
  }
  return result;
}

// ---- sweeps --------------------------------------------------------------------

std::vector<std::string> sweep_knobs() { return {"mask_ratio", "frame", "decoder", "context", "alpha"}; }

std::vector<std::string> default_sweep_values(const std::string& knob) {
  if (knob == "mask_ratio") return {"0.5", "0.6", "0.7", "0.75", "0.8", "0.9"};
  // Frame size / step in samples at 100 Hz; 37.5 and 62.5 are rounded down.
  if (knob == "frame")
    return {"300/37", "300/75", "300/150", "400/50",  "400/100", "400/200",
            "500/62", "500/125", "500/250", "600/75", "600/150", "600/300"};
  if (knob == "decoder")
    return {"192x1", "192x2", "192x3", "192x4", "256x1", "256x2",
            "256x3", "256x4", "512x1", "512x2", "512x3", "512x4"};
  if (knob == "context") return {"10", "20", "30"};
  if (knob == "alpha") return {"0", "0.1", "0.5", "1", "2"};
  throw ConfigError("unknown sweep knob '" + knob + "' (mask_ratio | frame | decoder | context | alpha)");
}

std::string sweep_csv_name(const std::string& knob) {
  if (knob == "mask_ratio") return "mask_ratio.csv";
  if (knob == "frame") return "table5.csv";
  if (knob == "decoder") return "table6.csv";
  if (knob == "context") return "table7.csv";
  if (knob == "alpha") return "alpha.csv";
  throw ConfigError("unknown sweep knob '" + knob + "'");
}

void apply_sweep_value(RunConfig& cfg, const std::string& knob, const std::string& value) {
  auto split2 = [&](char sep) {
    const auto pos = value.find(sep);
    if (pos == std::string::npos)
      throw ConfigError("sweep value '" + value + "' for " + knob + " must look like a" + sep + "b");
    return std::pair{value.substr(0, pos), value.substr(pos + 1)};
  };
  if (knob == "mask_ratio") {
    cfg.set("mask.ratio", value);
  } else if (knob == "frame") {
    const auto [size, step] = split2('/');
    cfg.set("frame.size", size);
    cfg.set("frame.step", step);
  } else if (knob == "decoder") {
    const auto [dim, depth] = split2('x');
    cfg.set("decoder.dim", dim);
    cfg.set("decoder.depth", depth);
  } else if (knob == "context") {
    cfg.set("tcm.context_length", value);
  } else if (knob == "alpha") {
    cfg.set("loss.alpha", value);
  } else {
    throw ConfigError("unknown sweep knob '" + knob + "'");
  }
  cfg.validate();
}

std::string sweep_rows_csv(const std::string& knob, const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << knob << ",acc,mf1,kappa,parameters,size_mb,wall_seconds\n";
  for (const auto& r : rows)
    os << r.value << ',' << r.acc << ',' << r.mf1 << ',' << r.kappa << ',' << r.parameters << ','
       << static_cast<double>(r.parameters) * 4.0 / 1e6 << ',' << r.wall_seconds << '\n';
  return os.str();
}

std::vector<SweepRow> run_sweep(const RunConfig& base, const std::vector<StagedRecording>& data,
                                const std::string& knob, const std::vector<std::string>& values, const fs::path& out,
                                const SweepOptions& opts) {
  sweep_csv_name(knob);  // validates the knob
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<RunConfig> configs;
  for (const auto& v : values) {
    RunConfig c = base;
    apply_sweep_value(c, knob, v);
    configs.push_back(c);
  }
  auto folds = split_subject_kfold(subject_ids(data), base.eval.folds, base.eval.val_count, base.eval.seed);
  if (opts.max_folds && folds.size() > opts.max_folds) folds.resize(opts.max_folds);

  std::vector<SweepRow> rows(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) rows[i].value = values[i];
  using clock = std::chrono::steady_clock;

  for (const auto& split : folds) {
    const auto train = select_subjects(data, split.train);
    const auto val = select_subjects(data, split.val);
    const auto test = select_subjects(data, split.test);
    const std::uint64_t seed = derive_seed(base.seed, split.fold, 0xf01d);
    if (knob == "context") {
      // The context length only affects the downstream model: pretrain once.
      auto model = pretrain_model(base, train, {}, seed, opts.pipeline);
      const auto snap = snapshot(model->params());
      for (std::size_t i = 0; i < values.size(); ++i) {
        restore(model->params(), snap);
        model->params().set_trainable("", true);
        const auto t0 = clock::now();
        const auto r = run_scenario2(*model, val, test, configs[i].tcm, configs[i].finetune, seed);
        rows[i].wall_seconds += std::chrono::duration<double>(clock::now() - t0).count();
        rows[i].acc += r.metrics.acc;
        rows[i].mf1 += r.metrics.mf1;
        rows[i].kappa += r.metrics.kappa;
        rows[i].parameters = model->params().parameter_count();
      }
    } else {
      for (std::size_t i = 0; i < values.size(); ++i) {
        const auto t0 = clock::now();
        auto model = pretrain_model(configs[i], train, {}, seed, opts.pipeline);
        const auto r = run_scenario1(*model, val, test, configs[i].probe, seed);
        rows[i].wall_seconds += std::chrono::duration<double>(clock::now() - t0).count();
        rows[i].acc += r.metrics.acc;
        rows[i].mf1 += r.metrics.mf1;
        rows[i].kappa += r.metrics.kappa;
        rows[i].parameters = model->params().parameter_count();
      }
    }
  }
  const double nf = static_cast<double>(folds.size());
  for (auto& r : rows) {
    r.acc /= nf;
    r.mf1 /= nf;
    r.kappa /= nf;
  }
  if (!out.empty()) {
    fs::create_directories(out);
    base.save(out / "config.cfg");
    write_text(out / sweep_csv_name(knob), sweep_rows_csv(knob, rows));
  }
  return rows;
}

}  // namespace neuronet
