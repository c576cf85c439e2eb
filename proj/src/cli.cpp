#include "neuronet/cli.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "neuronet/checkpoint.hpp"
#include "neuronet/pipeline.hpp"
#include "neuronet/report.hpp"
#include "neuronet/synth.hpp"

namespace neuronet {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::string preset;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::size_t jobs = 1;
  bool verbose = false;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "Run configuration file (key = value lines)");
  sub->add_option("--preset", c.preset, "Base preset when no config is given: T, B or desk");
  sub->add_option("--set", c.sets, "Override one config key: key=value (repeatable)");
  sub->add_option("--seed", c.seed, "Global seed (overrides the config)");
  sub->add_flag("--deterministic", c.deterministic, "Seeded, scheduling-independent execution");
  sub->add_option("--jobs", c.jobs, "Folds run in parallel")->check(CLI::PositiveNumber);
  sub->add_flag("--verbose", c.verbose, "Progress on stderr");
}

RunConfig resolve_config(const Common& c) {
  if (!c.config.empty() && !c.preset.empty()) throw ConfigError("--config and --preset are mutually exclusive");
  RunConfig cfg = c.config.empty() ? RunConfig::preset(c.preset.empty() ? "T" : c.preset) : RunConfig::load(c.config);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

void setup_threads(const Common& c) {
  if (c.deterministic) omp_set_dynamic(0);
}

fs::path cache_root() {
  const char* env = std::getenv("NEURONET_CACHE");
  return env && *env ? fs::path(env) : fs::path();
}

// Dataset directories may be given relative to NEURONET_CACHE.
fs::path resolve_data_dir(const std::string& data) {
  if (data.empty()) throw ConfigError("--data is required");
  fs::path p(data);
  if (fs::is_directory(p)) return p;
  const fs::path root = cache_root();
  if (!root.empty() && p.is_relative() && fs::is_directory(root / p)) return root / p;
  throw IoError("dataset directory not found: " + data);
}

std::vector<StagedRecording> load_data(const std::string& data, const RunConfig& cfg) {
  auto recs = load_dataset(resolve_data_dir(data));
  if (recs.empty()) throw IoError("no cached recordings under " + data);
  return apply_normalization(std::move(recs), cfg.eval.znorm_scope);
}

std::vector<std::size_t> parse_index_list(const std::string& s, std::size_t limit) {
  std::vector<std::size_t> out;
  if (s.empty() || s == "all") {
    for (std::size_t i = 0; i < limit; ++i) out.push_back(i);
    return out;
  }
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t v = 0;
    try {
      std::size_t used = 0;
      v = std::stoul(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("bad fold index '" + item + "'");
    }
    if (v >= limit) throw ConfigError("fold index " + std::to_string(v) + " out of range (folds = " +
                                      std::to_string(limit) + ")");
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

bool has_stem(const fs::path& stem) {
  auto j = stem;
  j += ".json";
  return fs::exists(j);
}

fs::path find_backbone(const fs::path& dir, std::size_t fold) {
  const fs::path fd = dir / ("fold" + std::to_string(fold));
  for (const auto& stem : {fd / "model", fd / "ssl" / "model", dir / "model"})
    if (has_stem(stem)) return stem;
  throw IoError("no pretrained checkpoint for fold " + std::to_string(fold) + " under " + dir.string());
}

// Runs `fn(i)` for every i in [0, n) on up to `jobs` threads; rethrows the
// first failure after all workers stop.
template <class Fn>
void parallel_jobs(std::size_t n, std::size_t jobs, Fn fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const int threads_per_job = std::max(1, omp_get_max_threads() / static_cast<int>(jobs));
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < jobs; ++w)
    pool.emplace_back([&] {
      omp_set_num_threads(threads_per_job);
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void print_summary(std::ostream& out, const std::string& what, const std::vector<ScenarioResult>& folds) {
  out << what << '\n';
  for (std::size_t i = 0; i < folds.size(); ++i)
    out << "  fold " << i << ": acc=" << std::fixed << std::setprecision(4) << folds[i].metrics.acc
        << " mf1=" << folds[i].metrics.mf1 << " kappa=" << folds[i].metrics.kappa << '\n';
  if (folds.size() > 1) {
    double acc = 0, mf1 = 0;
    for (const auto& f : folds) {
      acc += f.metrics.acc;
      mf1 += f.metrics.mf1;
    }
    out << "  mean:   acc=" << acc / static_cast<double>(folds.size())
        << " mf1=" << mf1 / static_cast<double>(folds.size()) << '\n';
  }
  out.unsetf(std::ios::fixed);
}

void write_run_info(const fs::path& dir, const std::string& command, const Common& c) {
  write_json(dir / "run.json", {{"command", command}, {"deterministic", c.deterministic}, {"jobs", c.jobs}});
}

// ---- subcommands ---------------------------------------------------------------

struct IngestArgs {
  std::string edf_dir, channel, out, annotations_dir;
};

bool is_hypnogram(const fs::path& p) { return p.filename().string().find("Hypnogram") != std::string::npos; }

fs::path find_annotations(const fs::path& psg, const fs::path& ann_dir) {
  const std::string stem = psg.stem().string();
  for (const auto& dir : {ann_dir, psg.parent_path()}) {
    if (dir.empty()) continue;
    if (fs::exists(dir / (stem + ".csv"))) return dir / (stem + ".csv");
  }
  // Sleep-EDF naming: SC4001E0-PSG.edf pairs with SC4001E?-Hypnogram.edf.
  const std::string key = stem.substr(0, std::min<std::size_t>(7, stem.size()));
  for (const auto& dir : {ann_dir, psg.parent_path()}) {
    if (dir.empty() || !fs::is_directory(dir)) continue;
    std::vector<fs::path> hits;
    for (const auto& e : fs::directory_iterator(dir))
      if (is_hypnogram(e.path()) && e.path().filename().string().rfind(key, 0) == 0) hits.push_back(e.path());
    std::sort(hits.begin(), hits.end());
    if (!hits.empty()) return hits.front();
  }
  return {};  // the recording's own annotation signal
}

int cmd_ingest(const IngestArgs& a, const Common& c, std::ostream& out) {
  const RunConfig cfg = resolve_config(c);
  fs::path out_dir = a.out;
  if (out_dir.empty()) {
    const fs::path root = cache_root();
    if (root.empty()) throw ConfigError("--out is required when NEURONET_CACHE is not set");
    out_dir = root / fs::path(a.edf_dir).filename();
  }
  if (!fs::is_directory(a.edf_dir)) throw IoError("EDF directory not found: " + a.edf_dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(a.edf_dir)) {
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".edf" && !is_hypnogram(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no EDF recordings in " + a.edf_dir);
  const std::string channel = a.channel.empty() ? cfg.channel : a.channel;
  std::vector<StagedRecording> recs(files.size());
  parallel_jobs(files.size(), c.jobs, [&](std::size_t i) {
    recs[i] = ingest_recording(files[i], channel, find_annotations(files[i], a.annotations_dir));
    std::string id = files[i].stem().string();
    if (const auto p = id.find("-PSG"); p != std::string::npos) id.erase(p);
    recs[i].subject_id = id;
  });
  save_dataset(recs, out_dir);
  cfg.save(out_dir / "config.cfg");
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& r : recs) summary.push_back({{"subject_id", r.subject_id}, {"epochs", r.num_epochs()}});
  write_json(out_dir / "ingest.json", {{"channel", channel}, {"recordings", summary}});
  out << "ingested " << recs.size() << " recordings into " << out_dir.string() << '\n';
  return kExitOk;
}

struct SynthArgs {
  std::string spec = "default", out;
  std::optional<std::size_t> subjects, epochs;
  std::optional<std::uint64_t> synth_seed;
  bool edf = false;
};

int cmd_synth(const SynthArgs& a, const Common& c, std::ostream& out) {
  const RunConfig cfg = resolve_config(c);
  SynthSpec spec = SynthSpec::preset(a.spec);
  if (a.subjects) spec.subjects = *a.subjects;
  if (a.epochs) spec.epochs_per_subject = *a.epochs;
  spec.seed = a.synth_seed ? *a.synth_seed : (c.seed ? *c.seed : spec.seed);
  const auto recs = generate(spec);
  save_dataset(recs, a.out);
  write_json(fs::path(a.out) / "synth.json", spec.to_json());
  cfg.save(fs::path(a.out) / "config.cfg");
  if (a.edf) export_edf(recs, fs::path(a.out) / "edf", cfg.channel);
  out << "generated " << recs.size() << " subjects x " << spec.epochs_per_subject << " epochs (" << spec.name
      << ") into " << a.out << '\n';
  return kExitOk;
}

struct PretrainArgs {
  std::string data, out;
  std::optional<std::size_t> fold;
  std::size_t max_steps = 0;
};

int cmd_pretrain(const PretrainArgs& a, const Common& c, std::ostream& out) {
  setup_threads(c);
  const RunConfig cfg = resolve_config(c);
  auto data = load_data(a.data, cfg);
  std::uint64_t seed = cfg.seed;
  if (a.fold) {
    const auto folds = split_subject_kfold(subject_ids(data), cfg.eval.folds, cfg.eval.val_count, cfg.eval.seed);
    if (*a.fold >= folds.size()) throw ConfigError("--fold out of range");
    data = select_subjects(data, folds[*a.fold].train);
    write_json(fs::path(a.out) / "split.json", folds[*a.fold].to_json());
  }
  std::vector<LossBundle> traj;
  PipelineOptions po{a.max_steps, c.verbose};
  pretrain_model(cfg, data, a.out, seed, po, &traj);
  write_run_info(a.out, "pretrain", c);
  out << "pretrained on " << data.size() << " subjects, " << traj.size() << " steps";
  if (!traj.empty()) out << ", final l_total=" << std::setprecision(10) << traj.back().l_total;
  out << '\n';
  return kExitOk;
}

struct FoldArgs {
  std::string data, out, pretrained, folds;
  std::size_t max_steps = 0;
};

int cmd_scenario(const FoldArgs& a, const Common& c, Scenario scenario, std::ostream& out) {
  setup_threads(c);
  const RunConfig cfg = resolve_config(c);
  const auto data = load_data(a.data, cfg);
  const auto splits = split_subject_kfold(subject_ids(data), cfg.eval.folds, cfg.eval.val_count, cfg.eval.seed);
  const auto which = parse_index_list(a.folds, splits.size());
  const fs::path out_dir(a.out);
  fs::create_directories(out_dir);
  cfg.save(out_dir / "config.cfg");
  std::vector<ScenarioResult> results(which.size());
  PipelineOptions po{a.max_steps, c.verbose};
  parallel_jobs(which.size(), c.jobs, [&](std::size_t i) {
    const auto& split = splits[which[i]];
    const fs::path backbone = a.pretrained.empty() ? fs::path() : find_backbone(a.pretrained, split.fold);
    results[i] = run_fold(cfg, data, split, scenario, out_dir / ("fold" + std::to_string(split.fold)), backbone, po);
  });
  const std::string name = scenario == Scenario::Probe ? "probe" : "finetune";
  write_report_bundle(out_dir, results, {{"scenario", name}});
  write_run_info(out_dir, name, c);
  print_summary(out, name, results);
  return kExitOk;
}

struct CrossArgs {
  std::string train_run, target, out;
};

int cmd_crosseval(const CrossArgs& a, const Common& c, std::ostream& out) {
  setup_threads(c);
  const fs::path run(a.train_run);
  if (!fs::exists(run / "config.cfg")) throw IoError("missing " + (run / "config.cfg").string());
  RunConfig cfg = RunConfig::load(run / "config.cfg");
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  std::vector<fs::path> fold_dirs;
  for (const auto& e : fs::directory_iterator(run))
    if (e.is_directory() && fs::exists(e.path() / "fold.json")) fold_dirs.push_back(e.path());
  std::sort(fold_dirs.begin(), fold_dirs.end());
  if (fold_dirs.size() < 2) throw ConfigError("soft voting needs at least 2 fold models under " + a.train_run);
  // Foreign recordings are always z-normalised.
  const auto target = apply_normalization(load_dataset(resolve_data_dir(a.target)), "recording");
  if (target.empty()) throw IoError("no cached recordings under " + a.target);

  std::vector<std::vector<SubjectPrediction>> members(fold_dirs.size());
  parallel_jobs(fold_dirs.size(), c.jobs, [&](std::size_t m) {
    std::ifstream in(fold_dirs[m] / "fold.json");
    const auto info = nlohmann::json::parse(in);
    // Shape mismatches between fold models and the run config raise ConfigError on load.
    auto model = load_model(cfg, info.at("backbone").get<std::string>());
    const bool probe = info.at("scenario") == "probe";
    std::unique_ptr<LinearProbe> lp;
    std::unique_ptr<SequenceClassifier> clf;
    if (probe) {
      lp = std::make_unique<LinearProbe>(cfg.model.encoder.dim, 0);
      load_checkpoint(lp->params(), fold_dirs[m] / "probe");
    } else {
      clf = std::make_unique<SequenceClassifier>(*model, cfg.tcm, 0);
      clf->load(fold_dirs[m] / "finetune");
    }
    const TailPolicy tail = parse_tail_policy(cfg.finetune.tail_policy);
    for (const auto& r : target) {
      SubjectPrediction sp;
      sp.subject_id = r.subject_id;
      sp.truth = stage_labels(r);
      sp.probs = probe ? lp->predict_proba(embed_recordings(*model, {r})) : clf->predict(r, tail);
      members[m].push_back(std::move(sp));
    }
  });
  const auto result = soft_vote(members);
  const fs::path out_dir(a.out);
  fs::create_directories(out_dir);
  cfg.save(out_dir / "config.cfg");
  write_report_bundle(out_dir, {result}, {{"scenario", "crosseval"}, {"members", fold_dirs.size()}});
  write_run_info(out_dir, "crosseval", c);
  print_summary(out, "crosseval (" + std::to_string(fold_dirs.size()) + "-model soft vote)", {result});
  return kExitOk;
}

struct SweepArgs {
  std::string knob, values, data, out;
  std::size_t max_folds = 0, max_steps = 0;
};

int cmd_sweep(const SweepArgs& a, const Common& c, std::ostream& out) {
  setup_threads(c);
  const RunConfig cfg = resolve_config(c);
  const auto values = a.values.empty() ? default_sweep_values(a.knob) : split_csv(a.values);
  for (const auto& v : values) {  // fail fast on malformed values
    RunConfig probe = cfg;
    apply_sweep_value(probe, a.knob, v);
  }
  const auto data = load_data(a.data, cfg);
  SweepOptions so;
  so.max_folds = a.max_folds;
  so.pipeline = {a.max_steps, c.verbose};
  const auto rows = run_sweep(cfg, data, a.knob, values, a.out, so);
  write_run_info(a.out, "sweep", c);
  out << sweep_rows_csv(a.knob, rows);
  return kExitOk;
}

struct ReportArgs {
  std::string run, out;
};

int cmd_report(const ReportArgs& a, std::ostream& out) {
  const fs::path run(a.run);
  std::vector<fs::path> fold_dirs;
  if (!fs::is_directory(run)) throw IoError("run directory not found: " + a.run);
  for (const auto& e : fs::directory_iterator(run))
    if (e.is_directory() && fs::exists(e.path() / "predictions.json")) fold_dirs.push_back(e.path());
  std::sort(fold_dirs.begin(), fold_dirs.end());
  if (fold_dirs.empty()) throw IoError("no fold predictions under " + a.run);
  std::vector<ScenarioResult> results;
  for (const auto& d : fold_dirs) {
    std::ifstream in(d / "predictions.json");
    const auto j = nlohmann::json::parse(in);
    std::vector<SubjectPrediction> subjects;
    for (const auto& s : j) {
      SubjectPrediction sp;
      sp.subject_id = s.at("subject_id").get<std::string>();
      sp.truth = s.at("truth").get<std::vector<int>>();
      sp.pred = s.at("pred").get<std::vector<int>>();
      sp.probs = s.at("probs").get<std::vector<ProbRow>>();
      subjects.push_back(std::move(sp));
    }
    results.push_back(score_predictions(std::move(subjects)));
  }
  const fs::path out_dir = a.out.empty() ? run : fs::path(a.out);
  write_report_bundle(out_dir, results, {{"source", a.run}});
  if (fs::exists(run / "config.cfg") && out_dir != run) fs::copy_file(run / "config.cfg", out_dir / "config.cfg",
                                                                       fs::copy_options::overwrite_existing);
  print_summary(out, "report " + a.run, results);
  return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Self-supervised sleep staging from single-channel EEG", "neuronet"};
  app.require_subcommand(1);
  Common common;

  IngestArgs ingest;
  auto* s_ingest = app.add_subcommand("ingest", "Read EDF recordings into the epoch cache");
  s_ingest->add_option("--edf-dir", ingest.edf_dir, "Directory of EDF/EDF+ recordings")->required();
  s_ingest->add_option("--channel", ingest.channel, "EEG channel label (default from config)");
  s_ingest->add_option("--annotations-dir", ingest.annotations_dir, "Where <stem>.csv or hypnogram EDFs live");
  s_ingest->add_option("--out", ingest.out, "Cache directory (default $NEURONET_CACHE/<edf dir name>)");

  SynthArgs synth;
  auto* s_synth = app.add_subcommand("synth", "Generate a synthetic staged dataset");
  s_synth->add_option("--spec", synth.spec, "default | iid | markov");
  s_synth->add_option("--out", synth.out, "Output cache directory")->required();
  s_synth->add_option("--subjects", synth.subjects, "Number of subjects");
  s_synth->add_option("--epochs", synth.epochs, "Epochs per subject");
  s_synth->add_option("--synth-seed", synth.synth_seed, "Generator seed (default: --seed)");
  s_synth->add_flag("--edf", synth.edf, "Also export EDF + CSV annotations under <out>/edf");

  PretrainArgs pre;
  auto* s_pre = app.add_subcommand("pretrain", "Self-supervised pretraining");
  s_pre->add_option("--data", pre.data, "Cache directory")->required();
  s_pre->add_option("--out", pre.out, "Run directory")->required();
  s_pre->add_option("--fold", pre.fold, "Pretrain on this fold's training subjects only");
  s_pre->add_option("--max-steps", pre.max_steps, "Stop after this many optimiser steps (0 = full schedule)");

  FoldArgs probe, fine;
  auto add_fold_opts = [](CLI::App* s, FoldArgs& f) {
    s->add_option("--data", f.data, "Cache directory")->required();
    s->add_option("--out", f.out, "Run directory")->required();
    s->add_option("--pretrained", f.pretrained, "Pretrain run(s): <dir>/fold<k>/model or <dir>/model");
    s->add_option("--folds", f.folds, "Comma-separated fold indices (default all)");
    s->add_option("--max-steps", f.max_steps, "Pretraining step cap when pretraining inline");
  };
  auto* s_probe = app.add_subcommand("probe", "Scenario 1: linear probe on frozen embeddings");
  add_fold_opts(s_probe, probe);
  auto* s_fine = app.add_subcommand("finetune", "Scenario 2: last encoder block + temporal context model");
  add_fold_opts(s_fine, fine);

  CrossArgs cross;
  auto* s_cross = app.add_subcommand("crosseval", "Scenario 3: soft-voting ensemble on a foreign dataset");
  s_cross->add_option("--train-run", cross.train_run, "probe/finetune run directory")->required();
  s_cross->add_option("--target", cross.target, "Foreign cache directory")->required();
  s_cross->add_option("--out", cross.out, "Output directory")->required();

  SweepArgs sweep;
  auto* s_sweep = app.add_subcommand("sweep", "Ablation sweep written as CSV");
  s_sweep->add_option("--knob", sweep.knob, "mask_ratio | frame | decoder | context | alpha")
      ->required()
      ->check(CLI::IsMember(sweep_knobs()));
  s_sweep->add_option("--values", sweep.values, "Comma-separated values (default: the standard grid)");
  s_sweep->add_option("--data", sweep.data, "Cache directory")->required();
  s_sweep->add_option("--out", sweep.out, "Output directory")->required();
  s_sweep->add_option("--max-folds", sweep.max_folds, "Evaluate only the first N folds (0 = all)");
  s_sweep->add_option("--max-steps", sweep.max_steps, "Pretraining step cap per run (0 = full schedule)");

  ReportArgs report;
  auto* s_report = app.add_subcommand("report", "Rebuild metrics, confusion matrix and hypnograms of a run");
  s_report->add_option("--run", report.run, "probe/finetune run directory")->required();
  s_report->add_option("--out", report.out, "Output directory (default: the run directory)");

  for (auto* s : {s_ingest, s_synth, s_pre, s_probe, s_fine, s_cross, s_sweep, s_report}) add_common(s, common);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitValidation;
  }

  try {
    if (s_ingest->parsed()) return cmd_ingest(ingest, common, out);
    if (s_synth->parsed()) return cmd_synth(synth, common, out);
    if (s_pre->parsed()) return cmd_pretrain(pre, common, out);
    if (s_probe->parsed()) return cmd_scenario(probe, common, Scenario::Probe, out);
    if (s_fine->parsed()) return cmd_scenario(fine, common, Scenario::Finetune, out);
    if (s_cross->parsed()) return cmd_crosseval(cross, common, out);
    if (s_sweep->parsed()) return cmd_sweep(sweep, common, out);
    if (s_report->parsed()) return cmd_report(report, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  err << app.help();
  return kExitValidation;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace neuronet
