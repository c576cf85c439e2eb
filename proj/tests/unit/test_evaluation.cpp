#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "neuronet/cli.hpp"
#include "neuronet/edf.hpp"
#include "neuronet/evaluation.hpp"
#include "neuronet/pipeline.hpp"
#include "neuronet/report.hpp"
#include "neuronet/synth.hpp"
#include "test_support.hpp"

using namespace neuronet;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> names(std::size_t n) {
  std::vector<std::string> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back("s" + std::to_string(i));
  return v;
}

std::vector<StagedRecording> small_synth(const std::string& preset, std::size_t subjects, std::size_t epochs,
                                         std::uint64_t seed = 5) {
  auto spec = SynthSpec::preset(preset);
  spec.subjects = subjects;
  spec.epochs_per_subject = epochs;
  spec.seed = seed;
  return generate(spec);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Snapshot of every backbone parameter value, keyed by name.
std::map<std::string, std::vector<double>> snapshot(NeuroNetModel& m) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& e : m.params().entries()) out[e.name] = e.var.value().data;
  return out;
}

}  // namespace

TEST_SUITE("evaluation") {
  TEST_CASE("subject k-fold sizes, disjointness and seed stability") {
    const auto folds = split_subject_kfold(names(10), 5, 1, 3);
    REQUIRE(folds.size() == 5);
    std::multiset<std::string> tested;
    for (const auto& f : folds) {
      CHECK(f.test.size() == 2);
      CHECK(f.val.size() == 1);
      CHECK(f.train.size() == 7);
      std::set<std::string> all(f.train.begin(), f.train.end());
      for (const auto& s : f.val) CHECK(all.insert(s).second);
      for (const auto& s : f.test) CHECK(all.insert(s).second);
      CHECK(all.size() == 10);
      tested.insert(f.test.begin(), f.test.end());
    }
    // Every subject is tested exactly once.
    CHECK(tested.size() == 10);
    CHECK(std::set<std::string>(tested.begin(), tested.end()).size() == 10);

    auto shuffled = names(10);
    std::reverse(shuffled.begin(), shuffled.end());
    const auto again = split_subject_kfold(shuffled, 5, 1, 3);
    for (std::size_t f = 0; f < 5; ++f) {
      CHECK(again[f].test == folds[f].test);
      CHECK(again[f].val == folds[f].val);
    }
    const auto other = split_subject_kfold(names(10), 5, 1, 4);
    bool differs = false;
    for (std::size_t f = 0; f < 5; ++f) differs = differs || other[f].test != folds[f].test;
    CHECK(differs);

    const auto uneven = split_subject_kfold(names(11), 3, 2, 0);
    CHECK(uneven[0].test.size() == 4);
    CHECK(uneven[2].test.size() == 3);
    CHECK_THROWS_AS(split_subject_kfold(names(5), 5, 1, 0), ConfigError);
    CHECK_THROWS_AS(split_subject_kfold(names(5), 1, 0, 0), ConfigError);
    CHECK_THROWS_AS(split_subject_kfold({"a", "a", "b", "c"}, 2, 0, 0), ConfigError);
  }

  TEST_CASE("soft-voting ensemble") {
    ProbRow a{}, b{};
    a[0] = 0.6;
    a[1] = 0.4;
    b[0] = 0.2;
    b[1] = 0.8;
    const auto avg = ensemble_average({{a}, {b}});
    CHECK(avg[0][0] == doctest::Approx(0.4));
    CHECK(avg[0][1] == doctest::Approx(0.6));

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<std::vector<ProbRow>> members(5, std::vector<ProbRow>(7));
    for (auto& m : members)
      for (auto& row : m)
        for (auto& p : row) p = u(rng);
    const auto ref = ensemble_average(members);
    std::sort(members.begin(), members.end());
    do {
      CHECK(ensemble_average(members) == ref);  // bitwise
    } while (std::next_permutation(members.begin(), members.end()));

    SubjectPrediction p1{"x", {0, 1}, {}, {a, a}}, p2{"x", {0, 1}, {}, {b, b}};
    const auto vote = soft_vote({{p1}, {p2}});
    CHECK(vote.subjects[0].pred == std::vector<int>{1, 1});
    CHECK(vote.metrics.acc == doctest::Approx(0.5));
    CHECK_THROWS(ensemble_average({}));
  }

  TEST_CASE("normalisation scopes") {
    const auto recs = small_synth("iid", 2, 4);
    const auto none = apply_normalization(recs, "none");
    CHECK(none[0].samples == recs[0].samples);
    const auto rec = apply_normalization(recs, "recording");
    double m = 0;
    for (float x : rec[1].samples) m += x;
    CHECK(std::abs(m / static_cast<double>(rec[1].samples.size())) < 1e-5);
    const auto ep = apply_normalization(recs, "epoch");
    for (std::size_t e = 0; e < 4; ++e) {
      const auto x = ep[0].epoch(e);
      double s = 0, ss = 0;
      for (float v : x) {
        s += v;
        ss += static_cast<double>(v) * v;
      }
      const double n = static_cast<double>(x.size());
      CHECK(std::abs(s / n) < 1e-5);
      CHECK(ss / n == doctest::Approx(1.0).epsilon(1e-4));
    }
    CHECK_THROWS_AS(apply_normalization(recs, "global"), ConfigError);
  }

  TEST_CASE("scenario 1 leaves the backbone untouched") {
    auto data = apply_normalization(small_synth("iid", 3, 10), "recording");
    NeuroNetModel model(testsupport::tiny_model_config(), 3);
    const auto before = snapshot(model);
    ProbeConfig pc;
    pc.epochs = 20;
    pc.batch_size = 8;
    pc.lr = 1e-2;
    const auto r = run_scenario1(model, {data[0], data[1]}, {data[2]}, pc, 1);
    CHECK(snapshot(model) == before);
    CHECK(r.train_loss.size() == 20);
    CHECK(r.train_loss.back() < r.train_loss.front());
    CHECK(r.subjects.size() == 1);
    CHECK(r.metrics.count == 10);
    for (const auto& row : r.subjects[0].probs) {
      double s = 0;
      for (double p : row) s += p;
      CHECK(s == doctest::Approx(1.0));
    }
    pc.epochs = 0;
    const auto r0 = run_scenario1(model, {data[0]}, {data[2]}, pc, 1);
    CHECK(r0.train_loss.empty());
    CHECK(r0.metrics.count == 10);
  }

  TEST_CASE("scenario 2 trains only the last encoder block and the head") {
    auto data = apply_normalization(small_synth("markov", 2, 12), "recording");
    NeuroNetModel model(testsupport::tiny_model_config(), 4);
    const auto before = snapshot(model);
    TcmConfig tc;
    tc.blocks = 1;
    tc.heads = 2;
    tc.context_length = 5;
    tc.mamba = {4, 3, 2};
    FinetuneConfig fc;
    fc.epochs = 2;
    fc.batch_size = 4;
    std::unique_ptr<SequenceClassifier> clf;
    const auto r = run_scenario2(model, {data[0]}, {data[1]}, tc, fc, 2, &clf);
    CHECK(r.metrics.count == 12);
    CHECK(r.train_loss.size() == 2);
    const std::string last = model.encoder().block_prefix(model.encoder().depth() - 1);
    const auto after = snapshot(model);
    bool last_moved = false;
    for (const auto& [name, v] : before) {
      if (name.rfind(last, 0) == 0)
        last_moved = last_moved || after.at(name) != v;
      else
        CHECK_MESSAGE(after.at(name) == v, name);
    }
    CHECK(last_moved);

    testsupport::TempDir dir("clf");
    clf->save(dir.path / "ft", {});
    NeuroNetModel fresh(testsupport::tiny_model_config(), 4);
    SequenceClassifier clf2(fresh, tc, 99);
    clf2.load(dir.path / "ft");
    CHECK(clf2.predict(data[1], TailPolicy::Backfill) == clf->predict(data[1], TailPolicy::Backfill));
  }

  TEST_CASE("helpers") {
    CHECK(inverse_frequency_weights({0, 0, 0, 1}) ==
          std::vector<double>{4.0 / (5 * 3), 4.0 / (5 * 1), 0, 0, 0});
    double logits[5] = {1000, 1000, 0, 0, 0};
    const auto p = softmax_row(logits);
    CHECK(p[0] == doctest::Approx(0.5));
    CHECK(std::isfinite(p[2]));
    const auto recs = small_synth("iid", 3, 2);
    CHECK(select_subjects(recs, {recs[2].subject_id})[0].subject_id == recs[2].subject_id);
    CHECK_THROWS_AS(select_subjects(recs, {"nobody"}), ConfigError);
  }
}

TEST_SUITE("report") {
  TEST_CASE("hypnogram CSV and SVG") {
    const std::vector<int> truth{0, 0, 1, 2, 3, 4}, pred{0, 1, 1, 2, 4, 4};
    const auto csv = hypnogram_csv(truth, pred);
    CHECK(csv.rfind("epoch_idx,truth,pred\n", 0) == 0);
    CHECK(csv.find("1,W,N1\n") != std::string::npos);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);

    const auto svg = hypnogram_svg(truth, pred, "t");
    std::vector<std::size_t> label_pos;
    for (const char* s : {">W<", ">REM<", ">N1<", ">N2<", ">N3<"}) label_pos.push_back(svg.find(s));
    for (std::size_t i = 0; i + 1 < label_pos.size(); ++i) CHECK(label_pos[i] < label_pos[i + 1]);
    std::size_t errors = 0;
    for (std::size_t pos = 0; (pos = svg.find("class=\"error\"", pos)) != std::string::npos; ++pos) ++errors;
    CHECK(errors == 2);
    CHECK(svg.find("fill=\"red\"") != std::string::npos);
    CHECK_THROWS_AS(hypnogram_csv({0}, {0, 1}), ShapeError);
  }

  TEST_CASE("fold summary and bundle") {
    const auto a = compute_metrics({0, 1}, {0, 1}), b = compute_metrics({0, 1}, {0, 0});
    const auto j = summarize_folds({a, b});
    CHECK(j["folds"].size() == 2);
    CHECK(j["summary"]["acc"]["mean"].get<double>() == doctest::Approx(0.75));
    CHECK(j["summary"]["acc"]["std"].get<double>() == doctest::Approx(0.25));
    CHECK(confusion_csv(b.confusion).find("W,1,0,0,0,0") != std::string::npos);

    testsupport::TempDir dir("report");
    ScenarioResult r = score_predictions({SubjectPrediction{"subj", {0, 1}, {0, 0}, {}}});
    write_report_bundle(dir.path, {r});
    CHECK(fs::exists(dir.path / "metrics.json"));
    CHECK(fs::exists(dir.path / "confusion.csv"));
    CHECK(fs::exists(dir.path / "hypnogram_subj.svg"));
  }
}

TEST_SUITE("synth") {
  TEST_CASE("regeneration is byte-identical") {
    const auto a = small_synth("markov", 2, 6, 11), b = small_synth("markov", 2, 6, 11);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(a[i].samples == b[i].samples);
      CHECK(a[i].labels == b[i].labels);
    }
    CHECK(small_synth("markov", 2, 6, 12)[0].samples != a[0].samples);
  }

  TEST_CASE("stage spectra follow their recipes") {
    auto spec = SynthSpec::preset("iid");
    spec.subjects = 1;
    spec.epochs_per_subject = 60;
    const auto rec = generate(spec)[0];
    double n3_ratio = 0, w_ratio = 0;
    int n3 = 0, w = 0;
    for (std::size_t e = 0; e < rec.num_epochs(); ++e) {
      const auto x = rec.epoch(e);
      const std::vector<double> v(x.begin(), x.end());
      const double delta = testsupport::band_power(v, 100, 0.5, 4), alpha = testsupport::band_power(v, 100, 8, 12);
      if (rec.labels[e] == Stage::N3) {
        n3_ratio += delta / alpha;
        ++n3;
      } else if (rec.labels[e] == Stage::W) {
        w_ratio += delta / alpha;
        ++w;
      }
    }
    REQUIRE(n3 > 0);
    REQUIRE(w > 0);
    CHECK(n3_ratio / n3 > 3);
    CHECK(w_ratio / w < 1.0 / 3.0);
  }

  TEST_CASE("markov stage runs") {
    const auto spec = SynthSpec::preset("markov");
    const auto seq = sample_stage_sequence(spec, 10000, 3);
    std::size_t runs = 1;
    for (std::size_t i = 1; i < seq.size(); ++i) runs += seq[i] != seq[i - 1];
    const double mean_run = 10000.0 / static_cast<double>(runs);
    CHECK(std::abs(mean_run - 10.0) < 2.0);
    std::array<int, kNumStages> counts{};
    for (Stage s : sample_stage_sequence(SynthSpec::preset("iid"), 10000, 3)) ++counts[stage_index(s)];
    for (int c : counts) CHECK(std::abs(c - 2000) < 200);
  }

  TEST_CASE("EDF export re-parses within quantisation") {
    const auto recs = small_synth("iid", 1, 3);
    testsupport::TempDir dir("synth_edf");
    export_edf(recs, dir.path);
    const auto file = edf::read_edf(dir.path / (recs[0].subject_id + ".edf"));
    const auto idx = file.find_signal("EEG Fpz-Cz");
    const auto& phys = file.physical[idx];
    REQUIRE(phys.size() == recs[0].samples.size());
    const auto& s = file.header.signals[idx];
    const double step = s.gain();
    double worst = 0;
    for (std::size_t i = 0; i < phys.size(); ++i) worst = std::max(worst, std::abs(phys[i] - recs[0].samples[i]));
    CHECK(worst <= step);
    CHECK(fs::exists(dir.path / (recs[0].subject_id + ".csv")));
  }

  TEST_CASE("spec validation") {
    CHECK_THROWS_AS(SynthSpec::preset("nope"), ConfigError);
    auto s = SynthSpec::preset("iid");
    s.stage_probs = {0.5, 0.5, 0.5, 0, 0};
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = SynthSpec::preset("iid");
    s.atypical_prob = 1;
    CHECK_THROWS_AS(s.validate(), ConfigError);
  }
}

TEST_SUITE("config") {
  TEST_CASE("parse, override and round trip") {
    const auto c = RunConfig::parse("# comment\npreset = desk\nencoder.depth = 2\nmask.ratio = 0.5\n");
    CHECK(c.model.encoder.depth == 2);
    CHECK(c.model.encoder.dim == 64);
    CHECK(c.model.mask_ratio == 0.5);
    const auto back = RunConfig::parse(c.to_text());
    CHECK(back.to_text() == c.to_text());
    for (const auto& k : RunConfig::keys()) CHECK_NOTHROW(c.get(k));
    auto d = RunConfig::preset("T");
    d.set("tcm.model", "lstm");
    CHECK(d.get("tcm.model") == "lstm");
    CHECK(RunConfig::preset("B").model.encoder.dim > RunConfig::preset("T").model.encoder.dim);
  }

  TEST_CASE("errors") {
    CHECK_THROWS_AS(RunConfig::parse("no_such.key = 1\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("encoder.depth = two\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("just words\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("preset = huge\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("mask.ratio = 1.5\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("encoder.heads = 7\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::load("/nonexistent/x.cfg"), IoError);
  }
}

TEST_SUITE("cli") {
  TEST_CASE("bad flags exit with a validation error") {
    std::ostringstream out, err;
    CHECK(dispatch({"synth", "--bogus"}, out, err) == kExitValidation);
    CHECK(dispatch({}, out, err) == kExitValidation);
    std::ostringstream out2, err2;
    CHECK(dispatch({"pretrain", "--data", "/nonexistent", "--out", "/tmp/x", "--set", "oops"}, out2, err2) ==
          kExitValidation);
    std::ostringstream out3, err3;
    CHECK(dispatch({"probe", "--data", "/nonexistent/data", "--out", "/tmp/nn_never"}, out3, err3) == kExitRuntime);
  }

  TEST_CASE("the binary prints usage on a bad flag") {
    testsupport::TempDir dir("cli_usage");
    const auto log = dir.path / "log.txt";
    const std::string cmd = std::string(NEURONET_CLI_PATH) + " synth --bogus > " + log.string() + " 2>&1";
    const int rc = std::system(cmd.c_str());
    CHECK(WEXITSTATUS(rc) == 1);
    CHECK(slurp(log).find("--spec") != std::string::npos);
  }

  TEST_CASE("synth, pretrain and sweep smoke run") {
    testsupport::TempDir dir("cli_smoke");
    const auto cfg = dir.path / "tiny.cfg";
    std::ofstream(cfg) << testsupport::tiny_run_config_text();
    const std::string data = (dir.path / "data").string(), c = cfg.string();
    std::ostringstream out, err;
    REQUIRE(dispatch({"synth", "--spec", "markov", "--out", data, "--subjects", "4", "--epochs", "12", "--edf"}, out,
                     err) == kExitOk);
    CHECK(fs::exists(fs::path(data) / "edf"));

    const std::string run = (dir.path / "pre").string();
    REQUIRE(dispatch({"pretrain", "--config", c, "--data", data, "--out", run, "--deterministic"}, out, err) ==
            kExitOk);
    CHECK(fs::exists(fs::path(run) / "config.cfg"));
    CHECK(RunConfig::load(fs::path(run) / "config.cfg").model.encoder.dim == 16);
    std::istringstream log(slurp(fs::path(run) / "train_log.jsonl"));
    std::string line;
    std::size_t lines = 0;
    while (std::getline(log, line)) {
      CHECK(nlohmann::json::parse(line).contains("l_total"));
      ++lines;
    }
    CHECK(lines == 6);  // 48 epochs / batch 8, one pretraining epoch

    const std::string sweep = (dir.path / "sweep").string();
    REQUIRE(dispatch({"sweep", "--config", c, "--knob", "context", "--values", "10,20,30", "--data", data, "--out",
                      sweep, "--max-folds", "1", "--max-steps", "1"},
                     out, err) == kExitOk);
    std::istringstream csv(slurp(fs::path(sweep) / "table7.csv"));
    std::vector<std::string> rows;
    while (std::getline(csv, line)) rows.push_back(line);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].rfind("context,acc,mf1", 0) == 0);
    CHECK(rows[1].rfind("10,", 0) == 0);
    CHECK(rows[3].rfind("30,", 0) == 0);
  }
}
