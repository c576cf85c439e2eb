#include <cmath>
#include <random>

#include "doctest.h"
#include "neuronet/tcm.hpp"
#include "test_support.hpp"

using namespace neuronet;
using testsupport::random_tensor;

namespace {

struct ScanInputs {
  Tensor x, delta, a, bs, cs, d;
};

// A < 0 and delta > 0 as produced by the Mamba block (A = -exp(A_log),
// delta = softplus(.)), so the recurrence is stable.
ScanInputs random_scan(std::size_t b, std::size_t l, std::size_t di, std::size_t ds, std::mt19937_64& rng) {
  ScanInputs s;
  s.x = random_tensor({b, l, di}, rng);
  s.delta = random_tensor({b, l, di}, rng, 0.01, 1.0);
  s.a = random_tensor({di, ds}, rng, -2.0, -0.05);
  s.bs = random_tensor({b, l, ds}, rng);
  s.cs = random_tensor({b, l, ds}, rng);
  s.d = random_tensor({di}, rng);
  return s;
}

Tensor scan_value(const ScanInputs& s) {
  return selective_scan(ag::constant(s.x), ag::constant(s.delta), ag::constant(s.a), ag::constant(s.bs),
                        ag::constant(s.cs), ag::constant(s.d))
      .value();
}

}  // namespace

TEST_SUITE("tcm") {
  TEST_CASE("selective scan matches the step-by-step oracle") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t b = 1 + rng() % 3, l = 1 + rng() % 40, di = 1 + rng() % 6, ds = 1 + rng() % 16;
      const auto s = random_scan(b, l, di, ds, rng);
      const auto y = scan_value(s);
      const auto ref = testsupport::selective_scan_naive(s.x, s.delta, s.a, s.bs, s.cs, s.d);
      REQUIRE(y.shape == ref.shape);
      for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-12));
      for (std::size_t chunk : {std::size_t{1}, std::size_t{3}, std::size_t{16}, l + 5}) {
        const auto yc = selective_scan_chunked(s.x, s.delta, s.a, s.bs, s.cs, s.d, chunk);
        for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(yc[i] - y[i]) <= 1e-9);
      }
    }
  }

  TEST_CASE("L = 1 reduces to delta * <B, C> * x + D * x") {
    std::mt19937_64 rng(2);
    const auto s = random_scan(1, 1, 2, 3, rng);
    const auto y = scan_value(s);
    for (std::size_t i = 0; i < 2; ++i) {
      double bc = 0;
      for (std::size_t n = 0; n < 3; ++n) bc += s.bs[n] * s.cs[n];
      CHECK(y[i] == doctest::Approx(s.delta[i] * bc * s.x[i] + s.d[i] * s.x[i]));
    }
  }

  TEST_CASE("scan causality") {
    std::mt19937_64 rng(3);
    const auto s = random_scan(1, 8, 3, 4, rng);
    const auto y = scan_value(s);
    for (std::size_t t = 0; t < 8; ++t) {
      auto p = s;
      for (std::size_t i = 0; i < 3; ++i) {
        p.x[t * 3 + i] += 1.0;
        p.delta[t * 3 + i] += 0.3;
      }
      for (std::size_t n = 0; n < 4; ++n) {
        p.bs[t * 4 + n] += 1.0;
        p.cs[t * 4 + n] -= 1.0;
      }
      const auto yp = scan_value(p);
      for (std::size_t u = 0; u < t; ++u)
        for (std::size_t i = 0; i < 3; ++i) CHECK(yp[u * 3 + i] == y[u * 3 + i]);
      bool changed = false;
      for (std::size_t i = 0; i < 3; ++i) changed = changed || yp[t * 3 + i] != y[t * 3 + i];
      CHECK(changed);
    }
  }

  TEST_CASE("selective scan gradients") {
    std::mt19937_64 rng(4);
    const auto s = random_scan(2, 6, 3, 4, rng);
    auto x = ag::parameter(s.x), dl = ag::parameter(s.delta), a = ag::parameter(s.a), bs = ag::parameter(s.bs),
         cs = ag::parameter(s.cs), d = ag::parameter(s.d);
    std::mt19937_64 wr(5);
    const auto w = ag::constant(random_tensor({2, 6, 3}, wr));
    auto g = testsupport::gradcheck({x, dl, a, bs, cs, d},
                                    [&] { return ag::sum(ag::mul(selective_scan(x, dl, a, bs, cs, d), w)); });
    CHECK_MESSAGE(g.max_rel_err < 1e-5, g.worst);
    CHECK_THROWS_AS(selective_scan(x, ag::constant(Tensor({2, 5, 3})), a, bs, cs, d), ShapeError);
  }

  TEST_CASE("temporal context model variants: shapes and causality") {
    for (const char* model : {"mamba", "lstm", "attention", "lstm_attention"}) {
      CAPTURE(model);
      TcmConfig cfg;
      cfg.model = model;
      cfg.blocks = 1;
      cfg.heads = 2;
      cfg.mamba = {4, 3, 2};
      cfg.context_length = 6;
      nn::ParamSet ps;
      nn::Rng rng(6);
      auto tcm = make_tcm(ps, "t.", 8, cfg, rng);
      std::mt19937_64 r(7);
      auto seq = random_tensor({2, 6, 8}, r);
      const auto y = tcm->forward(ag::constant(seq)).value();
      CHECK(y.shape == Shape{2, 6, 5});
      auto changed = seq;
      for (std::size_t d = 0; d < 8; ++d) changed[(0 * 6 + 5) * 8 + d] += 1.0;
      const auto y2 = tcm->forward(ag::constant(changed)).value();
      bool earlier_same = true;
      for (std::size_t t = 0; t < 5; ++t)
        for (std::size_t c = 0; c < 5; ++c) earlier_same = earlier_same && y2[t * 5 + c] == y[t * 5 + c];
      const std::string m = model;
      // Recurrent variants are causal; attention sees the whole window.
      CHECK(earlier_same == (m == "mamba" || m == "lstm"));
      // Other samples in the batch are unaffected.
      for (std::size_t i = 30; i < 60; ++i) CHECK(y2[i] == doctest::Approx(y[i]).epsilon(1e-12));
      CHECK(tcm_classify(*tcm, cfg, ag::constant(Tensor({6, 8}))).shape() == Shape{6, 5});
      CHECK_THROWS_AS(tcm_classify(*tcm, cfg, ag::constant(Tensor({5, 8}))), ShapeError);
    }
  }

  TEST_CASE("mamba block gradcheck") {
    TcmConfig cfg;
    cfg.blocks = 1;
    cfg.mamba = {3, 2, 2};
    nn::ParamSet ps;
    nn::Rng rng(8);
    auto tcm = make_tcm(ps, "t.", 4, cfg, rng);
    std::mt19937_64 r(9);
    auto x = ag::parameter(random_tensor({1, 5, 4}, r));
    auto leaves = ps.trainable();
    leaves.push_back(x);
    std::mt19937_64 wr(10);
    const auto w = ag::constant(random_tensor({1, 5, 5}, wr));
    auto g = testsupport::gradcheck(leaves, [&] { return ag::sum(ag::mul(tcm->forward(x), w)); }, 1e-6, 6, 1,
                                    1e-4);
    CHECK_MESSAGE(g.max_rel_err < 1e-4, g.worst);
  }

  TEST_CASE("config validation") {
    TcmConfig cfg;
    CHECK_NOTHROW(cfg.validate(64));
    cfg.model = "gru";
    CHECK_THROWS_AS(cfg.validate(64), ConfigError);
    cfg.model = "attention";
    cfg.heads = 3;
    CHECK_THROWS_AS(cfg.validate(64), ConfigError);
    cfg.heads = 8;
    cfg.output_mode = "one2one";
    CHECK_THROWS_AS(cfg.validate(64), ConfigError);
  }

  TEST_CASE("inference windows cover each epoch exactly once") {
    const auto w = inference_windows(45, 20, TailPolicy::Backfill);
    REQUIRE(w.size() == 3);
    CHECK(w[0].epochs.front() == 0);
    CHECK(w[0].epochs.back() == 19);
    CHECK(w[1].epochs.front() == 20);
    CHECK(w[1].epochs.back() == 39);
    CHECK(w[2].epochs.front() == 25);
    CHECK(w[2].epochs.back() == 44);
    CHECK(w[2].keep_from == 15);
    for (std::size_t n : {1u, 7u, 20u, 21u, 45u, 100u})
      for (auto tail : {TailPolicy::Backfill, TailPolicy::RepeatFirst}) {
        std::vector<int> hits(n, 0);
        for (const auto& win : inference_windows(n, 20, tail)) {
          CHECK(win.epochs.size() == 20);
          for (std::size_t j = win.keep_from; j < 20; ++j) ++hits[win.epochs[j]];
        }
        for (int h : hits) CHECK(h == 1);
      }
    const auto rf = inference_windows(45, 20, TailPolicy::RepeatFirst);
    CHECK(rf[2].keep_from == 15);
    CHECK(rf[2].epochs[0] == 40);
    CHECK(rf[2].epochs[14] == 40);
    CHECK(rf[2].epochs[19] == 44);
    CHECK(parse_tail_policy("repeat_first") == TailPolicy::RepeatFirst);
    CHECK_THROWS_AS(parse_tail_policy("wrap"), ConfigError);
  }

  TEST_CASE("training and trailing windows") {
    const auto t = training_windows(45, 20, 5);
    CHECK(t.size() == 6);  // starts 0,5,...,25
    CHECK(t.back().epochs.back() == 44);
    const auto t2 = training_windows(47, 20, 5);
    CHECK(t2.back().epochs.front() == 27);  // flush window
    const auto s = training_windows(7, 20, 5);
    REQUIRE(s.size() == 1);
    CHECK(s[0].keep_from == 13);
    CHECK(training_windows(0, 20, 5).empty());
    const auto tr = trailing_windows(4, 3);
    REQUIRE(tr.size() == 4);
    CHECK(tr[0].epochs == std::vector<std::size_t>{0, 0, 0});
    CHECK(tr[3].epochs == std::vector<std::size_t>{1, 2, 3});
  }
}
