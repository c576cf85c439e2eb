#include <algorithm>
#include <random>
#include <set>

#include "doctest.h"
#include "neuronet/contrastive.hpp"
#include "neuronet/mae.hpp"
#include "test_support.hpp"

using namespace neuronet;
using testsupport::random_tensor;

namespace {

struct Tiny {
  nn::ParamSet ps;
  nn::Rng rng{7};
  Encoder enc;
  Decoder dec;
  explicit Tiny(std::size_t depth = 2) {
    enc = Encoder(ps, "enc.", 6, {8, depth, 2, 2}, rng);
    dec = Decoder(ps, "dec.", 8, 6, {4, 1, 2, 2}, rng);
  }
};

}  // namespace

TEST_SUITE("mae") {
  TEST_CASE("mask plans: counts, disjointness, determinism") {
    CHECK(kept_count(37, 0.75) == 9);
    CHECK(kept_count(2, 0.75) == 1);
    CHECK(kept_count(10, 0.99) == 1);  // never drops every frame
    CHECK(kept_count(10, 0.01) == 9);  // never keeps every frame
    CHECK_THROWS_AS(kept_count(1, 0.5), ConfigError);
    CHECK_THROWS_AS(kept_count(10, 1.0), ConfigError);
    const auto p = sample_mask(37, 0.75, 123);
    CHECK(p.kept.size() == 9);
    CHECK(p.masked.size() == 28);
    std::set<std::size_t> all(p.kept.begin(), p.kept.end());
    all.insert(p.masked.begin(), p.masked.end());
    CHECK(all.size() == 37);
    CHECK(std::is_sorted(p.kept.begin(), p.kept.end()));
    CHECK(sample_mask(37, 0.75, 123).kept == p.kept);
    CHECK(derive_seed(1, 2, 1) != derive_seed(1, 2, 2));
    CHECK(derive_seed(1, 2, 1) == derive_seed(1, 2, 1));
    // Uniformity: every frame is kept about k/M of the time.
    std::vector<int> hits(37, 0);
    for (std::uint64_t s = 0; s < 3700; ++s)
      for (auto i : sample_mask(37, 0.75, derive_seed(5, s, 1)).kept) ++hits[i];
    for (int h : hits) CHECK(std::abs(h - 900) < 150);
  }

  TEST_CASE("encoder sees only kept frames and carries their original positions") {
    Tiny t;
    std::mt19937_64 r(1);
    auto z = random_tensor({2, 10, 6}, r);
    std::vector<MaskPlan> plans = {sample_mask(10, 0.7, 1), sample_mask(10, 0.7, 2)};
    PositionTrace trace;
    const auto h = t.enc(ag::constant(z), plans, &trace).value();
    CHECK(h.shape == Shape{2, 4, 8});
    CHECK(trace.positions.size() == 6);
    CHECK(trace.positions[0] == plans[0].kept[0]);
    for (std::size_t j = 0; j < 6; ++j) {
      const auto code = nn::sinusoidal_position(trace.positions[j], 8);
      for (std::size_t d = 0; d < 8; ++d) CHECK(trace.codes.at(j, d) == doctest::Approx(code[d]));
    }
    // Changing a masked frame leaves the encoder output untouched.
    auto z2 = z;
    for (std::size_t d = 0; d < 6; ++d) z2[(0 * 10 + plans[0].masked[0]) * 6 + d] += 10;
    CHECK(t.enc(ag::constant(z2), plans).value().data == h.data);
  }

  TEST_CASE("kept-order permutation permutes tokens and leaves the class token") {
    Tiny t;
    std::mt19937_64 r(2);
    auto z = ag::constant(random_tensor({1, 10, 6}, r));
    auto plan = sample_mask(10, 0.6, 9);
    const auto h = t.enc(z, {plan}).value();
    auto perm = plan;
    std::reverse(perm.kept.begin(), perm.kept.end());
    const auto hp = t.enc(z, {perm}).value();
    const std::size_t k = plan.kept.size();
    for (std::size_t d = 0; d < 8; ++d) CHECK(hp[d] == doctest::Approx(h[d]).epsilon(1e-12));
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t d = 0; d < 8; ++d)
        CHECK(hp[(1 + j) * 8 + d] == doctest::Approx(h[(1 + k - 1 - j) * 8 + d]).epsilon(1e-12));
  }

  TEST_CASE("dual paths share weights but not state") {
    Tiny t;
    std::mt19937_64 r(3);
    auto z = ag::constant(random_tensor({2, 10, 6}, r));
    std::vector<MaskPlan> p1 = {sample_mask(10, 0.7, 1), sample_mask(10, 0.7, 2)};
    std::vector<MaskPlan> p2 = {sample_mask(10, 0.7, 3), sample_mask(10, 0.7, 4)};
    const auto a1 = t.enc(z, p1).value();
    const auto b = t.enc(z, p2).value();
    const auto a2 = t.enc(z, p1).value();
    CHECK(a1.data == a2.data);  // running path 2 in between changed nothing
    CHECK(a1.data != b.data);
  }

  TEST_CASE("staged encoder evaluation agrees with the full pass") {
    Tiny t(3);
    std::mt19937_64 r(4);
    auto z = ag::constant(random_tensor({2, 10, 6}, r));
    const std::vector<MaskPlan> plans(2, full_plan(10));
    const auto full = t.enc(z, plans).value();
    for (std::size_t first = 0; first <= 3; ++first) {
      const auto tok = t.enc.tokens_before(z, plans, first);
      const auto h = t.enc.run_blocks(tok, first).value();
      CHECK(h.data == full.data);
      const auto cls = t.enc.class_token_from(tok, first).value();
      REQUIRE(cls.shape == Shape{2, 8});
      for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t d = 0; d < 8; ++d) CHECK(cls[b * 8 + d] == doctest::Approx(full[(b * 11) * 8 + d]).epsilon(1e-12));
    }
  }

  TEST_CASE("zero-depth encoder is projection plus positions") {
    Tiny t(0);
    std::mt19937_64 r(5);
    auto z = ag::constant(random_tensor({1, 4, 6}, r));
    const auto h = t.enc(z, {full_plan(4)});
    CHECK(h.shape() == Shape{1, 5, 8});
    CHECK(t.enc.depth() == 0);
  }

  TEST_CASE("decoder restores every position with mask tokens at masked slots") {
    Tiny t;
    std::mt19937_64 r(6);
    auto plan = sample_mask(10, 0.7, 11);
    auto lat = ag::constant(random_tensor({1, plan.kept.size(), 8}, r));
    PositionTrace trace;
    const auto out = t.dec(lat, {plan}, &trace);
    CHECK(out.shape() == Shape{1, 10, 6});
    CHECK(trace.positions.size() == 10);
    CHECK_THROWS_AS(t.dec(ag::constant(Tensor({1, 2, 8})), {plan}), ShapeError);
  }

  TEST_CASE("reconstruction loss contract") {
    // Hand case: M = 2, one masked frame, scalar embeddings 0 vs 2 -> 4.
    MaskPlan p;
    p.kept = {0};
    p.masked = {1};
    auto z = ag::parameter(Tensor({1, 2, 1}, {5.0, 0.0}));
    auto rr = ag::parameter(Tensor({1, 2, 1}, {-3.0, 2.0}));
    auto loss = reconstruction_loss(z, rr, {p});
    CHECK(loss.item() == doctest::Approx(4.0));
    ag::backward(loss);
    CHECK(rr.grad()[0] == 0.0);  // kept row: exactly zero
    CHECK(rr.grad()[1] == doctest::Approx(4.0));
    CHECK_FALSE(z.has_grad());  // stop-gradient on targets

    auto z2 = ag::parameter(Tensor({1, 2, 1}, {5.0, 0.0}));
    auto rr2 = ag::parameter(Tensor({1, 2, 1}, {-3.0, 2.0}));
    ag::backward(reconstruction_loss(z2, rr2, {p}, false));
    CHECK(z2.grad()[1] == doctest::Approx(-4.0));
    CHECK(z2.grad()[0] == 0.0);

    // Perfect reconstruction scores 0.
    CHECK(reconstruction_loss(z, ag::constant(z.value()), {p}).item() == 0.0);
    // Averaged over samples, masked count and width.
    std::mt19937_64 r(7);
    auto a = random_tensor({3, 5, 4}, r), b = random_tensor({3, 5, 4}, r);
    std::vector<MaskPlan> plans = {sample_mask(5, 0.6, 1), sample_mask(5, 0.6, 2), sample_mask(5, 0.6, 3)};
    double ref = 0;
    for (std::size_t n = 0; n < 3; ++n)
      for (auto i : plans[n].masked)
        for (std::size_t d = 0; d < 4; ++d) ref += std::pow(a[(n * 5 + i) * 4 + d] - b[(n * 5 + i) * 4 + d], 2);
    ref /= 3.0 * 3.0 * 4.0;
    CHECK(reconstruction_loss(ag::constant(a), ag::constant(b), plans).item() == doctest::Approx(ref));
  }

  TEST_CASE("split class token") {
    auto h = ag::constant(Tensor({2, 3, 1}, {1, 2, 3, 4, 5, 6}));
    auto [cls, rest] = split_class_token(h);
    CHECK(cls.value().data == std::vector<double>{1, 4});
    CHECK(rest.value().data == std::vector<double>{2, 3, 5, 6});
    CHECK(rest.shape() == Shape{2, 2, 1});
  }
}

TEST_SUITE("contrastive") {
  TEST_CASE("nt_xent matches the pairwise oracle") {
    std::mt19937_64 r(8);
    for (std::size_t n : {2u, 5u, 16u}) {
      auto a = random_tensor({n, 7}, r), b = random_tensor({n, 7}, r);
      std::vector<std::vector<double>> va(n), vb(n);
      for (std::size_t i = 0; i < n; ++i) {
        va[i].assign(a.data.begin() + i * 7, a.data.begin() + (i + 1) * 7);
        vb[i].assign(b.data.begin() + i * 7, b.data.begin() + (i + 1) * 7);
      }
      for (double tau : {0.1, 0.5, 1.0}) {
        const double got = nt_xent(ag::l2_normalize_rows(ag::constant(a)), ag::l2_normalize_rows(ag::constant(b)), tau).item();
        CHECK(got == doctest::Approx(testsupport::nt_xent_naive(va, vb, tau)).epsilon(1e-10));
      }
    }
  }

  TEST_CASE("uniform similarity gives log(2N - 1)") {
    for (std::size_t n : {2u, 4u, 9u}) {
      Tensor c({n, 3}, 0.0);
      for (std::size_t i = 0; i < n; ++i) c.at(i, 0) = 1;
      CHECK(nt_xent(ag::constant(c), ag::constant(c), 0.5).item() == doctest::Approx(std::log(2.0 * n - 1)));
    }
  }

  TEST_CASE("gradient of nt_xent through normalisation") {
    std::mt19937_64 r(9);
    auto a = ag::parameter(random_tensor({4, 5}, r)), b = ag::parameter(random_tensor({4, 5}, r));
    auto g = testsupport::gradcheck(
        {a, b}, [&] { return nt_xent(ag::l2_normalize_rows(a), ag::l2_normalize_rows(b), 0.5); });
    CHECK_MESSAGE(g.max_rel_err < 1e-5, g.worst);
    auto c = ag::parameter(random_tensor({6, 5}, r));
    auto g2 = testsupport::gradcheck({c}, [&] { return nt_xent_interleaved(ag::l2_normalize_rows(c), 0.2); });
    CHECK_MESSAGE(g2.max_rel_err < 1e-5, g2.worst);
    CHECK_THROWS_AS(nt_xent(a, ag::constant(Tensor({3, 5}, 1.0)), 0.5), ShapeError);
    CHECK_THROWS_AS(nt_xent(ag::constant(Tensor({1, 5}, 1.0)), ag::constant(Tensor({1, 5}, 1.0)), 0.5), ConfigError);
    CHECK_THROWS_AS(nt_xent(a, b, 0.0), ConfigError);
  }

  TEST_CASE("projection head outputs unit rows") {
    nn::ParamSet ps;
    nn::Rng rng(1);
    ProjectionHead head(ps, "p.", 6, {12, 4}, rng);
    std::mt19937_64 r(10);
    const auto y = head(ag::constant(random_tensor({3, 6}, r))).value();
    REQUIRE(y.shape == Shape{3, 4});
    for (std::size_t i = 0; i < 3; ++i) {
      double s = 0;
      for (std::size_t d = 0; d < 4; ++d) s += y.at(i, d) * y.at(i, d);
      CHECK(s == doctest::Approx(1.0));
    }
  }
}
