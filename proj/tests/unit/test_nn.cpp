#include <cmath>

#include "doctest.h"
#include "neuronet/checkpoint.hpp"
#include "neuronet/nn.hpp"
#include "test_support.hpp"

using namespace neuronet;
using testsupport::random_tensor;

TEST_SUITE("nn") {
  TEST_CASE("param set registry and freezing") {
    nn::ParamSet ps;
    nn::Rng rng(1);
    nn::Linear a(ps, "enc.a", 3, 4, rng);
    nn::Linear b(ps, "dec.b", 4, 2, rng, false);
    nn::BatchNorm1d bn(ps, "enc.bn", 4);
    CHECK(ps.contains("enc.a.weight"));
    CHECK(ps.contains("enc.bn.running_mean"));
    CHECK_FALSE(static_cast<bool>(b.bias));
    CHECK(ps.parameter_count() == 3 * 4 + 4 + 4 * 2 + 4 + 4);
    CHECK(ps.trainable().size() == 5);
    ps.set_trainable("enc.", false);
    CHECK(ps.trainable().size() == 1);
    CHECK_THROWS_AS(ps.get("missing"), ConfigError);
    CHECK_THROWS(ps.add_param("dec.b.weight", Tensor({1}, 0.0)));
  }

  TEST_CASE("uniform init bound") {
    nn::Rng rng(2);
    auto t = nn::uniform_init({100, 10}, 16, rng);
    for (double v : t.data) CHECK(std::abs(v) <= 0.25);
  }

  TEST_CASE("transformer first_row equals row 0 of the full block") {
    nn::ParamSet ps;
    nn::Rng rng(3);
    nn::TransformerBlock blk(ps, "blk", 8, 2, 4, rng);
    std::mt19937_64 r(4);
    auto x = ag::constant(random_tensor({3, 5, 8}, r));
    auto full = blk(x).value();
    auto first = blk.first_row(x).value();
    REQUIRE(first.shape == Shape{3, 1, 8});
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t d = 0; d < 8; ++d) CHECK(first[b * 8 + d] == doctest::Approx(full[(b * 5) * 8 + d]).epsilon(1e-12));
  }

  TEST_CASE("sinusoidal position codes") {
    auto p0 = nn::sinusoidal_position(0, 6);
    CHECK(p0 == std::vector<double>{0, 1, 0, 1, 0, 1});
    auto p3 = nn::sinusoidal_position(3, 4);
    CHECK(p3[0] == doctest::Approx(std::sin(3.0)));
    CHECK(p3[3] == doctest::Approx(std::cos(3.0 * std::pow(10000.0, -0.5))));
  }

  TEST_CASE("AdamW first step by hand") {
    nn::ParamSet ps;
    auto p = ps.add_param("p", Tensor({2}, {1.0, -2.0}));
    nn::AdamWOptions o;
    o.lr = 0.1;
    o.weight_decay = 0.01;
    nn::AdamW opt(ps, o);
    p.grad_buffer().data = {0.5, -0.25};
    opt.step();
    // Bias-corrected first step: m_hat = g, v_hat = g^2, so the update is
    // lr * g / (|g| + eps) after the decoupled decay p *= (1 - lr * wd).
    const double e0 = 1.0 * (1 - 0.001) - 0.1 * 0.5 / (0.5 + 1e-8);
    const double e1 = -2.0 * (1 - 0.001) + 0.1 * 0.25 / (0.25 + 1e-8);
    CHECK(p.value()[0] == doctest::Approx(e0).epsilon(1e-12));
    CHECK(p.value()[1] == doctest::Approx(e1).epsilon(1e-12));
    CHECK_FALSE(p.has_grad());
    CHECK(opt.steps() == 1);

    // Frozen after construction: untouched.
    p.set_requires_grad(false);
    const auto before = p.value().data;
    opt.step();
    CHECK(p.value().data == before);
  }

  TEST_CASE("checkpoint round trip and mismatch errors") {
    testsupport::TempDir dir("ckpt");
    nn::ParamSet a;
    nn::Rng rng(5);
    nn::Linear l(a, "l", 3, 2, rng);
    nn::BatchNorm1d bn(a, "bn", 2);
    bn.running_mean.mutable_value().data = {0.25, -1.5};
    save_checkpoint(a, dir.path / "m", {{"kind", "test"}});
    CHECK(read_checkpoint_manifest(dir.path / "m")["meta"]["kind"] == "test");

    nn::ParamSet b;
    nn::Rng rng2(6);
    nn::Linear l2(b, "l", 3, 2, rng2);
    nn::BatchNorm1d bn2(b, "bn", 2);
    auto meta = load_checkpoint(b, dir.path / "m");
    CHECK(meta["kind"] == "test");
    CHECK(l2.weight.value().data == l.weight.value().data);
    CHECK(bn2.running_mean.value().data == std::vector<double>{0.25, -1.5});

    nn::ParamSet c;
    nn::Linear l3(c, "l", 3, 5, rng2);
    CHECK_THROWS_AS(load_checkpoint(c, dir.path / "m"), ConfigError);
    nn::ParamSet d;
    nn::Linear l4(d, "other", 3, 2, rng2);
    CHECK_THROWS_AS(load_checkpoint(d, dir.path / "m"), IoError);
    CHECK_NOTHROW(load_checkpoint(d, dir.path / "m", true));
    CHECK_THROWS_AS(load_checkpoint(d, dir.path / "nope"), IoError);
  }
}
