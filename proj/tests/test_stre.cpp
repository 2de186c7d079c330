#include <algorithm>
#include <random>

#include "doctest.h"
#include "mpt/error.hpp"
#include "mpt/stre.hpp"
#include "test_support.hpp"

using namespace mpt;
using namespace mpt::stre;
using mpt::testing::random_array;

namespace {

constexpr std::size_t D = 8;

ParamStore make_store(const StreConfig& cfg, std::uint64_t seed = 1) {
  ParamStore store;
  Initializer init(seed);
  init_stre(store, init, cfg, D);
  // Perturb so attention is far from uniform.
  std::mt19937_64 rng(seed + 100);
  for (auto& [n, p] : store.entries())
    for (double& v : p.value.data()) v += std::uniform_real_distribution<double>(-0.3, 0.3)(rng);
  return store;
}

DenseArray permute_axis(const DenseArray& x, std::size_t axis, const std::vector<std::size_t>& perm) {
  // x is rank 3; out[.., i, ..] = x[.., perm[i], ..] along `axis`.
  const Shape& s = x.shape();
  DenseArray out(s);
  for (std::size_t a = 0; a < s[0]; ++a)
    for (std::size_t b = 0; b < s[1]; ++b)
      for (std::size_t c = 0; c < s[2]; ++c) {
        std::size_t src[3] = {a, b, c};
        src[axis] = perm[src[axis]];
        out.at({a, b, c}) = x.at({src[0], src[1], src[2]});
      }
  return out;
}

DenseArray slice_frame(const DenseArray& x, std::size_t t) {
  const std::size_t n = x.extent(1), d = x.extent(2);
  DenseArray out({1, n, d});
  std::copy_n(x.values().begin() + t * n * d, n * d, out.data().begin());
  return out;
}

}  // namespace

TEST_CASE("structure names round trip") {
  for (Structure s : {Structure::serial, Structure::parallel, Structure::parallel_then_serial, Structure::one_cross,
                      Structure::two_cross})
    CHECK(parse_structure(to_string(s)) == s);
  CHECK_THROWS_AS(parse_structure("diagonal"), ConfigError);
  CHECK_THROWS_AS(validate(StreConfig{2, 3, Structure::serial}, D), ConfigError);
  CHECK_THROWS_AS(validate(StreConfig{0, 2, Structure::serial}, D), ConfigError);
}

TEST_CASE("spatial encoder") {
  const StreConfig cfg{2, 2, Structure::serial};
  const ParamStore store = make_store(cfg);
  std::mt19937_64 rng(2);

  SUBCASE("single individual is the per-token residual path") {
    const DenseArray x = random_array({3, 1, D}, rng);
    Tape tape;
    const DenseArray out = spatial_encode(tape, store, cfg, tape.constant(x)).value();
    // With one token, self-attention returns the projected value of that token.
    Var h = tape.constant(x);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      const std::string n = "stre.spatial." + std::to_string(l);
      Var a = nn::linear(tape, store, n + ".attn.o",
                         nn::linear(tape, store, n + ".attn.v", nn::layer_norm(tape, store, n + ".ln1", h)));
      h = ops::add(h, a);
      h = ops::add(h, nn::ffn(tape, store, n + ".ffn", nn::layer_norm(tape, store, n + ".ln2", h)));
    }
    CHECK(max_abs_diff(out, h.value()) < 1e-12);
  }

  SUBCASE("permutation equivariance over individuals") {
    const DenseArray x = random_array({2, 5, D}, rng);
    const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
    Tape tape;
    const DenseArray a = permute_axis(spatial_encode(tape, store, cfg, tape.constant(x)).value(), 1, perm);
    const DenseArray b = spatial_encode(tape, store, cfg, tape.constant(permute_axis(x, 1, perm))).value();
    CHECK(max_abs_diff(a, b) <= 1e-10);
  }

  SUBCASE("frames are encoded independently") {
    const DenseArray x = random_array({2, 3, D}, rng);
    Tape tape;
    const DenseArray joint = spatial_encode(tape, store, cfg, tape.constant(x)).value();
    for (std::size_t t = 0; t < 2; ++t) {
      const DenseArray alone = nn::encoder(tape, store, "stre.spatial", tape.constant(slice_frame(x, t)), 2, 2).value();
      CHECK(max_abs_diff(slice_frame(joint, t), alone) < 1e-12);
    }
  }
}

TEST_CASE("temporal encoder") {
  const StreConfig cfg{2, 4, Structure::serial};
  const ParamStore store = make_store(cfg, 3);
  std::mt19937_64 rng(4);

  SUBCASE("single frame") {
    const DenseArray x = random_array({1, 3, D}, rng);
    Tape tape;
    const DenseArray out = temporal_encode(tape, store, cfg, tape.constant(x)).value();
    CHECK(out.shape() == Shape{3, 1, D});
    // Each individual is a length-1 sequence, so individuals do not interact.
    for (std::size_t n = 0; n < 3; ++n) {
      DenseArray one({1, 1, D});
      std::copy_n(x.values().begin() + n * D, D, one.data().begin());
      const DenseArray alone = temporal_encode(tape, store, cfg, tape.constant(one)).value();
      for (std::size_t d = 0; d < D; ++d) CHECK(std::abs(alone[d] - out.at({n, 0, d})) < 1e-12);
    }
  }

  SUBCASE("frame permutation equivariance") {
    const DenseArray x = random_array({4, 3, D}, rng);
    const std::vector<std::size_t> perm = {2, 3, 1, 0};
    Tape tape;
    // Output is [N×T×D]; frames sit on axis 1 there.
    const DenseArray a = permute_axis(temporal_encode(tape, store, cfg, tape.constant(x)).value(), 1, perm);
    const DenseArray b = temporal_encode(tape, store, cfg, tape.constant(permute_axis(x, 0, perm))).value();
    CHECK(max_abs_diff(a, b) <= 1e-10);
  }

  SUBCASE("individuals are encoded independently") {
    const DenseArray x = random_array({3, 2, D}, rng);
    Tape tape;
    const DenseArray joint = temporal_encode(tape, store, cfg, tape.constant(x)).value();
    for (std::size_t n = 0; n < 2; ++n) {
      DenseArray seq({1, 3, D});
      for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t d = 0; d < D; ++d) seq.at({0, t, d}) = x.at({t, n, d});
      const DenseArray alone = nn::encoder(tape, store, "stre.temporal", tape.constant(seq), 2, 4).value();
      for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t d = 0; d < D; ++d) CHECK(std::abs(alone.at({0, t, d}) - joint.at({n, t, d})) < 1e-12);
    }
  }
}

TEST_CASE("serial stre forward") {
  const StreConfig cfg{2, 2, Structure::serial};
  const ParamStore store = make_store(cfg, 5);
  std::mt19937_64 rng(6);

  SUBCASE("one frame") {
    const DenseArray x = random_array({1, 4, D}, rng);
    Tape tape;
    const DenseArray out = stre_forward(tape, store, cfg, tape.constant(x)).value();
    const DenseArray direct =
        temporal_encode(tape, store, cfg, spatial_encode(tape, store, cfg, tape.constant(x))).value();
    CHECK(max_abs_diff(out, direct.reshaped({4, D})) == 0.0);
  }

  SUBCASE("constant in time") {
    const DenseArray frame = random_array({1, 3, D}, rng);
    DenseArray x({4, 3, D});
    for (std::size_t t = 0; t < 4; ++t) std::copy(frame.values().begin(), frame.values().end(), x.data().begin() + t * 3 * D);
    Tape tape;
    const DenseArray out = stre_forward(tape, store, cfg, tape.constant(x)).value();
    const DenseArray single = stre_forward(tape, store, cfg, tape.constant(frame)).value();
    CHECK(max_abs_diff(out, single) < 1e-12);
  }

  SUBCASE("composition of sub-ops") {
    const DenseArray x = random_array({3, 4, D}, rng);
    Tape tape;
    const DenseArray out = stre_forward(tape, store, cfg, tape.constant(x)).value();
    Var s = nn::encoder(tape, store, "stre.spatial", tape.constant(x), 2, 2);
    Var t = nn::encoder(tape, store, "stre.temporal", ops::permute(s, {1, 0, 2}), 2, 2);
    CHECK(max_abs_diff(out, ops::mean_axis(t, 1).value()) < 1e-12);
  }
}

TEST_CASE("every structure produces [N×D] and passes the gradient check") {
  std::mt19937_64 rng(7);
  for (Structure s : {Structure::serial, Structure::parallel, Structure::parallel_then_serial, Structure::one_cross,
                      Structure::two_cross}) {
    CAPTURE(to_string(s));
    const StreConfig cfg{1, 2, s};
    const ParamStore store = make_store(cfg, 8);
    for (std::size_t T : {1, 2, 3}) {
      const DenseArray x = random_array({T, 3, D}, rng);
      Tape tape;
      CHECK(stre_forward(tape, store, cfg, tape.constant(x)).shape() == Shape{3, D});
    }
    const DenseArray x = random_array({2, 3, D}, rng);
    const DenseArray w = random_array({3, D}, rng);
    const ScalarObjective f = [&](Tape& tape, const ParamStore& st) {
      return ops::sum(ops::mul(stre_forward(tape, st, cfg, tape.constant(x)), tape.constant(w)));
    };
    CHECK(finite_diff_check(f, store).max_rel_error() <= 1e-4);
  }
}

TEST_CASE("serial stre gradient with respect to its input") {
  const StreConfig cfg{2, 2, Structure::serial};
  const ParamStore store = make_store(cfg, 9);
  std::mt19937_64 rng(10);
  const auto report = mpt::testing::check_op({{"x", random_array({2, 3, D}, rng)}}, [&](Tape& tape, const auto& v) {
    return stre_forward(tape, store, cfg, v[0]);
  });
  CHECK(report.max_rel_error() <= 1e-4);
}
