#include <cmath>
#include <random>

#include "doctest.h"
#include "mpt/error.hpp"
#include "mpt/scene.hpp"
#include "test_support.hpp"

using namespace mpt;
using namespace mpt::scene;
using mpt::testing::random_array;

namespace {

constexpr std::size_t C = 3, H = 2, W = 3, D = 8;

ParamStore make_store(const SceneConfig& cfg, std::uint64_t seed = 1) {
  ParamStore store;
  Initializer init(seed);
  init_scene(store, init, cfg, C, H, W, D);
  std::mt19937_64 rng(seed + 10);
  for (auto& [n, p] : store.entries())
    for (double& v : p.value.data()) v += std::uniform_real_distribution<double>(-0.3, 0.3)(rng);
  return store;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

}  // namespace

TEST_CASE("assignment rows are distributions") {
  SceneConfig cfg{4, 2};
  const ParamStore store = make_store(cfg);
  std::mt19937_64 rng(2);
  Tape tape;
  const SceneTokens st = scene_tokens(tape, store, tape.constant(random_array({3, C, H, W}, rng, -3, 3)));
  CHECK(st.tokens.shape() == Shape{3, 4, D});
  const DenseArray& a = st.attention.value();
  CHECK(a.shape() == Shape{3, 4, H * W});
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t k = 0; k < 4; ++k) {
      double s = 0;
      for (std::size_t p = 0; p < H * W; ++p) {
        CHECK(a.at({t, k, p}) >= 0.0);
        s += a.at({t, k, p});
      }
      CHECK(std::abs(s - 1.0) <= 1e-6);
    }
}

TEST_CASE("constant map gives uniform assignment") {
  SceneConfig cfg{3, 2};
  ParamStore store = make_store(cfg);
  store.mutable_value("scene.pos").fill(0.0);
  DenseArray fm({2, C, H, W});
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < H * W; ++p) fm[(t * C + c) * H * W + p] = 0.5 + c;
  Tape tape;
  for (double v : scene_tokens(tape, store, tape.constant(fm)).attention.value().data())
    CHECK(std::abs(v - 1.0 / (H * W)) < 1e-15);
}

TEST_CASE("single token and explicit oracle") {
  SceneConfig cfg{1, 2};
  const ParamStore store = make_store(cfg, 3);
  std::mt19937_64 rng(4);
  const DenseArray fm = random_array({2, C, H, W}, rng);
  Tape tape;
  const SceneTokens st = scene_tokens(tape, store, tape.constant(fm));
  CHECK(st.tokens.shape() == Shape{2, 1, D});

  const DenseArray &pos = store.value("scene.pos"), &aw = store.value("scene.assign.w"), &ab = store.value("scene.assign.b"),
                   &pw = store.value("scene.token_proj.w"), &pb = store.value("scene.token_proj.b");
  for (std::size_t t = 0; t < 2; ++t) {
    std::vector<double> logits(H * W);
    auto x = [&](std::size_t c, std::size_t p) { return fm[(t * C + c) * H * W + p] + pos[c * H * W + p]; };
    double mx = -1e300;
    for (std::size_t p = 0; p < H * W; ++p) {
      logits[p] = ab[0];
      for (std::size_t c = 0; c < C; ++c) logits[p] += x(c, p) * aw.at({c, 0});
      mx = std::max(mx, logits[p]);
    }
    double z = 0;
    for (double& l : logits) z += (l = std::exp(l - mx));
    for (std::size_t p = 0; p < H * W; ++p) CHECK(std::abs(st.attention.value().at({t, 0, p}) - logits[p] / z) < 1e-12);
    for (std::size_t d = 0; d < D; ++d) {
      double v = pb[d];
      for (std::size_t c = 0; c < C; ++c) {
        double pooled = 0;
        for (std::size_t p = 0; p < H * W; ++p) pooled += logits[p] / z * x(c, p);
        v += pooled * pw.at({c, d});
      }
      CHECK(std::abs(st.tokens.value().at({t, 0, d}) - v) < 1e-12);
    }
  }
  CHECK_THROWS_AS(scene_tokens(tape, store, tape.constant(DenseArray({C, H, W}))), ShapeError);
}

TEST_CASE("scene pool is the mean over frames and tokens") {
  Tape tape;
  SceneTokens st;
  st.tokens = tape.constant(DenseArray({2, 2, 2}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8}));
  CHECK(scene_pool(st).value() == DenseArray({1, 2}, std::vector<double>{4, 5}));
}

TEST_CASE("individual fusion") {
  SceneConfig cfg{2, 2};
  ParamStore store = make_store(cfg, 5);
  std::mt19937_64 rng(6);
  const DenseArray x = random_array({4, D}, rng), s = random_array({1, D}, rng);

  {
    ParamStore zeroed = store;
    nn::zero_output_projections(zeroed, "scene.fuse_individual");
    Tape tape;
    CHECK(fuse_individual(tape, zeroed, cfg, tape.constant(x), tape.constant(s)).value() == x);
  }

  Tape tape;
  Var sv = tape.constant(s);
  const DenseArray batched = fuse_individual(tape, store, cfg, tape.constant(x), sv).value();
  for (std::size_t r = 0; r < 4; ++r) {
    const DenseArray row = fuse_individual(tape, store, cfg, ops::gather_rows(tape.constant(x), std::vector<std::size_t>{r}), sv).value();
    for (std::size_t d = 0; d < D; ++d) CHECK(std::abs(row[d] - batched.at({r, d})) < 1e-12);
  }

  // One key: the attention weight is 1, so the attended value is o(v(LN(s))) for every row.
  const std::string n = "scene.fuse_individual";
  Var attended = nn::linear(tape, store, n + ".attn.o", nn::linear(tape, store, n + ".attn.v", nn::layer_norm(tape, store, n + ".ln_kv", sv)));
  Var h = ops::add(tape.constant(x), ops::reshape(attended, {D}));
  Var expected = ops::add(h, nn::ffn(tape, store, n + ".ffn", nn::layer_norm(tape, store, n + ".ln2", h)));
  CHECK(max_abs_diff(batched, expected.value()) < 1e-12);

  const DenseArray social = fuse_social(tape, store, cfg, tape.constant(x), sv).value();
  CHECK(max_abs_diff(social, batched) > 1e-6);
  CHECK(fuse_individual(tape, store, cfg, tape.constant(DenseArray({0, D})), sv).shape() == Shape{0, D});
  CHECK_THROWS_AS(fuse_individual(tape, store, cfg, tape.constant(x), tape.constant(DenseArray({2, D}))), ShapeError);
}

TEST_CASE("global fusion") {
  SceneConfig cfg{2, 2};
  ParamStore store = make_store(cfg, 7);
  std::mt19937_64 rng(8);
  const DenseArray g = random_array({1, D}, rng), s = random_array({1, D}, rng);
  Tape tape;
  const DenseArray out = fuse_global(tape, store, tape.constant(g), tape.constant(s)).value();
  const DenseArray &w1 = store.value("scene.fuse_global.fc1.w"), &b1 = store.value("scene.fuse_global.fc1.b"),
                   &w2 = store.value("scene.fuse_global.fc2.w"), &b2 = store.value("scene.fuse_global.fc2.b");
  std::vector<double> joint(2 * D), hidden(2 * D);
  for (std::size_t d = 0; d < D; ++d) joint[d] = g[d], joint[D + d] = s[d];
  for (std::size_t j = 0; j < 2 * D; ++j) {
    double v = b1[j];
    for (std::size_t i = 0; i < 2 * D; ++i) v += joint[i] * w1.at({i, j});
    hidden[j] = gelu(v);
  }
  for (std::size_t d = 0; d < D; ++d) {
    double v = b2[d];
    for (std::size_t j = 0; j < 2 * D; ++j) v += hidden[j] * w2.at({j, d});
    CHECK(std::abs(out[d] - v) < 1e-12);
  }

  for (auto& [name, p] : store.entries())
    if (name.starts_with("scene.fuse_global")) p.value.fill(0.0);
  Tape zt;
  for (double v : fuse_global(zt, store, zt.constant(g), zt.constant(s)).value().data()) CHECK(v == 0.0);
}

TEST_CASE("scene gradients") {
  SceneConfig cfg{3, 2};
  const ParamStore store = make_store(cfg, 9);
  std::mt19937_64 rng(10);
  const DenseArray fm = random_array({2, C, H, W}, rng), x = random_array({3, D}, rng), g = random_array({1, D}, rng);
  const DenseArray w = random_array({5, D}, rng);
  const ScalarObjective f = [&](Tape& tape, const ParamStore& s) {
    Var pooled = scene_pool(scene_tokens(tape, s, tape.constant(fm)));
    Var ind = fuse_individual(tape, s, cfg, tape.constant(x), pooled);
    Var soc = fuse_social(tape, s, cfg, ops::gather_rows(tape.constant(x), std::vector<std::size_t>{0}), pooled);
    Var glo = fuse_global(tape, s, tape.constant(g), pooled);
    return ops::sum(ops::mul(ops::concat({ind, soc, glo}, 0), tape.constant(w)));
  };
  CHECK(finite_diff_check(f, store).max_rel_error() <= 1e-4);
}
