#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "mpt/binary_io.hpp"
#include "mpt/error.hpp"
#include "mpt/numerics/adam.hpp"
#include "mpt/numerics/checkpoint.hpp"
#include "test_support.hpp"

using namespace mpt;
using mpt::testing::random_array;

namespace {

DenseArray row(std::vector<double> v) {
  const std::size_t n = v.size();
  return DenseArray({n}, std::move(v));
}

}  // namespace

TEST_CASE("dense array shapes and indexing") {
  DenseArray a({2, 3}, std::vector<double>{0, 1, 2, 3, 4, 5});
  CHECK(a.size() == 6);
  CHECK(a.at({1, 2}) == 5);
  CHECK(a.reshaped({3, 2}).at({2, 0}) == 4);
  CHECK_THROWS_AS(a.reshaped({4, 2}), ShapeError);
  CHECK_THROWS_AS(a.at({2, 0}), ShapeError);
  CHECK_THROWS_AS(DenseArray({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  DenseArray empty({0, 4});
  CHECK(empty.size() == 0);
  CHECK(DenseArray::scalar(2.5).item() == 2.5);
}

TEST_CASE("softmax examples") {
  const DenseArray u = ops::softmax_lastdim(row({0, 0, 0}));
  for (double v : u.values()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));
  const DenseArray s = ops::softmax_lastdim(row({std::log(2.0), 0}));
  CHECK(std::abs(s[0] - 2.0 / 3) < 1e-15);
  CHECK(std::abs(s[1] - 1.0 / 3) < 1e-15);

  std::mt19937_64 rng(3);
  const DenseArray x = random_array({4}, rng, -3, 3);
  const DenseArray y = ops::softmax_lastdim(x);
  long double total = 0;
  for (double v : x.values()) total += std::exp(static_cast<long double>(v));
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(y[i] - static_cast<double>(std::exp((long double)x[i]) / total)) < 1e-12);
}

TEST_CASE("softmax rows sum to one for arbitrary finite input") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const double scale = std::pow(10.0, std::uniform_real_distribution<double>(-3, 3)(rng));
    const DenseArray x = random_array({3, 7}, rng, -scale, scale);
    const DenseArray y = ops::softmax_lastdim(x);
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 7; ++c) s += y.at({r, c});
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }
  CHECK_THROWS_AS(ops::softmax_lastdim(row({0, NAN})), NumericError);
  CHECK_THROWS_AS(ops::softmax_lastdim(DenseArray({2, 0})), ShapeError);
}

TEST_CASE("layer norm examples") {
  const DenseArray ones({4}, 1.0), zeros({4}, 0.0);
  CHECK(ops::layer_norm(row({5, 5, 5, 5}), ones, zeros) == DenseArray({4}, 0.0));
  const DenseArray two = ops::layer_norm(row({1, 3}), DenseArray({2}, 1.0), DenseArray({2}, 0.0));
  CHECK(std::abs(two[0] + 1) < 1e-4);
  CHECK(std::abs(two[1] - 1) < 1e-4);

  std::mt19937_64 rng(5);
  const DenseArray x = random_array({16}, rng, -4, 4);
  const DenseArray y = ops::layer_norm(x, DenseArray({16}, 1.0), DenseArray({16}, 0.0));
  double mean = 0, var = 0;
  for (double v : y.values()) mean += v;
  mean /= 16;
  for (double v : y.values()) var += (v - mean) * (v - mean);
  var /= 16;
  CHECK(std::abs(mean) < 1e-6);
  CHECK(var <= 1.0);
  CHECK(var >= 1.0 - 1e-3);
  CHECK_THROWS_AS(ops::layer_norm(x, DenseArray({16}, 1.0), DenseArray({16}, 0.0), 0.0), ConfigError);
}

TEST_CASE("gelu uses the exact erf form") {
  const DenseArray x = row({-2, -0.5, 0, 0.7, 3});
  const DenseArray y = ops::gelu(x);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(y[i] - 0.5 * x[i] * (1 + std::erf(x[i] / std::sqrt(2.0)))) < 1e-15);
}

TEST_CASE("bce with logits examples") {
  CHECK(std::abs(ops::bce_with_logits(row({0}), row({1})) - std::log(2.0)) < 1e-15);
  const double sat = ops::bce_with_logits(row({20}), row({1}));
  CHECK(sat == doctest::Approx(2.0611536e-9).epsilon(1e-6));
  CHECK(std::isfinite(ops::bce_with_logits(row({-800}), row({1}))));

  std::mt19937_64 rng(9);
  const DenseArray z = random_array({8}, rng, -6, 6);
  DenseArray t({8});
  for (std::size_t i = 0; i < 8; ++i) t[i] = static_cast<double>(rng() % 2);
  long double oracle = 0;
  for (std::size_t i = 0; i < 8; ++i) {
    const long double zl = z[i];
    const long double p = 1.0L / (1.0L + std::exp(-zl));
    oracle += -(t[i] * std::log(p) + (1 - t[i]) * std::log(1 - p));
  }
  oracle /= 8;
  CHECK(std::abs(ops::bce_with_logits(z, t) - static_cast<double>(oracle)) < 1e-12);

  const DenseArray mask({8}, 0.0);
  CHECK(ops::bce_with_logits(z, t, &mask) == 0.0);
  CHECK_THROWS_AS(ops::bce_with_logits(row({0}), row({0.5})), InputError);
}

TEST_CASE("every differentiable op passes the finite-difference check") {
  for (const auto& c : mpt::testing::op_gradient_cases()) {
    CAPTURE(c.name);
    const GradCheckReport r = c.run();
    CHECK(r.max_rel_error() <= 1e-4);
  }
}

TEST_CASE("backward is deterministic and shared leaves accumulate") {
  ParamStore store;
  std::mt19937_64 rng(1);
  store.add("p", random_array({3}, rng));
  Tape tape;
  Var p = tape.parameter(store, "p");
  Var p2 = tape.parameter(store, "p");
  CHECK(p.id() == p2.id());
  Var f = ops::add(ops::sum(ops::mul(p, p)), ops::sum(p2));
  tape.backward(f);
  const auto g1 = tape.parameter_grads().at("p");
  tape.backward(f);
  const auto g2 = tape.parameter_grads().at("p");
  CHECK(g1 == g2);
  for (std::size_t i = 0; i < 3; ++i) CHECK(g1[i] == 2 * store.value("p")[i] + 1);
  CHECK_THROWS_AS(tape.backward(p), ShapeError);
}

TEST_CASE("attention single key gives the projected value") {
  ParamStore store;
  Initializer init(2);
  nn::init_attention(store, init, "attn", 4);
  std::mt19937_64 rng(4);
  const DenseArray q = random_array({1, 3, 4}, rng), kv = random_array({1, 1, 4}, rng);
  Tape tape;
  auto out = nn::multi_head_attention(tape, store, "attn", tape.constant(q), tape.constant(kv), 2);
  for (double w : out.weights.value().values()) CHECK(w == 1.0);
  Var v = nn::linear(tape, store, "attn.v", tape.constant(kv));
  Var expected = nn::linear(tape, store, "attn.o", v);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t d = 0; d < 4; ++d) CHECK(std::abs(out.output.value().at({0, i, d}) - expected.value().at({0, 0, d})) < 1e-14);
}

TEST_CASE("attention peaks at the matching one-hot key") {
  ParamStore store;
  Initializer init(2);
  nn::init_attention(store, init, "attn", 4);
  DenseArray eye({4, 4}, 0.0);
  for (std::size_t i = 0; i < 4; ++i) eye.at({i, i}) = 1;
  for (const char* p : {"attn.q.w", "attn.k.w", "attn.v.w", "attn.o.w"}) store.set(p, eye);
  DenseArray keys({1, 4, 4}, 0.0);
  for (std::size_t i = 0; i < 4; ++i) keys.at({0, i, i}) = 5;
  for (std::size_t target = 0; target < 4; ++target) {
    DenseArray q({1, 1, 4}, 0.0);
    q.at({0, 0, target}) = 5;
    Tape tape;
    auto out = nn::multi_head_attention(tape, store, "attn", tape.constant(q), tape.constant(keys), 1);
    const DenseArray& w = out.weights.value();
    for (std::size_t j = 0; j < 4; ++j)
      if (j != target) CHECK(w.at({0, 0, target}) > w.at({0, 0, j}));
  }
}

TEST_CASE("attention matches a nested-loop oracle") {
  const std::size_t L = 3, D = 4, H = 2, dh = D / H;
  ParamStore store;
  Initializer init(8);
  nn::init_attention(store, init, "attn", D);
  std::mt19937_64 rng(12);
  for (auto& [name, p] : store.entries()) p.value = random_array(p.value.shape(), rng);
  const DenseArray x = random_array({1, L, D}, rng), y = random_array({1, L, D}, rng);
  Tape tape;
  const DenseArray out = nn::multi_head_attention(tape, store, "attn", tape.constant(x), tape.constant(y), H).output.value();

  auto proj = [&](const DenseArray& src, const std::string& n) {
    const DenseArray &w = store.value(n + ".w"), &b = store.value(n + ".b");
    DenseArray r({L, D});
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t o = 0; o < D; ++o) {
        double s = b[o];
        for (std::size_t k = 0; k < D; ++k) s += src.at({0, i, k}) * w.at({k, o});
        r.at({i, o}) = s;
      }
    return r;
  };
  const DenseArray Q = proj(x, "attn.q"), K = proj(y, "attn.k"), V = proj(y, "attn.v");
  DenseArray ctx({L, D}, 0.0);
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t i = 0; i < L; ++i) {
      std::vector<double> s(L);
      double mx = -1e300;
      for (std::size_t j = 0; j < L; ++j) {
        double d = 0;
        for (std::size_t c = 0; c < dh; ++c) d += Q.at({i, h * dh + c}) * K.at({j, h * dh + c});
        s[j] = d / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, s[j]);
      }
      double z = 0;
      for (double& v : s) z += (v = std::exp(v - mx));
      for (std::size_t j = 0; j < L; ++j)
        for (std::size_t c = 0; c < dh; ++c) ctx.at({i, h * dh + c}) += s[j] / z * V.at({j, h * dh + c});
    }
  DenseArray ctx3 = ctx.reshaped({1, L, D});
  const DenseArray expected = proj(ctx3, "attn.o");
  CHECK(max_abs_diff(out.reshaped({L, D}), expected) < 1e-10);
}

TEST_CASE("encoder layer identities") {
  ParamStore store;
  Initializer init(3);
  nn::init_encoder_layer(store, init, "enc", 8);
  std::mt19937_64 rng(3);
  const DenseArray x = random_array({2, 4, 8}, rng);
  {
    // Composition of the separately tested sub-blocks.
    Tape tape;
    Var in = tape.constant(x);
    Var out = nn::encoder_layer(tape, store, "enc", in, 2);
    Var h = ops::add(in, nn::multi_head_attention(tape, store, "enc.attn", nn::layer_norm(tape, store, "enc.ln1", in),
                                                  nn::layer_norm(tape, store, "enc.ln1", in), 2)
                             .output);
    Var oracle = ops::add(h, nn::ffn(tape, store, "enc.ffn", nn::layer_norm(tape, store, "enc.ln2", h)));
    CHECK(max_abs_diff(out.value(), oracle.value()) < 1e-10);
  }
  {
    // A single token attends only to itself.
    const DenseArray one = random_array({1, 1, 8}, rng);
    Tape tape;
    Var in = tape.constant(one);
    Var out = nn::encoder_layer(tape, store, "enc", in, 2);
    Var v = nn::linear(tape, store, "enc.attn.o",
                       nn::linear(tape, store, "enc.attn.v", nn::layer_norm(tape, store, "enc.ln1", in)));
    Var h = ops::add(in, v);
    Var oracle = ops::add(h, nn::ffn(tape, store, "enc.ffn", nn::layer_norm(tape, store, "enc.ln2", h)));
    CHECK(max_abs_diff(out.value(), oracle.value()) < 1e-12);
  }
  nn::zero_output_projections(store, "enc");
  Tape tape;
  CHECK(max_abs_diff(nn::encoder_layer(tape, store, "enc", tape.constant(x), 2).value(), x) == 0.0);
}

TEST_CASE("adam examples") {
  ParamStore store;
  store.add("w", row({1.0, -2.0}));
  AdamConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0;
  adam_step(store, {{"w", DenseArray({2}, 0.0)}}, cfg);
  CHECK(store.value("w") == row({1.0, -2.0}));

  ParamStore fresh;
  fresh.add("w", row({1.0, -2.0}));
  cfg.eps = 0;
  cfg.beta1 = 0.7;
  cfg.beta2 = 0.95;
  adam_step(fresh, {{"w", row({0.3, -7.0})}}, cfg);
  CHECK(std::abs(fresh.value("w")[0] - (1.0 - 0.1)) < 1e-12);
  CHECK(std::abs(fresh.value("w")[1] - (-2.0 + 0.1)) < 1e-12);

  ParamStore quad;
  quad.add("w", row({1.0}));
  AdamConfig qc;
  qc.lr = 0.1;
  qc.weight_decay = 0;
  double prev = 1.0;
  for (int i = 0; i < 3; ++i) {
    const double w = quad.value("w")[0];
    adam_step(quad, {{"w", row({2 * w})}}, qc);
    CHECK(std::abs(quad.value("w")[0]) < prev);
    prev = std::abs(quad.value("w")[0]);
  }
}

TEST_CASE("adam decoupled weight decay and failure atomicity") {
  ParamStore store;
  store.add("a", row({2.0}));
  store.add("b", row({3.0}));
  AdamConfig cfg;
  cfg.lr = 0.01;
  cfg.weight_decay = 0.5;
  adam_step(store, {{"a", row({0.0})}}, cfg);
  CHECK(store.value("a")[0] == 2.0 * (1 - 0.01 * 0.5));
  CHECK(store.value("b")[0] == 3.0);

  const ParamStore before = store;
  CHECK_THROWS_AS(adam_step(store, {{"a", row({1.0})}, {"b", row({NAN})}}, cfg), NumericError);
  CHECK(store.value("a") == before.value("a"));
  CHECK(store.step() == before.step());

  cfg.lr = 0;
  adam_step(store, {{"a", row({5.0})}, {"b", row({-1.0})}}, cfg);
  CHECK(store.value("a") == before.value("a"));
  CHECK(store.value("b") == before.value("b"));
}

TEST_CASE("finite difference check examples") {
  ParamStore store;
  std::mt19937_64 rng(2);
  store.add("x", random_array({5}, rng));
  const ScalarObjective squares = [](Tape& t, const ParamStore& s) {
    Var x = t.parameter(s, "x");
    return ops::sum(ops::mul(x, x));
  };
  CHECK(finite_diff_check(squares, store).max_rel_error() < 1e-9);

  ParamStore lin;
  Initializer init(4);
  nn::init_linear(lin, init, "fc", 4, 3);
  const DenseArray x = random_array({6, 4}, rng);
  DenseArray t({6, 3});
  for (double& v : t.data()) v = static_cast<double>(rng() % 2);
  const ScalarObjective bce = [&](Tape& tape, const ParamStore& s) {
    return ops::bce_with_logits(nn::linear(tape, s, "fc", tape.constant(x)), t);
  };
  CHECK(finite_diff_check(bce, lin).max_rel_error() < 1e-6);

  // A gradient that ignores one input is caught and named.
  const ScalarObjective wrong = [](Tape& t, const ParamStore& s) {
    Var x = t.parameter(s, "x");
    DenseArray v = x.value();
    double total = 0;
    for (double e : v.values()) total += e * e;
    return t.record(DenseArray::scalar(total), {x}, [x](Tape& tp, std::size_t self) {
      auto& g = tp.grad_accumulator(x.id());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += tp.grad(self).item() * 2 * x.value()[i] * (i == 0 ? 0 : 1);
    });
  };
  const auto report = finite_diff_check(wrong, store);
  CHECK(report.worst().name == "x");
  CHECK(report.worst().worst_index == 0);
  CHECK(!report.passed(1e-4));

  int calls = 0;
  const ScalarObjective flaky = [&](Tape& t, const ParamStore& s) {
    ++calls;
    return ops::scale(ops::sum(t.parameter(s, "x")), 1.0 + calls);
  };
  CHECK_THROWS_AS(finite_diff_check(flaky, store), NumericError);
}

TEST_CASE("initializer is seeded") {
  Initializer a(7), b(7), c(8);
  const DenseArray x = a.normal({2000});
  CHECK(x == b.normal({2000}));
  CHECK(!(x == c.normal({2000})));
  double ss = 0;
  for (double v : x.values()) ss += v * v;
  CHECK(std::sqrt(ss / 2000) == doctest::Approx(0.02).epsilon(0.05));
}

TEST_CASE("checkpoint round trip and corruption") {
  const std::string path = (std::filesystem::temp_directory_path() / "mpt_numerics_ckpt.bin").string();
  ParamStore store;
  std::mt19937_64 rng(6);
  store.add("a.w", random_array({3, 2}, rng));
  store.add("b", random_array({4}, rng));
  store.add("s", DenseArray::scalar(0.1 + 0.2));
  store.set_step(17);
  write_checkpoint(path, store, "dim = 4\n");
  const Checkpoint back = read_checkpoint(path);
  CHECK(back.metadata == "dim = 4\n");
  CHECK(back.params.step() == 17);
  CHECK(back.params.entries().size() == 3);
  for (const auto& [name, p] : store.entries()) CHECK(back.params.value(name) == p.value);

  auto bytes = io::read_file(path);
  auto expect_kind = [&](std::vector<std::uint8_t> b, FormatError::Kind kind) {
    io::write_file_atomic(path, b);
    try {
      read_checkpoint(path);
      FAIL("expected a format error");
    } catch (const FormatError& e) {
      CHECK(e.kind() == kind);
    }
  };
  auto bad = bytes;
  bad[0] = 'X';
  expect_kind(bad, FormatError::Kind::bad_magic);
  bad = bytes;
  bad[4] = 9;
  expect_kind(bad, FormatError::Kind::version_mismatch);
  expect_kind(std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 5), FormatError::Kind::truncated);
  std::filesystem::remove(path);
}
