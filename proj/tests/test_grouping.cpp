#include <cmath>
#include <random>

#include "doctest.h"
#include "mpt/error.hpp"
#include "mpt/grouping.hpp"
#include "test_support.hpp"

using namespace mpt;
using namespace mpt::grouping;
using mpt::testing::partition_distance;
using mpt::testing::planted_affinity;
using mpt::testing::random_array;

namespace {

constexpr std::size_t D = 6;

ParamStore relation_store(std::uint64_t seed) {
  ParamStore store;
  Initializer init(seed);
  init_relation_head(store, init, D, 10);
  return store;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double pair_logit(const ParamStore& s, const DenseArray& x, std::size_t i, std::size_t j) {
  const DenseArray &w1 = s.value("relation.fc1.w"), &b1 = s.value("relation.fc1.b"), &w2 = s.value("relation.fc2.w"),
                   &b2 = s.value("relation.fc2.b");
  double out = b2[0];
  for (std::size_t h = 0; h < w1.extent(1); ++h) {
    double v = b1[h];
    for (std::size_t d = 0; d < D; ++d) {
      v += x.at({i, d}) * w1.at({d, h}) + x.at({j, d}) * w1.at({D + d, h}) +
           x.at({i, d}) * x.at({j, d}) * w1.at({2 * D + d, h});
    }
    out += gelu(v) * w2.at({h, 0});
  }
  return out;
}

DenseArray random_symmetric(std::size_t n, std::mt19937_64& rng) {
  DenseArray a = random_array({n, n}, rng);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) a.at({i, j}) = a.at({j, i});
  return a;
}

Partition permuted(const Partition& p, const std::vector<std::size_t>& perm) {
  Partition out;
  for (const Group& g : p) {
    Group h;
    for (std::size_t i : g) h.push_back(perm[i]);
    out.push_back(h);
  }
  return canonical_partition(out);
}

}  // namespace

TEST_CASE("relation logits") {
  const ParamStore store = relation_store(1);
  std::mt19937_64 rng(2);
  const DenseArray x = random_array({3, D}, rng);
  Tape tape;
  const DenseArray l = relation_logits(tape, store, tape.constant(x)).value();
  CHECK(l.shape() == Shape{3, 3});
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(l.at({i, i}) == kDiagonalLogit);
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(l.at({i, j}) == l.at({j, i}));
      if (i != j) CHECK(std::abs(l.at({i, j}) - 0.5 * (pair_logit(store, x, i, j) + pair_logit(store, x, j, i))) < 1e-12);
    }
  }

  DenseArray same({3, D});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t d = 0; d < D; ++d) same.at({i, d}) = x.at({0, d});
  const DenseArray ls = relation_logits(tape, store, tape.constant(same)).value();
  CHECK(ls.at({0, 1}) == ls.at({0, 2}));
  CHECK(ls.at({0, 1}) == ls.at({1, 2}));

  CHECK(relation_logits(tape, store, tape.constant(random_array({1, D}, rng))).value().shape() == Shape{1, 1});
  CHECK_THROWS_AS(relation_logits(tape, store, tape.constant(DenseArray({0, D}))), ShapeError);

  const DenseArray a = affinity_from_logits(l);
  for (std::size_t i = 0; i < 3; ++i) CHECK(a.at({i, i}) == 1.0);
  CHECK(std::abs(a.at({0, 1}) - 1.0 / (1.0 + std::exp(-l.at({0, 1})))) < 1e-15);
}

TEST_CASE("relation gradient") {
  const ParamStore store = relation_store(3);
  std::mt19937_64 rng(4);
  const DenseArray x = random_array({4, D}, rng), w = random_array({4, 4}, rng);
  const ScalarObjective f = [&](Tape& tape, const ParamStore& s) {
    return ops::sum(ops::mul(relation_logits(tape, s, tape.constant(x)), tape.constant(w)));
  };
  CHECK(finite_diff_check(f, store).max_rel_error() <= 1e-4);
}

TEST_CASE("eigendecomposition examples") {
  DenseArray eye({4, 4}, 0.0);
  for (std::size_t i = 0; i < 4; ++i) eye.at({i, i}) = 1.0;
  for (double v : sym_eigendecomp(eye).values) CHECK(std::abs(v - 1.0) < 1e-15);

  DenseArray d({3, 3}, 0.0);
  d.at({0, 0}) = 3;
  d.at({1, 1}) = 1;
  d.at({2, 2}) = 2;
  const auto e = sym_eigendecomp(d);
  CHECK(e.values == std::vector<double>{1, 2, 3});

  DenseArray bad = eye;
  bad.at({0, 1}) = 1e-6;
  CHECK_THROWS_AS(sym_eigendecomp(bad), InputError);
}

TEST_CASE("random eigendecompositions reconstruct") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + trial % 11;
    const DenseArray a = random_symmetric(n, rng);
    const auto e = sym_eigendecomp(a);
    for (std::size_t k = 1; k < n; ++k) CHECK(e.values[k - 1] <= e.values[k]);
    double recon = 0, ortho = 0, resid = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double r = 0, o = 0;
        for (std::size_t k = 0; k < n; ++k) {
          r += e.vectors.at({i, k}) * e.values[k] * e.vectors.at({j, k});
          o += e.vectors.at({k, i}) * e.vectors.at({k, j});
        }
        recon = std::max(recon, std::abs(r - a.at({i, j})));
        ortho = std::max(ortho, std::abs(o - (i == j ? 1.0 : 0.0)));
      }
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = 0; i < n; ++i) {
        double av = 0;
        for (std::size_t j = 0; j < n; ++j) av += a.at({i, j}) * e.vectors.at({j, k});
        resid = std::max(resid, std::abs(av - e.values[k] * e.vectors.at({i, k})));
      }
    CHECK(recon < 1e-8);
    CHECK(ortho < 1e-8);
    CHECK(resid < 1e-8);
  }
}

TEST_CASE("eigengap count") {
  CHECK(eigengap_cluster_count({0, 0, 0, 0.9, 1.1, 1.2}, 5) == 3);
  CHECK(eigengap_cluster_count({0, 1, 1, 1}, 3) == 1);
  CHECK(eigengap_cluster_count({0, 0, 0, 0.9, 1.1, 1.2}, 2) == 1);
  CHECK(eigengap_cluster_count({0, 0.1, 0.8, 0.9, 2.0}, 2) == 2);
  CHECK(eigengap_cluster_count({0, 0.5, 1.0, 1.5}, 3) == 1);
}

TEST_CASE("clustering examples") {
  DenseArray blocks({5, 5}, 0.0);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) blocks.at({i, j}) = (i < 2) == (j < 2) ? 1.0 : 0.0;
  CHECK(spectral_cluster(blocks, 5, 0) == Partition{{0, 1}, {2, 3, 4}});

  CHECK(spectral_cluster(DenseArray({6, 6}, 1.0), 6, 0) == Partition{{0, 1, 2, 3, 4, 5}});
  CHECK(spectral_cluster(DenseArray({1, 1}, 1.0), 1, 0) == Partition{{0}});

  DenseArray isolated = blocks;
  for (std::size_t j = 0; j < 5; ++j)
    if (j != 4) isolated.at({4, j}) = isolated.at({j, 4}) = 0.0;
  CHECK(spectral_cluster(isolated, 5, 0) == Partition{{0, 1}, {2, 3}, {4}});

  DenseArray asym({3, 3}, 0.5);
  asym.at({0, 1}) = 0.7;
  CHECK_THROWS_AS(spectral_cluster(asym, 3, 0), InputError);
}

TEST_CASE("planted blocks are recovered") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto planted = planted_affinity({4, 4, 4}, rng);
    const Partition p = spectral_cluster(planted.affinity, 8, trial);
    validate_partition(p, 12, true);
    CHECK(partition_distance(p, planted.truth, 12) == 0);
    CHECK(p == planted.truth);
  }
}

TEST_CASE("clustering invariants") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 3 + trial;
    DenseArray a = random_symmetric(n, rng);
    for (double& v : a.data()) v = 0.5 * (v + 1.0);
    for (std::size_t i = 0; i < n; ++i) a.at({i, i}) = 1.0;
    const Partition p = spectral_cluster(a, std::min<std::size_t>(n, 8), 11);
    CHECK_NOTHROW(validate_partition(p, n, true));
    CHECK(p == canonical_partition(p));
    CHECK(spectral_cluster(a, std::min<std::size_t>(n, 8), 11) == p);
  }

  for (int trial = 0; trial < 10; ++trial) {
    const auto planted = planted_affinity({3, 5, 2}, rng);
    std::vector<std::size_t> perm(10);
    for (std::size_t i = 0; i < 10; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    DenseArray moved({10, 10});
    for (std::size_t i = 0; i < 10; ++i)
      for (std::size_t j = 0; j < 10; ++j) moved.at({perm[i], perm[j]}) = planted.affinity.at({i, j});
    const Partition p = spectral_cluster(planted.affinity, 8, 3);
    CHECK(spectral_cluster(moved, 8, 3) == permuted(p, perm));
  }
}

TEST_CASE("partition distance oracle") {
  CHECK(partition_distance({{0, 1}, {2, 3}}, {{2, 3}, {0, 1}}, 4) == 0);
  CHECK(partition_distance({{0, 1, 2}, {3}}, {{0, 1}, {2, 3}}, 4) == 1);
  CHECK(partition_distance({{0, 1, 2, 3}}, {{0}, {1}, {2}, {3}}, 4) == 3);
}
