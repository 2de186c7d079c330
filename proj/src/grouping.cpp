#include "mpt/grouping.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "mpt/error.hpp"
#include "mpt/numerics/layers.hpp"
#include "mpt/numerics/ops.hpp"

namespace mpt::grouping {

void init_relation_head(ParamStore& store, Initializer& init, std::size_t dim, std::size_t hidden) {
  nn::init_linear(store, init, "relation.fc1", 3 * dim, hidden);
  nn::init_linear(store, init, "relation.fc2", hidden, 1);
}

Var relation_logits(Tape& tape, const ParamStore& store, Var x_st) {
  if (x_st.value().rank() != 2 || x_st.extent(0) == 0) {
    throw ShapeError("relation_logits: expected [N×D] with N >= 1, got " + shape_string(x_st.shape()));
  }
  const std::size_t n = x_st.extent(0);
  std::vector<std::size_t> rows(n * n), cols(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      rows[i * n + j] = i;
      cols[i * n + j] = j;
    }
  Var xi = ops::gather_rows(x_st, rows);
  Var xj = ops::gather_rows(x_st, cols);
  Var pairs = ops::concat({xi, xj, ops::mul(xi, xj)}, 1);
  Var hidden = ops::gelu(nn::linear(tape, store, "relation.fc1", pairs));
  Var raw = ops::reshape(nn::linear(tape, store, "relation.fc2", hidden), {n, n});
  Var sym = ops::scale(ops::add(raw, ops::permute(raw, {1, 0})), 0.5);

  DenseArray off_diag({n, n}, 1.0), diag({n, n}, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    off_diag.at({i, i}) = 0.0;
    diag.at({i, i}) = kDiagonalLogit;
  }
  return ops::add(ops::mul(sym, tape.constant(std::move(off_diag))), tape.constant(std::move(diag)));
}

DenseArray affinity_from_logits(const DenseArray& logits) {
  if (logits.rank() != 2 || logits.extent(0) != logits.extent(1)) throw ShapeError("relation logits must be square");
  const std::size_t n = logits.extent(0);
  DenseArray a({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a.at({i, j}) = i == j ? 1.0 : ops::sigmoid(logits.at({i, j}));
  return a;
}

EigenDecomposition sym_eigendecomp(const DenseArray& input) {
  if (input.rank() != 2 || input.extent(0) != input.extent(1)) throw ShapeError("sym_eigendecomp: matrix must be square");
  if (!input.all_finite()) throw NumericError("sym_eigendecomp: non-finite input");
  const std::size_t n = input.extent(0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(input.at({i, j}) - input.at({j, i})) > 1e-10) throw InputError("sym_eigendecomp: matrix is not symmetric");

  std::vector<double> a(input.data().begin(), input.data().end());
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  auto A = [&](std::size_t i, std::size_t j) -> double& { return a[i * n + j]; };
  auto V = [&](std::size_t i, std::size_t j) -> double& { return v[i * n + j]; };

  double frob = 0.0;
  for (double x : a) frob += x * x;
  const double threshold = std::numeric_limits<double>::epsilon() * std::numeric_limits<double>::epsilon() *
                           std::max(frob, std::numeric_limits<double>::min());

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += A(p, q) * A(p, q);
    if (off <= threshold) break;

    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = A(p, q);
        if (apq == 0.0) continue;
        const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = A(k, p), akq = A(k, q);
          A(k, p) = c * akp - s * akq;
          A(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = A(p, k), aqk = A(q, k);
          A(p, k) = c * apk - s * aqk;
          A(q, k) = s * apk + c * aqk;
        }
        A(p, q) = A(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = V(k, p), vkq = V(k, q);
          V(k, p) = c * vkp - s * vkq;
          V(k, q) = s * vkp + c * vkq;
        }
      }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return A(x, x) < A(y, y); });

  EigenDecomposition out;
  out.vectors = DenseArray({n, n});
  for (std::size_t col = 0; col < n; ++col) {
    out.values.push_back(A(order[col], order[col]));
    for (std::size_t row = 0; row < n; ++row) out.vectors.at({row, col}) = V(row, order[col]);
  }
  return out;
}

std::size_t eigengap_cluster_count(const std::vector<double>& ascending, std::size_t kmax) {
  const std::size_t n = ascending.size();
  if (n <= 1) return n;
  const std::size_t cap = std::min(std::max<std::size_t>(kmax, 1), n - 1);
  std::size_t best = 1;
  double best_gap = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k <= cap; ++k) {
    const double gap = ascending[k] - ascending[k - 1];
    if (gap > best_gap) {
      best_gap = gap;
      best = k;
    }
  }
  return best;
}

namespace {

double squared_distance(const double* a, const double* b, std::size_t dim) {
  double d = 0.0;
  for (std::size_t i = 0; i < dim; ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

// Rows of `points` [m×dim] into k clusters; returns labels.
std::vector<std::size_t> kmeans(const std::vector<double>& points, std::size_t m, std::size_t dim, std::size_t k,
                                std::size_t restarts, std::mt19937_64& rng) {
  std::vector<std::size_t> best_labels(m, 0);
  double best_inertia = std::numeric_limits<double>::infinity();
  const auto point = [&](std::size_t i) { return points.data() + i * dim; };

  for (std::size_t r = 0; r < std::max<std::size_t>(restarts, 1); ++r) {
    // k-means++ seeding.
    std::vector<double> centers;
    std::uniform_int_distribution<std::size_t> first(0, m - 1);
    const std::size_t c0 = first(rng);
    centers.insert(centers.end(), point(c0), point(c0) + dim);
    std::vector<double> nearest(m);
    while (centers.size() < k * dim) {
      double total = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c * dim < centers.size(); ++c)
          best = std::min(best, squared_distance(point(i), centers.data() + c * dim, dim));
        nearest[i] = best;
        total += best;
      }
      std::size_t pick = 0;
      if (total > 0) {
        double target = std::uniform_real_distribution<double>(0.0, total)(rng);
        for (pick = 0; pick + 1 < m; ++pick) {
          target -= nearest[pick];
          if (target < 0) break;
        }
      } else {
        pick = first(rng);
      }
      centers.insert(centers.end(), point(pick), point(pick) + dim);
    }

    std::vector<std::size_t> labels(m, 0);
    for (int iter = 0; iter < 100; ++iter) {
      bool changed = iter == 0;
      for (std::size_t i = 0; i < m; ++i) {
        std::size_t best_c = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
          const double d = squared_distance(point(i), centers.data() + c * dim, dim);
          if (d < best_d) {
            best_d = d;
            best_c = c;
          }
        }
        if (labels[i] != best_c) changed = true;
        labels[i] = best_c;
      }
      if (!changed) break;
      std::vector<double> sums(k * dim, 0.0);
      std::vector<std::size_t> counts(k, 0);
      for (std::size_t i = 0; i < m; ++i) {
        ++counts[labels[i]];
        for (std::size_t d = 0; d < dim; ++d) sums[labels[i] * dim + d] += point(i)[d];
      }
      for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] == 0) {
          // Re-seed an empty cluster at the point farthest from its centre.
          std::size_t far = 0;
          double far_d = -1.0;
          for (std::size_t i = 0; i < m; ++i) {
            const double d = squared_distance(point(i), centers.data() + labels[i] * dim, dim);
            if (d > far_d) {
              far_d = d;
              far = i;
            }
          }
          std::copy(point(far), point(far) + dim, centers.begin() + c * dim);
          continue;
        }
        for (std::size_t d = 0; d < dim; ++d) centers[c * dim + d] = sums[c * dim + d] / counts[c];
      }
    }

    double inertia = 0.0;
    for (std::size_t i = 0; i < m; ++i) inertia += squared_distance(point(i), centers.data() + labels[i] * dim, dim);
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best_labels = labels;
    }
  }
  return best_labels;
}

}  // namespace

Partition spectral_cluster(const DenseArray& affinity, const ClusterOptions& options) {
  if (affinity.rank() != 2 || affinity.extent(0) != affinity.extent(1)) {
    throw ShapeError("spectral_cluster: affinity must be square");
  }
  if (options.kmax == 0) throw ConfigError("spectral_cluster: kmax must be positive");
  const std::size_t n = affinity.extent(0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double v = affinity.at({i, j});
      if (!(v >= 0.0 && v <= 1.0)) throw InputError("spectral_cluster: affinity outside [0,1]");
      if (std::abs(v - affinity.at({j, i})) > 1e-10) throw InputError("spectral_cluster: affinity is not symmetric");
    }

  Partition result;
  std::vector<std::size_t> active;
  std::vector<double> degree(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double links = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) links += affinity.at({i, j});
    degree[i] = links + affinity.at({i, i});
    if (links > 1e-12) {
      active.push_back(i);
    } else {
      result.push_back({i});
    }
  }

  const std::size_t m = active.size();
  if (m == 1) result.push_back({active.front()});
  if (m >= 2) {
    DenseArray laplacian({m, m});
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < m; ++b) {
        const std::size_t i = active[a], j = active[b];
        const double w = affinity.at({i, j});
        laplacian.at({a, b}) = (a == b ? 1.0 : 0.0) - w / std::sqrt(degree[i] * degree[j]);
      }
    const EigenDecomposition eig = sym_eigendecomp(laplacian);
    const std::size_t k = eigengap_cluster_count(eig.values, std::min(options.kmax, n));

    std::vector<double> embedding(m * k);
    for (std::size_t a = 0; a < m; ++a) {
      double norm = 0.0;
      for (std::size_t c = 0; c < k; ++c) norm += eig.vectors.at({a, c}) * eig.vectors.at({a, c});
      norm = std::sqrt(norm);
      for (std::size_t c = 0; c < k; ++c) embedding[a * k + c] = norm > 0 ? eig.vectors.at({a, c}) / norm : 0.0;
    }
    std::mt19937_64 rng(options.seed);
    const auto labels = kmeans(embedding, m, k, k, options.restarts, rng);
    std::vector<Group> clusters(k);
    for (std::size_t a = 0; a < m; ++a) clusters[labels[a]].push_back(active[a]);
    for (Group& g : clusters)
      if (!g.empty()) result.push_back(std::move(g));
  }
  return canonical_partition(std::move(result));
}

Partition spectral_cluster(const DenseArray& affinity, std::size_t kmax, std::uint64_t seed) {
  return spectral_cluster(affinity, ClusterOptions{kmax, seed, 10});
}

}  // namespace mpt::grouping
