#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mpt/numerics/dense_array.hpp"
#include "mpt/numerics/param_store.hpp"
#include "mpt/numerics/tape.hpp"
#include "mpt/types.hpp"

/// Pairwise relation prediction and social-group detection.
namespace mpt::grouping {

/// Logit written on the relation diagonal; sigmoid of it is 1 in double precision.
inline constexpr double kDiagonalLogit = 50.0;

/// `relation.fc1` [3D→hidden], `relation.fc2` [hidden→1].
void init_relation_head(ParamStore& store, Initializer& init, std::size_t dim, std::size_t hidden);

/// logits_ij = MLP([x_i ; x_j ; x_i ⊙ x_j]), symmetrized as (L + Lᵀ)/2, with
/// the diagonal replaced by kDiagonalLogit (it carries no gradient). [N×N].
Var relation_logits(Tape& tape, const ParamStore& store, Var x_st);

/// Elementwise sigmoid with a unit diagonal.
DenseArray affinity_from_logits(const DenseArray& logits);

struct EigenDecomposition {
  std::vector<double> values;  // ascending
  DenseArray vectors;          // column i pairs with values[i]
};

/// Cyclic Jacobi rotations. Throws InputError if |a_ij − a_ji| > 1e-10.
EigenDecomposition sym_eigendecomp(const DenseArray& a);

struct ClusterOptions {
  std::size_t kmax = 8;
  std::uint64_t seed = 0;
  std::size_t restarts = 10;
};

/// Number of clusters chosen by the eigengap rule on ascending Laplacian
/// eigenvalues: argmax over k ∈ [1, min(kmax, n−1)] of λ_{k+1} − λ_k, first
/// maximum wins. Exposed for testing.
std::size_t eigengap_cluster_count(const std::vector<double>& ascending, std::size_t kmax);

/// Spectral clustering on the symmetric normalized Laplacian
/// L = I − D^{-1/2} W D^{-1/2}, W the affinity including its diagonal. Rows of the
/// first k eigenvectors are unit-normalized and clustered by seeded k-means++
/// with restarts. Nodes with no off-diagonal affinity become singletons. The result is a
/// canonical partition covering every node.
Partition spectral_cluster(const DenseArray& affinity, const ClusterOptions& options);
Partition spectral_cluster(const DenseArray& affinity, std::size_t kmax, std::uint64_t seed);

}  // namespace mpt::grouping
