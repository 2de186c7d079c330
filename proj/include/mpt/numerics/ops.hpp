#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "mpt/numerics/dense_array.hpp"
#include "mpt/numerics/tape.hpp"

/// Differentiable array operations. Each Var overload records one node on the
/// tape of its first argument; the DenseArray overloads are the plain kernels.
namespace mpt::ops {

// Plain kernels.
DenseArray softmax_lastdim(const DenseArray& x);
DenseArray layer_norm(const DenseArray& x, const DenseArray& gain, const DenseArray& bias,
                      double eps = 1e-5);
DenseArray gelu(const DenseArray& x);
double sigmoid(double z);
/// Mean binary cross-entropy of logits against {0,1} targets, restricted to
/// positions where mask is nonzero (all positions when mask is null). An
/// empty selection yields 0.
double bce_with_logits(const DenseArray& logits, const DenseArray& targets,
                       const DenseArray* mask = nullptr);

// Elementwise. `b` must have the shape of `a` or a suffix of it (broadcast
// over the leading axes).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var gelu(Var x);

/// x[..., in] · w[in, out] (+ b[out]).
Var linear(Var x, Var w, std::optional<Var> b = std::nullopt);
/// Batched a[B,M,K] · b[B,K,N], or a · bᵀ with b[B,N,K] when transpose_b.
Var bmm(Var a, Var b, bool transpose_b = false);

Var softmax_lastdim(Var x);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

// Layout.
Var reshape(Var x, Shape shape);
Var permute(Var x, const std::vector<std::size_t>& perm);
Var concat(const std::vector<Var>& parts, std::size_t axis);
Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end);
/// Rows of x along axis 0, in the given order (repeats allowed).
Var gather_rows(Var x, std::span<const std::size_t> rows);

// Reductions.
Var mean_axis(Var x, std::size_t axis);
/// Max along an axis; the gradient goes to the first maximal element.
Var max_axis(Var x, std::size_t axis);
Var sum(Var x);

Var bce_with_logits(Var logits, const DenseArray& targets, const DenseArray* mask = nullptr);

}  // namespace mpt::ops
