#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mpt/numerics/param_store.hpp"
#include "mpt/numerics/tape.hpp"

namespace mpt {

/// Scalar objective recorded on a fresh tape from the given parameters.
using ScalarObjective = std::function<Var(Tape&, const ParamStore&)>;

struct ParamGradCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;  // at worst_index
  double numeric = 0.0;
  std::size_t coords_checked = 0;
};

struct GradCheckReport {
  std::vector<ParamGradCheck> params;

  double max_rel_error() const;
  /// Parameter with the largest error; requires a non-empty report.
  const ParamGradCheck& worst() const;
  bool passed(double tolerance) const { return max_rel_error() <= tolerance; }
};

struct GradCheckOptions {
  double h = 1e-5;
  /// Coordinates probed per parameter; 0 checks every coordinate. Larger
  /// parameters are subsampled with a seeded, sorted index draw.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 0;
};

/// Compares tape gradients against central differences
///   (f(θ + h e_i) − f(θ − h e_i)) / 2h
/// with relative error |g_a − g_n| / max(1, |g_a|, |g_n|) per coordinate.
/// Throws NumericError if two evaluations at the same point disagree.
GradCheckReport finite_diff_check(const ScalarObjective& f, const ParamStore& store,
                                  const GradCheckOptions& options = {});

}  // namespace mpt
