#pragma once

#include <cstddef>

#include "mpt/numerics/param_store.hpp"
#include "mpt/numerics/tape.hpp"
#include "mpt/types.hpp"

/// Cross-granularity aggregation with a shared encoder (PSA) used by both the
/// social and the global path, plus one independent encoder (PIA) per path.
namespace mpt::psicga {

enum class Variant { social, global };

struct AggregatorConfig {
  std::size_t pia_layers = 4;
  std::size_t pia_heads = 12;
  std::size_t psa_layers = 2;
  std::size_t psa_heads = 12;
  double lambda_social = 0.8;
  double lambda_global = 1.0;
  /// Capacity of the position table (members per sequence, cls excluded).
  std::size_t max_members = 64;
};

void validate(const AggregatorConfig& cfg, std::size_t dim);

/// Registers
///   psicga.psa.*          shared encoder
///   psicga.pia_social.*   psicga.pia_global.*
///   psicga.cls_social     psicga.cls_global   [1×D]
///   psicga.pos            [(max_members+1)×D], shared by both paths
void init_aggregator(ParamStore& store, Initializer& init, const AggregatorConfig& cfg, std::size_t dim);

/// [cls; m_1 .. m_M] + pos[0 .. M]. Throws CapacityError when M exceeds the table.
Var build_sequence(Var members, Var cls, Var pos_table);

/// One aggregation: the sequence is built once and run through PIA_variant and
/// PSA; the result is cls_PIA + λ_variant · cls_PSA, shape [1×D].
Var aggregate(Tape& tape, const ParamStore& store, const AggregatorConfig& cfg, Var members, Variant variant);

/// Same as `aggregate` with an explicit λ (used to probe the λ structure).
Var aggregate_with_lambda(Tape& tape, const ParamStore& store, const AggregatorConfig& cfg, Var members,
                          Variant variant, double lambda);

/// Row g aggregates the members of group g (social variant): [G×D].
Var aggregate_groups(Tape& tape, const ParamStore& store, const AggregatorConfig& cfg, Var x_st,
                     const Partition& groups);

/// Global aggregation over all individuals: [1×D].
Var aggregate_global(Tape& tape, const ParamStore& store, const AggregatorConfig& cfg, Var x_st);

/// Ablation replacement: elementwise max over members, [G×D] / [1×D].
Var max_pool_groups(Var x_st, const Partition& groups);
Var max_pool_global(Var x_st);

}  // namespace mpt::psicga
