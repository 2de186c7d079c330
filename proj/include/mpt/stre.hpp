#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "mpt/numerics/param_store.hpp"
#include "mpt/numerics/tape.hpp"

/// Spatio-temporal relation enhancement of per-individual features.
namespace mpt::stre {

/// How the spatial and temporal encoders are combined.
///   serial               temporal(spatial(x))
///   parallel             spatial(x) + temporal(x)
///   parallel_then_serial a second spatial→temporal stage on the parallel sum
///   one_cross            spatial branch queries the temporal branch
///   two_cross            both branches query each other, results summed
enum class Structure { serial, parallel, parallel_then_serial, one_cross, two_cross };

Structure parse_structure(std::string_view name);
std::string_view to_string(Structure s);

struct StreConfig {
  std::size_t layers = 2;
  std::size_t heads = 8;
  Structure structure = Structure::serial;
};

void validate(const StreConfig& cfg, std::size_t dim);
void init_stre(ParamStore& store, Initializer& init, const StreConfig& cfg, std::size_t dim);

/// Self-attention across individuals, frames acting as the batch:
/// [T×N×D] → [T×N×D]. No positional encoding.
Var spatial_encode(Tape& tape, const ParamStore& store, const StreConfig& cfg, Var x,
                   const std::string& name = "stre.spatial");

/// Transposes to [N×T×D] and self-attends across frames per individual:
/// [T×N×D] → [N×T×D]. No positional encoding, so the encoder is
/// equivariant to frame permutations.
Var temporal_encode(Tape& tape, const ParamStore& store, const StreConfig& cfg, Var x,
                    const std::string& name = "stre.temporal");

/// [T×N×D] → X_st [N×D]: the configured structure followed by a mean over time.
Var stre_forward(Tape& tape, const ParamStore& store, const StreConfig& cfg, Var x);

}  // namespace mpt::stre
