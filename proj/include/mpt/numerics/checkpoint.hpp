#pragma once

#include <cstdint>
#include <string>

#include "mpt/numerics/param_store.hpp"

namespace mpt {

/// Parameter checkpoint container (all integers little-endian):
///
///   "MPTC"                     magic
///   u32  format version (1)
///   u64  optimizer step counter
///   u32  metadata length, bytes   free-form key/value text (model config)
///   u64  parameter count
///   per parameter, in name order:
///     u32 name length, name bytes
///     u32 rank, rank × u64 extents
///     product(extents) × f64 values
///
/// Optimizer moments are not stored.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ParamStore params;
  std::string metadata;
};

void write_checkpoint(const std::string& path, const ParamStore& params, const std::string& metadata);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace mpt
