#pragma once

#include <cstddef>
#include <string>

#include "mpt/numerics/param_store.hpp"
#include "mpt/numerics/tape.hpp"

/// Scene representation: visual scene tokens, pooling, and fusion into the
/// individual, group and global features.
namespace mpt::scene {

struct SceneConfig {
  std::size_t tokens = 16;
  std::size_t fusion_heads = 8;
};

/// Registers
///   scene.pos [C×H'×W']         learnable positional encoding
///   scene.assign [C→K]          pointwise token-assignment projection
///   scene.token_proj [C→D]      token projection
///   scene.fuse_individual.*     scene.fuse_social.*   cross-attention blocks
///   scene.fuse_global.fc1/fc2   [2D→2D→D] MLP
void init_scene(ParamStore& store, Initializer& init, const SceneConfig& cfg, std::size_t channels,
                std::size_t map_h, std::size_t map_w, std::size_t dim);

struct SceneTokens {
  Var tokens;     // Z [T×K×D]
  Var attention;  // A [T×K×(H'·W')], rows sum to 1
};

/// Z = proj(softmax_spatial(assign(X + P)) · (X + P)).
SceneTokens scene_tokens(Tape& tape, const ParamStore& store, Var feature_map);

/// Mean over frames and tokens: [1×D].
Var scene_pool(const SceneTokens& tokens);

/// Cross-attention fusion: rows of `x` [M×D] query the scene vector [1×D].
/// `name` selects the parameter block (scene.fuse_individual or scene.fuse_social).
Var fuse_with_scene(Tape& tape, const ParamStore& store, const std::string& name, Var x, Var scene,
                    std::size_t heads);
Var fuse_individual(Tape& tape, const ParamStore& store, const SceneConfig& cfg, Var x, Var scene);
Var fuse_social(Tape& tape, const ParamStore& store, const SceneConfig& cfg, Var groups, Var scene);

/// MLP over [g ; s]: [1×D].
Var fuse_global(Tape& tape, const ParamStore& store, Var global, Var scene);

}  // namespace mpt::scene
