#pragma once

#include <cstddef>
#include <string>

#include "mpt/numerics/param_store.hpp"
#include "mpt/numerics/tape.hpp"

/// Parameterized building blocks. Each block has an `init_*` function that
/// registers its parameters under a name prefix and an apply function that
/// reads them back from the store through the tape.
namespace mpt::nn {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr std::size_t kFfnExpansion = 4;

/// Parameters of a linear map: `<name>.w` [in×out], `<name>.b` [out].
void init_linear(ParamStore& store, Initializer& init, const std::string& name, std::size_t in,
                 std::size_t out, bool bias = true);
Var linear(Tape& tape, const ParamStore& store, const std::string& name, Var x);

/// `<name>.gain` (ones) and `<name>.bias` (zeros).
void init_layer_norm(ParamStore& store, const std::string& name, std::size_t dim);
Var layer_norm(Tape& tape, const ParamStore& store, const std::string& name, Var x);

void init_attention(ParamStore& store, Initializer& init, const std::string& name, std::size_t dim);

struct AttentionOutput {
  Var output;   // [B×Lq×D]
  Var weights;  // [B·heads×Lq×Lk]
};

/// Scaled dot-product attention over `heads` heads of width D/heads, scaled by
/// 1/sqrt(D/heads), concatenated and output-projected. Pass the same Var as
/// query and key/value source for self-attention.
AttentionOutput multi_head_attention(Tape& tape, const ParamStore& store, const std::string& name,
                                     Var query_src, Var kv_src, std::size_t heads);

/// Two-layer GELU feed-forward, D → hidden → D.
void init_ffn(ParamStore& store, Initializer& init, const std::string& name, std::size_t dim,
              std::size_t hidden);
Var ffn(Tape& tape, const ParamStore& store, const std::string& name, Var x);

/// Pre-norm self-attention block:
///   h = x + MHSA(LN1(x));  out = h + FFN(LN2(h)).
void init_encoder_layer(ParamStore& store, Initializer& init, const std::string& name, std::size_t dim);
Var encoder_layer(Tape& tape, const ParamStore& store, const std::string& name, Var x,
                  std::size_t heads);

/// Stack of encoder layers `<name>.0` .. `<name>.{layers-1}`.
void init_encoder(ParamStore& store, Initializer& init, const std::string& name, std::size_t dim,
                  std::size_t layers);
Var encoder(Tape& tape, const ParamStore& store, const std::string& name, Var x, std::size_t layers,
            std::size_t heads);

/// Pre-norm cross-attention block; queries come from `q`, keys/values from `kv`:
///   h = q + MHA(LNq(q), LNkv(kv));  out = h + FFN(LN2(h)).
void init_cross_block(ParamStore& store, Initializer& init, const std::string& name, std::size_t dim);
Var cross_block(Tape& tape, const ParamStore& store, const std::string& name, Var q, Var kv,
                std::size_t heads);

void check_heads(std::size_t dim, std::size_t heads);

/// Zeros every attention and FFN output projection below `prefix`, which
/// turns any residual block under it into the identity map.
void zero_output_projections(ParamStore& store, const std::string& prefix);

}  // namespace mpt::nn
