#include "mpt/numerics/layers.hpp"

#include <cmath>

#include "mpt/error.hpp"
#include "mpt/numerics/ops.hpp"

namespace mpt::nn {

void check_heads(std::size_t dim, std::size_t heads) {
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("model width " + std::to_string(dim) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
}

void init_linear(ParamStore& store, Initializer& init, const std::string& name, std::size_t in,
                 std::size_t out, bool bias) {
  store.add(name + ".w", init.normal({in, out}, 1.0 / std::sqrt(static_cast<double>(in))));
  if (bias) store.add(name + ".b", init.zeros({out}));
}

Var linear(Tape& tape, const ParamStore& store, const std::string& name, Var x) {
  Var w = tape.parameter(store, name + ".w");
  if (store.contains(name + ".b")) return ops::linear(x, w, tape.parameter(store, name + ".b"));
  return ops::linear(x, w);
}

void init_layer_norm(ParamStore& store, const std::string& name, std::size_t dim) {
  store.add(name + ".gain", DenseArray({dim}, 1.0));
  store.add(name + ".bias", DenseArray({dim}, 0.0));
}

Var layer_norm(Tape& tape, const ParamStore& store, const std::string& name, Var x) {
  return ops::layer_norm(x, tape.parameter(store, name + ".gain"), tape.parameter(store, name + ".bias"),
                         kLayerNormEps);
}

void init_attention(ParamStore& store, Initializer& init, const std::string& name, std::size_t dim) {
  for (const char* proj : {".q", ".k", ".v", ".o"}) init_linear(store, init, name + proj, dim, dim);
}

namespace {

// [B×L×D] -> [B·h×L×D/h]
Var split_heads(Var x, std::size_t heads) {
  const std::size_t b = x.extent(0), l = x.extent(1), d = x.extent(2);
  Var r = ops::reshape(x, {b, l, heads, d / heads});
  r = ops::permute(r, {0, 2, 1, 3});
  return ops::reshape(r, {b * heads, l, d / heads});
}

// [B·h×L×dh] -> [B×L×h·dh]
Var merge_heads(Var x, std::size_t batch, std::size_t heads) {
  const std::size_t l = x.extent(1), dh = x.extent(2);
  Var r = ops::reshape(x, {batch, heads, l, dh});
  r = ops::permute(r, {0, 2, 1, 3});
  return ops::reshape(r, {batch, l, heads * dh});
}

}  // namespace

AttentionOutput multi_head_attention(Tape& tape, const ParamStore& store, const std::string& name,
                                     Var query_src, Var kv_src, std::size_t heads) {
  if (query_src.value().rank() != 3 || kv_src.value().rank() != 3 ||
      query_src.extent(0) != kv_src.extent(0) || query_src.extent(2) != kv_src.extent(2)) {
    throw ShapeError("multi_head_attention: query " + shape_string(query_src.shape()) + " vs key/value " +
                     shape_string(kv_src.shape()));
  }
  const std::size_t batch = query_src.extent(0);
  const std::size_t dim = query_src.extent(2);
  check_heads(dim, heads);
  const std::size_t head_dim = dim / heads;

  Var q = split_heads(linear(tape, store, name + ".q", query_src), heads);
  Var k = split_heads(linear(tape, store, name + ".k", kv_src), heads);
  Var v = split_heads(linear(tape, store, name + ".v", kv_src), heads);

  Var scores = ops::scale(ops::bmm(q, k, /*transpose_b=*/true), 1.0 / std::sqrt(static_cast<double>(head_dim)));
  Var weights = ops::softmax_lastdim(scores);
  Var context = merge_heads(ops::bmm(weights, v), batch, heads);
  return {linear(tape, store, name + ".o", context), weights};
}

void init_ffn(ParamStore& store, Initializer& init, const std::string& name, std::size_t dim,
              std::size_t hidden) {
  init_linear(store, init, name + ".fc1", dim, hidden);
  init_linear(store, init, name + ".fc2", hidden, dim);
}

Var ffn(Tape& tape, const ParamStore& store, const std::string& name, Var x) {
  return linear(tape, store, name + ".fc2", ops::gelu(linear(tape, store, name + ".fc1", x)));
}

void init_encoder_layer(ParamStore& store, Initializer& init, const std::string& name, std::size_t dim) {
  init_layer_norm(store, name + ".ln1", dim);
  init_attention(store, init, name + ".attn", dim);
  init_layer_norm(store, name + ".ln2", dim);
  init_ffn(store, init, name + ".ffn", dim, kFfnExpansion * dim);
}

Var encoder_layer(Tape& tape, const ParamStore& store, const std::string& name, Var x, std::size_t heads) {
  Var normed = layer_norm(tape, store, name + ".ln1", x);
  Var h = ops::add(x, multi_head_attention(tape, store, name + ".attn", normed, normed, heads).output);
  return ops::add(h, ffn(tape, store, name + ".ffn", layer_norm(tape, store, name + ".ln2", h)));
}

void init_encoder(ParamStore& store, Initializer& init, const std::string& name, std::size_t dim,
                  std::size_t layers) {
  for (std::size_t i = 0; i < layers; ++i) init_encoder_layer(store, init, name + "." + std::to_string(i), dim);
}

Var encoder(Tape& tape, const ParamStore& store, const std::string& name, Var x, std::size_t layers,
            std::size_t heads) {
  for (std::size_t i = 0; i < layers; ++i) x = encoder_layer(tape, store, name + "." + std::to_string(i), x, heads);
  return x;
}

void init_cross_block(ParamStore& store, Initializer& init, const std::string& name, std::size_t dim) {
  init_layer_norm(store, name + ".ln_q", dim);
  init_layer_norm(store, name + ".ln_kv", dim);
  init_attention(store, init, name + ".attn", dim);
  init_layer_norm(store, name + ".ln2", dim);
  init_ffn(store, init, name + ".ffn", dim, kFfnExpansion * dim);
}

Var cross_block(Tape& tape, const ParamStore& store, const std::string& name, Var q, Var kv,
                std::size_t heads) {
  Var qn = layer_norm(tape, store, name + ".ln_q", q);
  Var kvn = layer_norm(tape, store, name + ".ln_kv", kv);
  Var h = ops::add(q, multi_head_attention(tape, store, name + ".attn", qn, kvn, heads).output);
  return ops::add(h, ffn(tape, store, name + ".ffn", layer_norm(tape, store, name + ".ln2", h)));
}

void zero_output_projections(ParamStore& store, const std::string& prefix) {
  for (auto& [name, param] : store.entries()) {
    if (!name.starts_with(prefix)) continue;
    const bool attn_out = name.ends_with(".attn.o.w") || name.ends_with(".attn.o.b");
    const bool ffn_out = name.ends_with(".ffn.fc2.w") || name.ends_with(".ffn.fc2.b");
    if (attn_out || ffn_out) param.value.fill(0.0);
  }
}

}  // namespace mpt::nn
