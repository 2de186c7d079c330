#include "mpt/scene.hpp"

#include "mpt/error.hpp"
#include "mpt/numerics/layers.hpp"
#include "mpt/numerics/ops.hpp"

namespace mpt::scene {

void init_scene(ParamStore& store, Initializer& init, const SceneConfig& cfg, std::size_t channels,
                std::size_t map_h, std::size_t map_w, std::size_t dim) {
  if (cfg.tokens == 0) throw ConfigError("scene token count must be positive");
  nn::check_heads(dim, cfg.fusion_heads);
  store.add("scene.pos", init.normal({channels, map_h, map_w}));
  nn::init_linear(store, init, "scene.assign", channels, cfg.tokens);
  nn::init_linear(store, init, "scene.token_proj", channels, dim);
  nn::init_cross_block(store, init, "scene.fuse_individual", dim);
  nn::init_cross_block(store, init, "scene.fuse_social", dim);
  nn::init_linear(store, init, "scene.fuse_global.fc1", 2 * dim, 2 * dim);
  nn::init_linear(store, init, "scene.fuse_global.fc2", 2 * dim, dim);
}

SceneTokens scene_tokens(Tape& tape, const ParamStore& store, Var feature_map) {
  const Shape& s = feature_map.shape();
  if (s.size() != 4) throw ShapeError("scene_tokens: expected [T×C×H'×W'], got " + shape_string(s));
  const std::size_t t = s[0], c = s[1], hw = s[2] * s[3];

  Var x = ops::add(feature_map, tape.parameter(store, "scene.pos"));
  Var pixels = ops::permute(ops::reshape(x, {t, c, hw}), {0, 2, 1});          // [T×HW×C]
  Var logits = ops::permute(nn::linear(tape, store, "scene.assign", pixels), {0, 2, 1});  // [T×K×HW]
  Var attention = ops::softmax_lastdim(logits);
  Var pooled = ops::bmm(attention, pixels);                                     // [T×K×C]
  return {nn::linear(tape, store, "scene.token_proj", pooled), attention};
}

Var scene_pool(const SceneTokens& tokens) {
  const Shape& s = tokens.tokens.shape();
  Var flat = ops::reshape(tokens.tokens, {s[0] * s[1], s[2]});
  return ops::reshape(ops::mean_axis(flat, 0), {1, s[2]});
}

Var fuse_with_scene(Tape& tape, const ParamStore& store, const std::string& name, Var x, Var scene,
                    std::size_t heads) {
  if (x.value().rank() != 2 || scene.value().rank() != 2 || scene.extent(0) != 1 || x.extent(1) != scene.extent(1)) {
    throw ShapeError("fuse_with_scene: features " + shape_string(x.shape()) + " vs scene " + shape_string(scene.shape()));
  }
  const std::size_t m = x.extent(0), d = x.extent(1);
  Var q = ops::reshape(x, {1, m, d});
  Var kv = ops::reshape(scene, {1, 1, d});
  return ops::reshape(nn::cross_block(tape, store, name, q, kv, heads), {m, d});
}

Var fuse_individual(Tape& tape, const ParamStore& store, const SceneConfig& cfg, Var x, Var scene) {
  return fuse_with_scene(tape, store, "scene.fuse_individual", x, scene, cfg.fusion_heads);
}

Var fuse_social(Tape& tape, const ParamStore& store, const SceneConfig& cfg, Var groups, Var scene) {
  return fuse_with_scene(tape, store, "scene.fuse_social", groups, scene, cfg.fusion_heads);
}

Var fuse_global(Tape& tape, const ParamStore& store, Var global, Var scene) {
  Var joint = ops::concat({global, scene}, 1);
  Var hidden = ops::gelu(nn::linear(tape, store, "scene.fuse_global.fc1", joint));
  return nn::linear(tape, store, "scene.fuse_global.fc2", hidden);
}

}  // namespace mpt::scene
