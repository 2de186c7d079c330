#include "mpt/stre.hpp"

#include "mpt/error.hpp"
#include "mpt/numerics/layers.hpp"
#include "mpt/numerics/ops.hpp"

namespace mpt::stre {

Structure parse_structure(std::string_view name) {
  if (name == "serial") return Structure::serial;
  if (name == "parallel") return Structure::parallel;
  if (name == "parallel_then_serial") return Structure::parallel_then_serial;
  if (name == "one_cross") return Structure::one_cross;
  if (name == "two_cross") return Structure::two_cross;
  throw ConfigError("unknown STRE structure: " + std::string(name));
}

std::string_view to_string(Structure s) {
  switch (s) {
    case Structure::serial: return "serial";
    case Structure::parallel: return "parallel";
    case Structure::parallel_then_serial: return "parallel_then_serial";
    case Structure::one_cross: return "one_cross";
    case Structure::two_cross: return "two_cross";
  }
  throw ConfigError("unknown STRE structure");
}

void validate(const StreConfig& cfg, std::size_t dim) {
  if (cfg.layers == 0) throw ConfigError("STRE needs at least one layer");
  nn::check_heads(dim, cfg.heads);
}

void init_stre(ParamStore& store, Initializer& init, const StreConfig& cfg, std::size_t dim) {
  validate(cfg, dim);
  nn::init_encoder(store, init, "stre.spatial", dim, cfg.layers);
  nn::init_encoder(store, init, "stre.temporal", dim, cfg.layers);
  switch (cfg.structure) {
    case Structure::serial:
    case Structure::parallel:
      break;
    case Structure::parallel_then_serial:
      nn::init_encoder(store, init, "stre.spatial2", dim, cfg.layers);
      nn::init_encoder(store, init, "stre.temporal2", dim, cfg.layers);
      break;
    case Structure::two_cross:
      nn::init_cross_block(store, init, "stre.cross_ts", dim);
      [[fallthrough]];
    case Structure::one_cross:
      nn::init_cross_block(store, init, "stre.cross_st", dim);
      break;
  }
}

Var spatial_encode(Tape& tape, const ParamStore& store, const StreConfig& cfg, Var x, const std::string& name) {
  if (x.value().rank() != 3 || x.extent(1) == 0) {
    throw ShapeError("spatial_encode: expected [T×N×D] with N >= 1, got " + shape_string(x.shape()));
  }
  return nn::encoder(tape, store, name, x, cfg.layers, cfg.heads);
}

Var temporal_encode(Tape& tape, const ParamStore& store, const StreConfig& cfg, Var x, const std::string& name) {
  if (x.value().rank() != 3 || x.extent(0) == 0) {
    throw ShapeError("temporal_encode: expected [T×N×D] with T >= 1, got " + shape_string(x.shape()));
  }
  return nn::encoder(tape, store, name, ops::permute(x, {1, 0, 2}), cfg.layers, cfg.heads);
}

Var stre_forward(Tape& tape, const ParamStore& store, const StreConfig& cfg, Var x) {
  validate(cfg, x.extent(2));
  // Every branch ends in [N×T×D]; the time mean is taken over axis 1.
  auto to_nt = [](Var tn) { return ops::permute(tn, {1, 0, 2}); };
  auto to_tn = [](Var nt) { return ops::permute(nt, {1, 0, 2}); };

  Var fused;
  switch (cfg.structure) {
    case Structure::serial:
      fused = temporal_encode(tape, store, cfg, spatial_encode(tape, store, cfg, x));
      break;
    case Structure::parallel:
      fused = ops::add(to_nt(spatial_encode(tape, store, cfg, x)), temporal_encode(tape, store, cfg, x));
      break;
    case Structure::parallel_then_serial: {
      Var sum = ops::add(spatial_encode(tape, store, cfg, x), to_tn(temporal_encode(tape, store, cfg, x)));
      fused = temporal_encode(tape, store, cfg, spatial_encode(tape, store, cfg, sum, "stre.spatial2"),
                              "stre.temporal2");
      break;
    }
    case Structure::one_cross:
    case Structure::two_cross: {
      // Cross-attention runs along time, one sequence per individual.
      Var s = to_nt(spatial_encode(tape, store, cfg, x));
      Var t = temporal_encode(tape, store, cfg, x);
      fused = nn::cross_block(tape, store, "stre.cross_st", s, t, cfg.heads);
      if (cfg.structure == Structure::two_cross) {
        fused = ops::add(fused, nn::cross_block(tape, store, "stre.cross_ts", t, s, cfg.heads));
      }
      break;
    }
  }
  return ops::mean_axis(fused, 1);
}

}  // namespace mpt::stre
