#include "mpt/psicga.hpp"

#include <string>

#include "mpt/error.hpp"
#include "mpt/numerics/layers.hpp"
#include "mpt/numerics/ops.hpp"

namespace mpt::psicga {
namespace {

const char* pia_name(Variant v) { return v == Variant::social ? "psicga.pia_social" : "psicga.pia_global"; }
const char* cls_name(Variant v) { return v == Variant::social ? "psicga.cls_social" : "psicga.cls_global"; }

}  // namespace

void validate(const AggregatorConfig& cfg, std::size_t dim) {
  if (cfg.pia_layers == 0 || cfg.psa_layers == 0) throw ConfigError("aggregation encoders need at least one layer");
  nn::check_heads(dim, cfg.pia_heads);
  nn::check_heads(dim, cfg.psa_heads);
  if (!(cfg.lambda_social >= 0.0) || !(cfg.lambda_global >= 0.0)) throw ConfigError("lambda must be >= 0");
}

void init_aggregator(ParamStore& store, Initializer& init, const AggregatorConfig& cfg, std::size_t dim) {
  validate(cfg, dim);
  nn::init_encoder(store, init, "psicga.psa", dim, cfg.psa_layers);
  nn::init_encoder(store, init, "psicga.pia_social", dim, cfg.pia_layers);
  nn::init_encoder(store, init, "psicga.pia_global", dim, cfg.pia_layers);
  store.add("psicga.cls_social", init.normal({1, dim}));
  store.add("psicga.cls_global", init.normal({1, dim}));
  store.add("psicga.pos", init.normal({cfg.max_members + 1, dim}));
}

Var build_sequence(Var members, Var cls, Var pos_table) {
  const std::size_t m = members.extent(0);
  const std::size_t capacity = pos_table.extent(0);
  if (m + 1 > capacity) {
    throw CapacityError("sequence of " + std::to_string(m) + " members exceeds position table capacity " +
                        std::to_string(capacity - 1));
  }
  Var seq = ops::concat({cls, members}, 0);
  return ops::add(seq, ops::slice(pos_table, 0, 0, m + 1));
}

Var aggregate_with_lambda(Tape& tape, const ParamStore& store, const AggregatorConfig& cfg, Var members,
                          Variant variant, double lambda) {
  if (members.value().rank() != 2 || members.extent(0) == 0) {
    throw ShapeError("aggregate: expected nonempty [M×D], got " + shape_string(members.shape()));
  }
  const std::size_t dim = members.extent(1);
  Var seq = build_sequence(members, tape.parameter(store, cls_name(variant)), tape.parameter(store, "psicga.pos"));
  Var batch = ops::reshape(seq, {1, seq.extent(0), dim});

  Var pia = nn::encoder(tape, store, pia_name(variant), batch, cfg.pia_layers, cfg.pia_heads);
  Var psa = nn::encoder(tape, store, "psicga.psa", batch, cfg.psa_layers, cfg.psa_heads);
  Var pia_cls = ops::reshape(ops::slice(pia, 1, 0, 1), {1, dim});
  Var psa_cls = ops::reshape(ops::slice(psa, 1, 0, 1), {1, dim});
  return ops::add(pia_cls, ops::scale(psa_cls, lambda));
}

Var aggregate(Tape& tape, const ParamStore& store, const AggregatorConfig& cfg, Var members, Variant variant) {
  const double lambda = variant == Variant::social ? cfg.lambda_social : cfg.lambda_global;
  return aggregate_with_lambda(tape, store, cfg, members, variant, lambda);
}

Var aggregate_groups(Tape& tape, const ParamStore& store, const AggregatorConfig& cfg, Var x_st,
                     const Partition& groups) {
  validate_partition(groups, x_st.extent(0), /*require_cover=*/false);
  if (groups.empty()) return tape.constant(DenseArray({0, x_st.extent(1)}));
  std::vector<Var> rows;
  rows.reserve(groups.size());
  for (const Group& g : groups) {
    rows.push_back(aggregate(tape, store, cfg, ops::gather_rows(x_st, g), Variant::social));
  }
  return ops::concat(rows, 0);
}

Var aggregate_global(Tape& tape, const ParamStore& store, const AggregatorConfig& cfg, Var x_st) {
  return aggregate(tape, store, cfg, x_st, Variant::global);
}

Var max_pool_groups(Var x_st, const Partition& groups) {
  validate_partition(groups, x_st.extent(0), /*require_cover=*/false);
  if (groups.empty()) return x_st.tape().constant(DenseArray({0, x_st.extent(1)}));
  std::vector<Var> rows;
  for (const Group& g : groups) {
    rows.push_back(ops::reshape(ops::max_axis(ops::gather_rows(x_st, g), 0), {1, x_st.extent(1)}));
  }
  return ops::concat(rows, 0);
}

Var max_pool_global(Var x_st) { return ops::reshape(ops::max_axis(x_st, 0), {1, x_st.extent(1)}); }

}  // namespace mpt::psicga
