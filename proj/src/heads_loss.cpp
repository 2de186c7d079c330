#include "mpt/heads_loss.hpp"

#include <string>

#include "mpt/error.hpp"
#include "mpt/numerics/layers.hpp"
#include "mpt/numerics/ops.hpp"

namespace mpt::heads {
namespace {

const char* head_name(Head h) {
  switch (h) {
    case Head::individual: return "head.individual";
    case Head::social: return "head.social";
    case Head::global: return "head.global";
  }
  return "";
}

}  // namespace

void validate(const LabelTaxonomy& taxonomy) {
  if (taxonomy.individual == 0 || taxonomy.social == 0 || taxonomy.global == 0) {
    throw ConfigError("every granularity needs at least one class");
  }
}

void init_heads(ParamStore& store, Initializer& init, const LabelTaxonomy& taxonomy, std::size_t dim) {
  validate(taxonomy);
  nn::init_linear(store, init, head_name(Head::individual), dim, taxonomy.individual);
  nn::init_linear(store, init, head_name(Head::social), dim, taxonomy.social);
  nn::init_linear(store, init, head_name(Head::global), dim, taxonomy.global);
}

Var classify(Tape& tape, const ParamStore& store, Var features, Head head) {
  if (features.value().rank() != 2) throw ShapeError("classify: expected [M×D], got " + shape_string(features.shape()));
  return nn::linear(tape, store, head_name(head), features);
}

LossBreakdown LossTerms::values() const {
  return {individual.value().item(), social.value().item(), global.value().item(), detection.value().item(),
          total.value().item()};
}

LossTerms multitask_loss(Var individual_logits, Var social_logits, Var global_logits, Var relation_logits,
                         const LossTargets& targets) {
  const std::size_t n = relation_logits.value().rank() == 2 ? relation_logits.extent(0) : 0;
  if (relation_logits.shape() != targets.relation.shape()) throw ShapeError("multitask_loss: relation shape mismatch");
  DenseArray off_diag({n, n}, 1.0);
  for (std::size_t i = 0; i < n; ++i) off_diag.at({i, i}) = 0.0;

  LossTerms terms;
  terms.individual = ops::bce_with_logits(individual_logits, targets.individual);
  terms.social = ops::bce_with_logits(social_logits, targets.social);
  terms.global = ops::bce_with_logits(global_logits, targets.global);
  terms.detection = ops::bce_with_logits(relation_logits, targets.relation, &off_diag);
  terms.total = ops::add(ops::add(ops::add(terms.individual, terms.social), terms.global), terms.detection);
  return terms;
}

DenseArray multi_hot(const std::vector<LabelSet>& labels, std::size_t classes) {
  DenseArray out({labels.size(), classes}, 0.0);
  for (std::size_t r = 0; r < labels.size(); ++r)
    for (std::size_t c : labels[r]) {
      if (c >= classes) throw InputError("label " + std::to_string(c) + " outside " + std::to_string(classes) + " classes");
      out.at({r, c}) = 1.0;
    }
  return out;
}

std::vector<LabelSet> decide_labels(const DenseArray& logits, double threshold) {
  if (logits.rank() != 2) throw ShapeError("decide_labels: expected [M×C]");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("decide_labels: threshold must lie in (0,1)");
  const std::size_t rows = logits.extent(0), classes = logits.extent(1);
  std::vector<LabelSet> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double z = logits.at({r, c});
      if (ops::sigmoid(z) > threshold) out[r].push_back(c);
      if (z > logits.at({r, best})) best = c;
    }
    if (out[r].empty() && classes > 0) out[r].push_back(best);
  }
  return out;
}

}  // namespace mpt::heads
