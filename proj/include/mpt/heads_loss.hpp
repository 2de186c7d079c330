#pragma once

#include <cstddef>
#include <vector>

#include "mpt/numerics/dense_array.hpp"
#include "mpt/numerics/param_store.hpp"
#include "mpt/numerics/tape.hpp"
#include "mpt/types.hpp"

/// Multi-label classification heads and the four-term training objective.
namespace mpt::heads {

struct LabelTaxonomy {
  std::size_t individual = 6;
  std::size_t social = 4;
  std::size_t global = 3;
  friend bool operator==(const LabelTaxonomy&, const LabelTaxonomy&) = default;
};

void validate(const LabelTaxonomy& taxonomy);

enum class Head { individual, social, global };

/// One linear layer per head: `head.individual`, `head.social`, `head.global`.
void init_heads(ParamStore& store, Initializer& init, const LabelTaxonomy& taxonomy, std::size_t dim);

/// features [M×D] → logits [M×C_head]. M may be zero.
Var classify(Tape& tape, const ParamStore& store, Var features, Head head);

struct LossBreakdown {
  double individual = 0;
  double social = 0;
  double global = 0;
  double detection = 0;
  double total = 0;
};

struct LossTerms {
  Var individual, social, global, detection, total;
  LossBreakdown values() const;
};

/// Ground truth consumed by the loss. Social targets are aligned with the
/// ground-truth groups the social logits were computed from.
struct LossTargets {
  DenseArray individual;  // [N×C_I] multi-hot
  DenseArray social;      // [G×C_S]
  DenseArray global;      // [1×C_G]
  DenseArray relation;    // [N×N] same-group indicator
};

/// Unweighted sum of four mean binary cross-entropies; the detection term
/// covers off-diagonal relation entries only.
LossTerms multitask_loss(Var individual_logits, Var social_logits, Var global_logits, Var relation_logits,
                         const LossTargets& targets);

/// [M×classes] 0/1 matrix.
DenseArray multi_hot(const std::vector<LabelSet>& labels, std::size_t classes);

/// A label is present iff sigmoid(logit) > threshold; a row with no label
/// above threshold gets its argmax label instead.
std::vector<LabelSet> decide_labels(const DenseArray& logits, double threshold = 0.5);

}  // namespace mpt::heads
