#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "mpt/types.hpp"

/// Panoramic evaluation: multi-label P/R/F per granularity, Half-metric group
/// matching for social groups, and the overall F_a.
namespace mpt::metrics {

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// 2PR/(P+R), or 0 when P+R = 0.
double harmonic_f1(double precision, double recall);

/// Per-instance precision |∩|/|pred| (0 for an empty prediction), recall
/// |∩|/|gt| and their harmonic F1. `gt` must be nonempty.
PRF instance_prf(const LabelSet& pred, const LabelSet& gt);

/// example: mean of per-instance P, R and F1.
/// micro:   P, R from pooled label counts; F1 from that pair.
enum class Averaging { example, micro };

PRF multilabel_prf(const std::vector<LabelSet>& preds, const std::vector<LabelSet>& gts,
                   Averaging averaging = Averaging::example);

using Match = std::pair<std::size_t, std::size_t>;  // (pred group, gt group)

double group_iou(const Group& a, const Group& b);

/// Pairs whose member IoU exceeds 0.5. Such pairs are necessarily one-to-one;
/// a violation throws.
std::vector<Match> half_match(const Partition& pred, const Partition& gt);

struct LabeledPartition {
  Partition groups;
  std::vector<LabelSet> labels;  // one nonempty set per group
};

/// Precision: mean over predicted groups of the label precision against the
/// Half-matched ground-truth group (0 when unmatched). Recall: the same over
/// ground-truth groups. F1 from that (P, R) pair. Micro averaging pools label
/// counts instead.
PRF social_prf(const LabeledPartition& pred, const LabeledPartition& gt, Averaging averaging = Averaging::example);

struct PanoramicScore {
  PRF individual;
  PRF social;
  PRF global;
  double overall = 0.0;  // (F_i + F_p + F_g) / 3
};

PanoramicScore overall_score(const PRF& individual, const PRF& social, const PRF& global);

/// Value rounded to one decimal, ties to even.
double round_1dp(double value);
/// fraction · 100 rounded to one decimal, ties to even.
double percent_1dp(double fraction);

/// Dataset-level score built clip by clip. Sums are kept and divided only in
/// score(), so the result does not depend on clip order or on how clips were
/// split across accumulators before merge().
class ScoreAccumulator {
 public:
  explicit ScoreAccumulator(Averaging averaging = Averaging::example) : averaging_(averaging) {}

  void add_clip(const std::vector<LabelSet>& pred_individual, const std::vector<LabelSet>& gt_individual,
                const LabeledPartition& pred_social, const LabeledPartition& gt_social, const LabelSet& pred_global,
                const LabelSet& gt_global);

  void merge(const ScoreAccumulator& other);
  PanoramicScore score() const;

  struct InstanceSums {
    double precision = 0, recall = 0, f1 = 0;
    std::size_t count = 0;
    std::size_t hits = 0, predicted = 0, actual = 0;  // micro counts

    void add(const LabelSet& pred, const LabelSet& gt);
    void merge(const InstanceSums& o);
    PRF result(Averaging averaging) const;
  };
  struct SocialSums {
    double precision = 0, recall = 0;
    std::size_t pred_groups = 0, gt_groups = 0;
    std::size_t hits = 0, predicted = 0, actual = 0;

    void add(const LabeledPartition& pred, const LabeledPartition& gt);
    void merge(const SocialSums& o);
    PRF result(Averaging averaging) const;
  };

 private:
  Averaging averaging_;
  InstanceSums individual_, global_;
  SocialSums social_;
};

}  // namespace mpt::metrics
