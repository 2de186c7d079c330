#include "mpt/metrics.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <iterator>

#include "mpt/error.hpp"

namespace mpt::metrics {
namespace {

std::size_t overlap(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::vector<std::size_t> sa(a), sb(b), common;
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(common));
  return common.size();
}

double ratio(double num, double den) { return den > 0 ? num / den : 0.0; }

void check_labeled(const LabeledPartition& p, const char* which) {
  if (p.groups.size() != p.labels.size()) {
    throw InputError(std::string(which) + ": every group needs a label set");
  }
}

}  // namespace

double harmonic_f1(double precision, double recall) {
  return precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

PRF instance_prf(const LabelSet& pred, const LabelSet& gt) {
  if (gt.empty()) throw InputError("ground-truth label set is empty");
  const double hits = static_cast<double>(overlap(pred, gt));
  PRF out;
  out.precision = ratio(hits, static_cast<double>(pred.size()));
  out.recall = hits / static_cast<double>(gt.size());
  out.f1 = harmonic_f1(out.precision, out.recall);
  return out;
}

void ScoreAccumulator::InstanceSums::add(const LabelSet& pred, const LabelSet& gt) {
  const PRF prf = instance_prf(pred, gt);
  precision += prf.precision;
  recall += prf.recall;
  f1 += prf.f1;
  ++count;
  hits += overlap(pred, gt);
  predicted += pred.size();
  actual += gt.size();
}

void ScoreAccumulator::InstanceSums::merge(const InstanceSums& o) {
  precision += o.precision;
  recall += o.recall;
  f1 += o.f1;
  count += o.count;
  hits += o.hits;
  predicted += o.predicted;
  actual += o.actual;
}

PRF ScoreAccumulator::InstanceSums::result(Averaging averaging) const {
  PRF out;
  if (averaging == Averaging::example) {
    const double n = static_cast<double>(count);
    out.precision = ratio(precision, n);
    out.recall = ratio(recall, n);
    out.f1 = ratio(f1, n);
  } else {
    out.precision = ratio(static_cast<double>(hits), static_cast<double>(predicted));
    out.recall = ratio(static_cast<double>(hits), static_cast<double>(actual));
    out.f1 = harmonic_f1(out.precision, out.recall);
  }
  return out;
}

PRF multilabel_prf(const std::vector<LabelSet>& preds, const std::vector<LabelSet>& gts, Averaging averaging) {
  if (preds.size() != gts.size()) throw InputError("multilabel_prf: prediction and ground-truth lists differ in length");
  ScoreAccumulator::InstanceSums sums;
  for (std::size_t i = 0; i < preds.size(); ++i) sums.add(preds[i], gts[i]);
  return sums.result(averaging);
}

double group_iou(const Group& a, const Group& b) {
  const std::size_t inter = overlap(a, b);
  const std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<Match> half_match(const Partition& pred, const Partition& gt) {
  std::vector<Match> matches;
  std::vector<bool> pred_used(pred.size(), false), gt_used(gt.size(), false);
  for (std::size_t p = 0; p < pred.size(); ++p)
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (group_iou(pred[p], gt[g]) <= 0.5) continue;
      if (pred_used[p] || gt_used[g]) throw Error("half_match: IoU > 0.5 matched a group twice");
      pred_used[p] = gt_used[g] = true;
      matches.emplace_back(p, g);
    }
  return matches;
}

void ScoreAccumulator::SocialSums::add(const LabeledPartition& pred, const LabeledPartition& gt) {
  check_labeled(pred, "predicted groups");
  check_labeled(gt, "ground-truth groups");
  for (const Match& m : half_match(pred.groups, gt.groups)) {
    const LabelSet& pl = pred.labels[m.first];
    const LabelSet& gl = gt.labels[m.second];
    if (gl.empty()) throw InputError("ground-truth group label set is empty");
    const std::size_t h = overlap(pl, gl);
    precision += ratio(static_cast<double>(h), static_cast<double>(pl.size()));
    recall += static_cast<double>(h) / static_cast<double>(gl.size());
    hits += h;
  }
  pred_groups += pred.groups.size();
  gt_groups += gt.groups.size();
  for (const LabelSet& l : pred.labels) predicted += l.size();
  for (const LabelSet& l : gt.labels) actual += l.size();
}

void ScoreAccumulator::SocialSums::merge(const SocialSums& o) {
  precision += o.precision;
  recall += o.recall;
  pred_groups += o.pred_groups;
  gt_groups += o.gt_groups;
  hits += o.hits;
  predicted += o.predicted;
  actual += o.actual;
}

PRF ScoreAccumulator::SocialSums::result(Averaging averaging) const {
  PRF out;
  if (averaging == Averaging::example) {
    out.precision = ratio(precision, static_cast<double>(pred_groups));
    out.recall = ratio(recall, static_cast<double>(gt_groups));
  } else {
    out.precision = ratio(static_cast<double>(hits), static_cast<double>(predicted));
    out.recall = ratio(static_cast<double>(hits), static_cast<double>(actual));
  }
  out.f1 = harmonic_f1(out.precision, out.recall);
  return out;
}

PRF social_prf(const LabeledPartition& pred, const LabeledPartition& gt, Averaging averaging) {
  ScoreAccumulator::SocialSums sums;
  sums.add(pred, gt);
  return sums.result(averaging);
}

PanoramicScore overall_score(const PRF& individual, const PRF& social, const PRF& global) {
  return {individual, social, global, (individual.f1 + social.f1 + global.f1) / 3.0};
}

double round_1dp(double value) {
  const int previous = std::fegetround();
  std::fesetround(FE_TONEAREST);
  const double r = std::nearbyint(value * 10.0) / 10.0;
  std::fesetround(previous);
  return r;
}

double percent_1dp(double fraction) { return round_1dp(fraction * 100.0); }

void ScoreAccumulator::add_clip(const std::vector<LabelSet>& pred_individual, const std::vector<LabelSet>& gt_individual,
                                const LabeledPartition& pred_social, const LabeledPartition& gt_social,
                                const LabelSet& pred_global, const LabelSet& gt_global) {
  if (pred_individual.size() != gt_individual.size()) {
    throw InputError("individual predictions and ground truth differ in length");
  }
  for (std::size_t i = 0; i < gt_individual.size(); ++i) individual_.add(pred_individual[i], gt_individual[i]);
  social_.add(pred_social, gt_social);
  global_.add(pred_global, gt_global);
}

void ScoreAccumulator::merge(const ScoreAccumulator& other) {
  individual_.merge(other.individual_);
  social_.merge(other.social_);
  global_.merge(other.global_);
}

PanoramicScore ScoreAccumulator::score() const {
  return overall_score(individual_.result(averaging_), social_.result(averaging_), global_.result(averaging_));
}

}  // namespace mpt::metrics
