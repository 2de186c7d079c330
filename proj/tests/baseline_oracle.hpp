#pragma once

#include <cstddef>
#include <vector>

#include "mpt/metrics.hpp"
#include "mpt/pipeline.hpp"

namespace mpt::testing {

/// Expected per-instance P, R and F1 of a predictor that includes each of
/// `classes` labels independently with probability 1/2 and, when it picks
/// none, falls back to one label chosen uniformly. Exhaustive over subsets.
inline metrics::PRF coin_flip_instance(const LabelSet& gt, std::size_t classes) {
  metrics::PRF e;
  const double weight = 1.0 / static_cast<double>(1u << classes);
  auto accumulate = [&](const LabelSet& pred, double w) {
    const metrics::PRF p = metrics::instance_prf(pred, gt);
    e.precision += w * p.precision;
    e.recall += w * p.recall;
    e.f1 += w * p.f1;
  };
  for (unsigned mask = 0; mask < (1u << classes); ++mask) {
    if (mask == 0) {
      for (std::size_t c = 0; c < classes; ++c) accumulate({c}, weight / static_cast<double>(classes));
      continue;
    }
    LabelSet pred;
    for (std::size_t c = 0; c < classes; ++c)
      if (mask & (1u << c)) pred.push_back(c);
    accumulate(pred, weight);
  }
  return e;
}

/// Closed-form expected panoramic score of the coin-flip label predictor,
/// given the partitions the model actually produced. Individual and global
/// P/R/F and social P/R are exact expectations; social F is formed from the
/// expected P and R.
inline metrics::PanoramicScore prior_baseline(const std::vector<synthgen::ClipSample>& data,
                                              const std::vector<Partition>& predicted_groups) {
  metrics::PRF ind, glo;
  double social_p = 0, social_r = 0;
  std::size_t individuals = 0, pred_groups = 0, gt_groups = 0;
  for (std::size_t k = 0; k < data.size(); ++k) {
    const auto& clip = data[k];
    for (const LabelSet& gt : clip.individual_labels) {
      const metrics::PRF e = coin_flip_instance(gt, clip.taxonomy.individual);
      ind.precision += e.precision;
      ind.recall += e.recall;
      ind.f1 += e.f1;
      ++individuals;
    }
    const metrics::PRF g = coin_flip_instance(clip.global_labels, clip.taxonomy.global);
    glo.precision += g.precision;
    glo.recall += g.recall;
    glo.f1 += g.f1;
    for (const auto& [p, q] : metrics::half_match(predicted_groups[k], clip.groups)) {
      const metrics::PRF e = coin_flip_instance(clip.group_labels[q], clip.taxonomy.social);
      social_p += e.precision;
      social_r += e.recall;
    }
    pred_groups += predicted_groups[k].size();
    gt_groups += clip.groups.size();
  }
  auto mean = [](metrics::PRF s, double n) { return metrics::PRF{s.precision / n, s.recall / n, s.f1 / n}; };
  metrics::PRF social{social_p / static_cast<double>(pred_groups), social_r / static_cast<double>(gt_groups), 0.0};
  social.f1 = metrics::harmonic_f1(social.precision, social.recall);
  return metrics::overall_score(mean(ind, static_cast<double>(individuals)), social,
                                mean(glo, static_cast<double>(data.size())));
}

}  // namespace mpt::testing
