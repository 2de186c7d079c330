#pragma once

#include <cstddef>
#include <vector>

#include "mpt/numerics/dense_array.hpp"

namespace mpt {

/// Sorted, duplicate-free class indices of a multi-label annotation.
using LabelSet = std::vector<std::size_t>;

/// Member indices (0-based) of one social group.
using Group = std::vector<std::size_t>;

/// Disjoint, nonempty groups. Whether they must also cover every individual
/// depends on the caller (ground truth and clustering output always do).
using Partition = std::vector<Group>;

LabelSet make_label_set(std::vector<std::size_t> labels);

/// Throws InputError on empty groups, out-of-range or repeated members, or a
/// missing individual when `require_cover` is set.
void validate_partition(const Partition& p, std::size_t n, bool require_cover);

/// Members sorted inside each group, groups ordered by their smallest member.
Partition canonical_partition(Partition p);

/// N×N same-group indicator with unit diagonal.
DenseArray relation_from_partition(const Partition& p, std::size_t n);

/// Checks symmetry, unit diagonal and values within [0, 1].
void validate_relation_matrix(const DenseArray& r);

}  // namespace mpt
