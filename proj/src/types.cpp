#include "mpt/types.hpp"

#include <algorithm>
#include <string>

#include "mpt/error.hpp"

namespace mpt {

LabelSet make_label_set(std::vector<std::size_t> labels) {
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  return labels;
}

void validate_partition(const Partition& p, std::size_t n, bool require_cover) {
  std::vector<bool> seen(n, false);
  for (const Group& g : p) {
    if (g.empty()) throw InputError("partition contains an empty group");
    for (std::size_t m : g) {
      if (m >= n) throw InputError("partition member " + std::to_string(m) + " out of range");
      if (seen[m]) throw InputError("individual " + std::to_string(m) + " appears in two groups");
      seen[m] = true;
    }
  }
  if (require_cover && std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw InputError("partition does not cover every individual");
  }
}

Partition canonical_partition(Partition p) {
  for (Group& g : p) std::sort(g.begin(), g.end());
  std::sort(p.begin(), p.end(), [](const Group& a, const Group& b) { return a.front() < b.front(); });
  return p;
}

DenseArray relation_from_partition(const Partition& p, std::size_t n) {
  validate_partition(p, n, /*require_cover=*/false);
  DenseArray r({n, n}, 0.0);
  for (std::size_t i = 0; i < n; ++i) r.at({i, i}) = 1.0;
  for (const Group& g : p)
    for (std::size_t a : g)
      for (std::size_t b : g) r.at({a, b}) = 1.0;
  return r;
}

void validate_relation_matrix(const DenseArray& r) {
  if (r.rank() != 2 || r.extent(0) != r.extent(1)) throw ShapeError("relation matrix must be square");
  const std::size_t n = r.extent(0);
  for (std::size_t i = 0; i < n; ++i) {
    if (r.at({i, i}) != 1.0) throw InputError("relation matrix diagonal must be 1");
    for (std::size_t j = 0; j < n; ++j) {
      const double v = r.at({i, j});
      if (!(v >= 0.0 && v <= 1.0)) throw InputError("relation matrix value outside [0,1]");
      if (v != r.at({j, i})) throw InputError("relation matrix is not symmetric");
    }
  }
}

}  // namespace mpt
