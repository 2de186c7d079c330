#pragma once

#include <map>
#include <string>

#include "mpt/numerics/dense_array.hpp"
#include "mpt/numerics/param_store.hpp"

namespace mpt {

struct AdamConfig {
  double lr = 7e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

/// One bias-corrected Adam step with decoupled weight decay:
///   θ ← θ·(1 − lr·wd) − lr · m̂ / (sqrt(v̂) + eps)
/// Parameters absent from `grads` are left untouched. Every gradient is
/// validated before any parameter changes, so a non-finite gradient leaves the
/// store exactly as it was.
void adam_step(ParamStore& store, const std::map<std::string, DenseArray>& grads, const AdamConfig& cfg);

}  // namespace mpt
