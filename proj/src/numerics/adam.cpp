#include "mpt/numerics/adam.hpp"

#include <cmath>

#include "mpt/error.hpp"

namespace mpt {

void adam_step(ParamStore& store, const std::map<std::string, DenseArray>& grads, const AdamConfig& cfg) {
  for (const auto& [name, g] : grads) {
    const DenseArray& value = store.value(name);
    if (g.shape() != value.shape()) {
      throw ShapeError("gradient for " + name + " has shape " + shape_string(g.shape()) + ", parameter is " +
                       shape_string(value.shape()));
    }
    if (!g.all_finite()) throw NumericError("non-finite gradient for parameter " + name);
  }

  store.increment_step();
  const double t = static_cast<double>(store.step());
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);
  const double decay = 1.0 - cfg.lr * cfg.weight_decay;

  for (const auto& [name, g] : grads) {
    Parameter& p = store.entries().at(name);
    for (std::size_t i = 0; i < g.size(); ++i) {
      double& m = p.first_moment[i];
      double& v = p.second_moment[i];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g[i];
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m / bias1;
      const double v_hat = v / bias2;
      p.value[i] = p.value[i] * decay - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

}  // namespace mpt
