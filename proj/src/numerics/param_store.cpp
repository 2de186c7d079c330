#include "mpt/numerics/param_store.hpp"

#include "mpt/error.hpp"

namespace mpt {

void ParamStore::add(const std::string& name, DenseArray init) {
  if (params_.contains(name)) throw ConfigError("parameter registered twice: " + name);
  Parameter p;
  p.first_moment = DenseArray(init.shape(), 0.0);
  p.second_moment = DenseArray(init.shape(), 0.0);
  p.value = std::move(init);
  params_.emplace(name, std::move(p));
}

const DenseArray& ParamStore::value(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second.value;
}

DenseArray& ParamStore::mutable_value(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second.value;
}

void ParamStore::set(const std::string& name, DenseArray value) {
  DenseArray& slot = mutable_value(name);
  if (slot.shape() != value.shape()) {
    throw ShapeError("parameter " + name + " expects " + shape_string(slot.shape()) + ", got " +
                     shape_string(value.shape()));
  }
  slot = std::move(value);
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.value.size();
  return n;
}

DenseArray Initializer::normal(Shape shape, double stddev) {
  DenseArray out(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : out.data()) v = dist(rng_);
  return out;
}

}  // namespace mpt
