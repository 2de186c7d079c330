#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>

#include "mpt/numerics/dense_array.hpp"

namespace mpt {

struct Parameter {
  DenseArray value;
  DenseArray first_moment;
  DenseArray second_moment;
};

/// Named learnable parameters plus the optimizer state that belongs to them.
///
/// Modules register parameters under dotted names ("stre.spatial.0.attn.q.w").
/// Two call sites that look up the same name share the same storage, which is
/// how the shared aggregation encoder is wired into both aggregation paths.
class ParamStore {
 public:
  void add(const std::string& name, DenseArray init);
  bool contains(const std::string& name) const { return params_.contains(name); }

  const DenseArray& value(const std::string& name) const;
  /// Replaces a value; the shape must match the registered one.
  void set(const std::string& name, DenseArray value);
  DenseArray& mutable_value(const std::string& name);

  const std::map<std::string, Parameter>& entries() const noexcept { return params_; }
  std::map<std::string, Parameter>& entries() noexcept { return params_; }

  std::uint64_t step() const noexcept { return step_; }
  void set_step(std::uint64_t step) noexcept { step_ = step; }
  void increment_step() noexcept { ++step_; }

  /// Total number of scalars across all parameters.
  std::size_t scalar_count() const;

 private:
  std::map<std::string, Parameter> params_;
  std::uint64_t step_ = 0;
};

/// Seeded source of initial parameter values.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  DenseArray normal(Shape shape, double stddev = 0.02);
  DenseArray zeros(Shape shape) { return DenseArray(std::move(shape), 0.0); }
  DenseArray ones(Shape shape) { return DenseArray(std::move(shape), 1.0); }

  std::mt19937_64& engine() noexcept { return rng_; }

 private:
  std::mt19937_64 rng_;
};

}  // namespace mpt
