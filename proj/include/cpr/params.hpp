#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cpr/rng.hpp"
#include "cpr/tensor.hpp"

namespace cpr {

struct Parameter {
  Tensor value;
  Tensor grad;  // same shape as value
};

// Named parameters with paired gradient buffers. Iteration order is the
// lexicographic name order, which fixes checkpoint layout and update order.
class ParamStore {
 public:
  // Registers a parameter; throws kInvalidConfig on a duplicate name.
  Parameter& add(const std::string& name, Tensor init);
  // Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
  Parameter& add_uniform(const std::string& name, std::vector<std::size_t> shape,
                         std::size_t fan_in, Rng& rng);

  bool contains(const std::string& name) const { return params_.count(name) > 0; }
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();

  std::uint64_t step() const { return step_; }
  void set_step(std::uint64_t s) { step_ = s; }
  void advance_step() { ++step_; }

  // Values and step counter, not gradients.
  bool same_values(const ParamStore& other) const;

 private:
  std::map<std::string, Parameter> params_;
  std::uint64_t step_ = 0;
};

struct SgdConfig {
  double learning_rate = 3e-4;
};

// theta <- theta - lr * grad; zeroes the gradients and bumps the step counter.
// Throws kNonFiniteGradient (leaving every parameter untouched) if any
// gradient holds NaN/Inf, and kInvalidConfig for a non-positive learning rate.
void sgd_step(ParamStore& store, const SgdConfig& cfg);

}  // namespace cpr
