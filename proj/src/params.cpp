#include "cpr/params.hpp"

#include <cmath>

#include "cpr/error.hpp"

namespace cpr {

Parameter& ParamStore::add(const std::string& name, Tensor init) {
  if (params_.count(name)) throw Error(Errc::kInvalidConfig, "duplicate parameter " + name);
  Tensor grad(init.shape(), 0.0);
  auto [it, ok] = params_.emplace(name, Parameter{std::move(init), std::move(grad)});
  return it->second;
}

Parameter& ParamStore::add_uniform(const std::string& name, std::vector<std::size_t> shape,
                                   std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return add(name, std::move(t));
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error(Errc::kInvalidConfig, "no parameter " + name);
  return it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error(Errc::kInvalidConfig, "no parameter " + name);
  return it->second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, p] : params_) p.grad.fill(0.0);
}

bool ParamStore::same_values(const ParamStore& other) const {
  if (step_ != other.step_ || params_.size() != other.params_.size()) return false;
  auto a = params_.begin();
  auto b = other.params_.begin();
  for (; a != params_.end(); ++a, ++b) {
    if (a->first != b->first || !(a->second.value == b->second.value)) return false;
  }
  return true;
}

void sgd_step(ParamStore& store, const SgdConfig& cfg) {
  if (!(cfg.learning_rate > 0.0) && cfg.learning_rate != 0.0) {
    throw Error(Errc::kInvalidConfig, "learning rate must be positive");
  }
  for (const auto& [name, p] : store) {
    if (!p.grad.all_finite()) throw Error(Errc::kNonFiniteGradient, "gradient of " + name);
  }
  for (auto& [name, p] : store) {
    auto v = p.value.values();
    auto g = p.grad.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= cfg.learning_rate * g[i];
    p.grad.fill(0.0);
  }
  store.advance_step();
}

}  // namespace cpr
