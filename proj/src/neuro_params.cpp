#include "osdec/neuro/params.hpp"

#include <cmath>

namespace osdec::neuro {

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  if (params_.count(name))
    throw ContractError("parameter '" + name + "' already exists");
  auto [it, _] = params_.emplace(name, std::move(t));
  moments_[name] = {Tensor::zeros(it->second.shape),
                    Tensor::zeros(it->second.shape)};
  return it->second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end())
    throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end())
    throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParamStore::add_random(const std::string& name,
                               std::vector<size_t> shape, double scale,
                               Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.values) v = scale * rng.gaussian();
  return add(name, std::move(t));
}

void ParamStore::adam_step(const std::map<std::string, Tensor>& grads,
                           double lr, double beta1, double beta2, double eps) {
  ++step_;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
  for (const auto& [name, g] : grads) {
    Tensor& p = at(name);
    if (!p.same_shape(g))
      throw ShapeError("gradient shape " + g.shape_str() +
                       " does not match parameter '" + name + "' " +
                       p.shape_str());
    Moments& mo = moments_.at(name);
    for (size_t i = 0; i < p.values.size(); ++i) {
      const double gi = g.values[i];
      if (!std::isfinite(gi))
        throw NumericError("non-finite gradient for parameter '" + name + "'");
      mo.m.values[i] = beta1 * mo.m.values[i] + (1.0 - beta1) * gi;
      mo.v.values[i] = beta2 * mo.v.values[i] + (1.0 - beta2) * gi * gi;
      const double mHat = mo.m.values[i] / bc1;
      const double vHat = mo.v.values[i] / bc2;
      p.values[i] -= lr * mHat / (std::sqrt(vHat) + eps);
    }
  }
}

}  // namespace osdec::neuro
