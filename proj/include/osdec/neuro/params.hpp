#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "osdec/neuro/tensor.hpp"
#include "osdec/rng.hpp"

namespace osdec::neuro {

// Named parameter tensors plus Adam moment state.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const {
    return params_.count(name) != 0;
  }

  const std::map<std::string, Tensor>& params() const { return params_; }
  std::map<std::string, Tensor>& params() { return params_; }
  int64_t step_count() const { return step_; }

  // Bias-corrected Adam update over the named gradients. Parameters without
  // a gradient entry are left untouched. Throws NumericError on a
  // non-finite gradient.
  void adam_step(const std::map<std::string, Tensor>& grads, double lr,
                 double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  // Gaussian(0, scale) initialization helper.
  Tensor& add_random(const std::string& name, std::vector<size_t> shape,
                     double scale, Rng& rng);

 private:
  struct Moments {
    Tensor m;
    Tensor v;
  };
  std::map<std::string, Tensor> params_;
  std::map<std::string, Moments> moments_;
  int64_t step_ = 0;
};

}  // namespace osdec::neuro
