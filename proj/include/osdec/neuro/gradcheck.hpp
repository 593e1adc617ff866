#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>

#include "osdec/neuro/params.hpp"

namespace osdec::neuro {

// Compares analytic gradients against central finite differences for every
// entry of every parameter. `forward` must rebuild the graph and return the
// scalar output for the given parameter values. Returns the max relative
// error with denominator max(|analytic|, |numeric|, 1e-8).
inline double finite_diff_check(
    const std::function<double(const ParamStore&)>& forward,
    ParamStore& params, const std::map<std::string, Tensor>& analyticGrads,
    double step = 1e-5) {
  double worst = 0.0;
  for (const auto& [name, analytic] : analyticGrads) {
    Tensor& p = params.at(name);
    for (size_t i = 0; i < p.values.size(); ++i) {
      const double saved = p.values[i];
      p.values[i] = saved + step;
      const double plus = forward(params);
      p.values[i] = saved - step;
      const double minus = forward(params);
      p.values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double a = analytic.values[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace osdec::neuro
