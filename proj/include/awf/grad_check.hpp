#pragma once

#include <functional>
#include <span>

#include "awf/maps.hpp"

namespace awf {

/// Scalar loss over a map output, with its analytic gradient.
struct LossFn {
  std::function<double(const Tensor&)> value;
  std::function<Tensor(const Tensor&)> grad;  // d value / d output
};

/// Compares an analytic gradient vector against central differences of f.
/// Returns max over coordinates of |analytic - cd| / max(1, |cd|).
double check_gradient(const std::function<double(std::span<const double>)>& f,
                      std::span<const double> at, std::span<const double> analytic, double eps);

/// Verifies the map's analytic parameter gradient of loss(map(inputs)) against
/// central finite differences. The map's parameters are perturbed in place and
/// restored before returning. A zero-parameter map yields 0.
double grad_check(ParametricMap& map, const LossFn& loss, std::span<const Tensor> inputs,
                  double eps);

}  // namespace awf
