#include "awf/grad_check.hpp"

#include <cmath>

namespace awf {

double check_gradient(const std::function<double(std::span<const double>)>& f,
                      std::span<const double> at, std::span<const double> analytic, double eps) {
  if (eps <= 0.0) throw std::invalid_argument("check_gradient: eps must be positive");
  if (at.size() != analytic.size())
    throw std::invalid_argument("check_gradient: gradient size mismatch");

  std::vector<double> x(at.begin(), at.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + eps;
    const double fp = f(x);
    x[i] = saved - eps;
    const double fm = f(x);
    x[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("check_gradient: non-finite loss");
    const double cd = (fp - fm) / (2.0 * eps);
    const double err = std::fabs(analytic[i] - cd) / std::max(1.0, std::fabs(cd));
    worst = std::max(worst, err);
  }
  return worst;
}

double grad_check(ParametricMap& map, const LossFn& loss, std::span<const Tensor> inputs,
                  double eps) {
  if (map.param_count() == 0) return 0.0;
  const Tensor out = map.apply(inputs);
  const double base = loss.value(out);
  if (!std::isfinite(base)) throw NumericError("grad_check: non-finite loss");

  const std::vector<double> analytic = map.param_grad(inputs, loss.grad(out));
  const std::vector<double> original = map.params();

  auto f = [&](std::span<const double> p) {
    map.set_params(std::vector<double>(p.begin(), p.end()));
    return loss.value(map.apply(inputs));
  };
  double err;
  try {
    err = check_gradient(f, original, analytic, eps);
  } catch (...) {
    map.set_params(original);
    throw;
  }
  map.set_params(original);
  return err;
}

}  // namespace awf
