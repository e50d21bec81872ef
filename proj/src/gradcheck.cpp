#include "rau/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace rau {

Tensor finite_diff_oracle(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps) {
  Tensor probe = x;
  Tensor out = Tensor::zeros_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double hi = f(probe);
    probe[i] = orig - eps;
    const double lo = f(probe);
    probe[i] = orig;
    out[i] = (hi - lo) / (2.0 * eps);
  }
  return out;
}

Tensor finite_diff_parameter(const std::function<double()>& f, Parameter& p, double eps) {
  Tensor out = Tensor::zeros_like(p.value);
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const double orig = p.value[i];
    p.value[i] = orig + eps;
    const double hi = f();
    p.value[i] = orig - eps;
    const double lo = f();
    p.value[i] = orig;
    out[i] = (hi - lo) / (2.0 * eps);
  }
  return out;
}

double max_relative_error(const Tensor& analytic, const Tensor& numeric) {
  if (!analytic.same_shape(numeric)) {
    throw ShapeError("max_relative_error: " + shape_string(analytic.shape()) + " vs " +
                     shape_string(numeric.shape()));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double err = std::abs(analytic[i] - numeric[i]) / std::max(1.0, std::abs(numeric[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace rau
