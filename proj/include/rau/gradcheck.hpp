#pragma once

#include <functional>

#include "rau/graph.hpp"
#include "rau/tensor.hpp"

namespace rau {

/// Central-difference gradient of a scalar function:
/// (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) for every coordinate i.
Tensor finite_diff_oracle(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps = 1e-5);

/// Same estimate taken in place over a parameter's value; `f` re-evaluates
/// whatever depends on it. The parameter is restored exactly afterwards.
Tensor finite_diff_parameter(const std::function<double()>& f, Parameter& p, double eps = 1e-5);

/// max_i |analytic_i - numeric_i| / max(1, |numeric_i|)
double max_relative_error(const Tensor& analytic, const Tensor& numeric);

}  // namespace rau
