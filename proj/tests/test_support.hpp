#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <vector>

#include "rau/gradcheck.hpp"
#include "rau/graph.hpp"
#include "rau/rng.hpp"
#include "rau/tensor.hpp"

namespace rau::testing {

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  SeededRng rng(seed);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

inline std::vector<double> to_vector(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

/// Builds a scalar loss from parameter nodes. The check compares Graph::backward
/// against central differences for every input.
using LossBuilder = std::function<Var(Graph&, std::vector<Var>&)>;

inline double op_gradient_error(std::vector<Parameter>& inputs, const LossBuilder& build, double eps = 1e-6) {
  auto evaluate = [&]() {
    Graph g(false);
    std::vector<Var> vars;
    for (auto& p : inputs) vars.push_back(g.parameter(p));
    return build(g, vars).value()[0];
  };
  for (auto& p : inputs) p.zero_grad();
  {
    Graph g;
    std::vector<Var> vars;
    for (auto& p : inputs) vars.push_back(g.parameter(p));
    g.backward(build(g, vars));
  }
  double worst = 0.0;
  for (auto& p : inputs) {
    const Tensor analytic = p.grad;
    const Tensor numeric = finite_diff_parameter(evaluate, p, eps);
    worst = std::max(worst, max_relative_error(analytic, numeric));
  }
  return worst;
}

/// Weighted sum with fixed pseudo-random weights, so every output entry
/// reaches the loss with a distinct coefficient.
inline Var probe(Var y, std::uint64_t seed = 99) {
  Graph& g = y.graph();
  Var w = g.constant(random_tensor(y.shape(), seed, 0.5, 1.5));
  return ad::sum(ad::mul(y, w));
}

}  // namespace rau::testing
