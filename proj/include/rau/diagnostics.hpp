#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rau/model.hpp"

namespace rau {

/// Layer sizes used for gradient verification (S=8, A=4, L=4, H_q=4, C=5).
ModelDims tiny_dims();
inline constexpr std::size_t kTinySteps = 3;

struct GradCheckEntry {
  std::string name;
  std::string group;
  std::size_t size = 0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  /// (group, worst error) in first-seen order.
  std::vector<std::pair<std::string, double>> groups;
  double worst = 0.0;
};

/// Parameter group of a dotted name: "qenc.lstm1.W_x" -> "qenc.lstm1".
std::string parameter_group(const std::string& name);

/// Builds a seeded tiny model and batch, unrolls kTinySteps units with
/// dropout masks fixed per evaluation, and compares backward against central
/// differences on every parameter coordinate.
GradCheckReport run_model_grad_check(std::uint64_t seed, double eps = 1e-5);

}  // namespace rau
