#pragma once

#include <string>
#include <vector>

#include "finite_diff.hpp"
#include "grasame/tensor.hpp"

namespace grasame::testing {

struct OpCheck {
  std::string op;
  GradCheckResult result;
};

// Small 4-node graph with self loops and uneven weights.
InNeighbors toy_adjacency();

// Finite-difference check of every differentiable tensor op on small
// random inputs.
std::vector<OpCheck> op_gradient_checks();

}  // namespace grasame::testing
