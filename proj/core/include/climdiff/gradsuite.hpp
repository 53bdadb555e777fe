#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "climdiff/nn/gradcheck.hpp"

namespace climdiff {

struct GradSuiteCase {
  std::string name;
  std::vector<nn::GradCheckResult> tensors;
  double max_rel_error = 0.0;
};

/// Finite-difference checks, in double precision, of every layer type and of
/// small complete networks (a width-16 three-level U-Net and an SRResNet-like
/// regressor). Each case reduces its output to a scalar through a fixed
/// random projection so no gradient is trivially zero.
std::vector<GradSuiteCase> run_gradient_suite(std::uint64_t seed = 0, const nn::GradCheckOptions& options = {});

}  // namespace climdiff
