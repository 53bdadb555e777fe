#pragma once

#include <functional>
#include <string>
#include <vector>

#include "climdiff/nn/autograd.hpp"
#include "climdiff/rng.hpp"

namespace climdiff::nn {

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;  // worst tensor, norm-wise over probed elements
  std::size_t probed = 0;
};

struct GradCheckOptions {
  std::size_t max_probes_per_tensor = 24;
  double step = 1e-3;  // relative to max(1, |value|)
  /// Gradient norms below this count as zero: the error of such a tensor is
  /// measured absolutely instead of relative to noise.
  double zero_floor = 1e-8;
};

/// Compares reverse-mode gradients of `loss_fn` with central finite
/// differences. `loss_fn` must rebuild its graph from the current values of
/// `inputs` on every call. Returns one result per input tensor.
std::vector<GradCheckResult> check_gradients(const std::function<Var<double>()>& loss_fn,
                                             const ParamList<double>& inputs, Rng& rng,
                                             const GradCheckOptions& options = {});

}  // namespace climdiff::nn
