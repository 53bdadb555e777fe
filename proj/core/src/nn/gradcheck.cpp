#include "climdiff/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace climdiff::nn {

std::vector<GradCheckResult> check_gradients(const std::function<Var<double>()>& loss_fn,
                                             const ParamList<double>& inputs, Rng& rng,
                                             const GradCheckOptions& options) {
  ParamList<double> vars = inputs;
  for (auto& p : vars) {
    p.var.zero_grad();
  }
  backward(loss_fn());

  std::vector<GradCheckResult> results;
  for (auto& p : vars) {
    const Tensor<double> analytic = p.var.has_grad() ? p.var.grad() : Tensor<double>(p.var.shape());
    auto& value = p.var.mutable_value();

    std::vector<std::size_t> idx(value.numel());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (idx.size() > options.max_probes_per_tensor) {
      // partial Fisher-Yates with the project RNG keeps the probe set reproducible
      for (std::size_t i = 0; i < options.max_probes_per_tensor; ++i) {
        std::swap(idx[i], idx[i + rng.uniform_int(idx.size() - i)]);
      }
      idx.resize(options.max_probes_per_tensor);
    }

    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i : idx) {
      const double orig = value[i];
      const double h = options.step * std::max(1.0, std::abs(orig));
      double f[4];
      {
        NoGradGuard guard;
        const double offsets[4] = {2.0, 1.0, -1.0, -2.0};
        for (int k = 0; k < 4; ++k) {
          value[i] = orig + offsets[k] * h;
          f[k] = loss_fn().value()[0];
        }
      }
      value[i] = orig;
      // five-point stencil, O(h^4)
      const double numeric = (-f[0] + 8.0 * f[1] - 8.0 * f[2] + f[3]) / (12.0 * h);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), options.zero_floor});
    const double rel = std::sqrt(diff2) / denom;
    results.push_back({p.name, rel, idx.size()});
  }
  return results;
}

}  // namespace climdiff::nn
