#pragma once

#include <cstdint>
#include <vector>

#include "climdiff/nn/autograd.hpp"

namespace climdiff::nn {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment buffers for Adam, one pair per parameter in ParamList order.
template <class T>
struct AdamState {
  AdamOptions options;
  std::int64_t step = 0;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;

  AdamState() = default;
  explicit AdamState(const ParamList<T>& params, AdamOptions opts = {});
};

/// One bias-corrected Adam update using the gradients currently held by the
/// parameters. Parameters without a gradient buffer are treated as zero-grad.
template <class T>
void adam_step(ParamList<T>& params, AdamState<T>& state, double lr);

/// Cosine annealing from initial_lr at iter 0 to min_lr at total_iters.
struct CosineLr {
  double initial_lr = 2e-5;
  std::int64_t total_iters = 1;
  double min_lr = 0.0;

  double operator()(std::int64_t iter) const;
};

extern template struct AdamState<float>;
extern template struct AdamState<double>;
extern template void adam_step<float>(ParamList<float>&, AdamState<float>&, double);
extern template void adam_step<double>(ParamList<double>&, AdamState<double>&, double);

}  // namespace climdiff::nn
