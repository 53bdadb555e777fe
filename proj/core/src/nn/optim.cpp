#include "climdiff/nn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace climdiff::nn {

template <class T>
AdamState<T>::AdamState(const ParamList<T>& params, AdamOptions opts) : options(opts) {
  for (const auto& p : params) {
    m.emplace_back(p.var.shape());
    v.emplace_back(p.var.shape());
  }
}

template <class T>
void adam_step(ParamList<T>& params, AdamState<T>& state, double lr) {
  if (state.m.size() != params.size()) fail(ErrorKind::Shape, "adam_step: state does not match parameter list");
  if (!(lr > 0.0)) fail(ErrorKind::Range, "adam_step: learning rate must be positive");
  const auto& o = state.options;
  ++state.step;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& var = params[k].var;
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.shape() != var.shape()) fail(ErrorKind::Shape, "adam_step: moment shape mismatch for " + params[k].name);
    const bool has = var.has_grad();
    auto& w = var.mutable_value();
    for (std::size_t i = 0; i < w.numel(); ++i) {
      const double g = has ? static_cast<double>(var.grad()[i]) : 0.0;
      const double mi = o.beta1 * m[i] + (1.0 - o.beta1) * g;
      const double vi = o.beta2 * v[i] + (1.0 - o.beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      w[i] = static_cast<T>(w[i] - lr * mhat / (std::sqrt(vhat) + o.eps));
    }
  }
}

double CosineLr::operator()(std::int64_t iter) const {
  if (total_iters <= 0) return initial_lr;
  const double frac = std::clamp(static_cast<double>(iter) / static_cast<double>(total_iters), 0.0, 1.0);
  return min_lr + 0.5 * (initial_lr - min_lr) * (1.0 + std::cos(std::numbers::pi * frac));
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(ParamList<float>&, AdamState<float>&, double);
template void adam_step<double>(ParamList<double>&, AdamState<double>&, double);

}  // namespace climdiff::nn
