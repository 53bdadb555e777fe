#pragma once

#include <string>

#include "climdiff/nn/ops.hpp"
#include "climdiff/rng.hpp"

namespace climdiff::nn {

enum class Init { HeNormal, Zeros };

/// 3x3 (or k x k) convolution with "same" padding at stride 1.
template <class T>
struct Conv2d {
  Var<T> weight;
  Var<T> bias;
  std::size_t stride = 1;
  std::size_t pad = 1;

  Conv2d() = default;
  Conv2d(std::size_t cin, std::size_t cout, std::size_t kernel, std::size_t stride, Rng& rng,
         Init init = Init::HeNormal);

  Var<T> operator()(const Var<T>& x) const { return conv2d(x, weight, bias, stride, pad); }
  void collect(ParamList<T>& out, const std::string& prefix) const;
};

template <class T>
struct Linear {
  Var<T> weight;
  Var<T> bias;

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng, Init init = Init::HeNormal);

  Var<T> operator()(const Var<T>& x) const { return linear(x, weight, bias); }
  void collect(ParamList<T>& out, const std::string& prefix) const;
};

template <class T>
struct GroupNorm {
  Var<T> gamma;
  Var<T> beta;
  std::size_t groups = 1;

  GroupNorm() = default;
  explicit GroupNorm(std::size_t channels, std::size_t max_groups = 8);

  Var<T> operator()(const Var<T>& x) const { return group_norm(x, groups, gamma, beta); }
  void collect(ParamList<T>& out, const std::string& prefix) const;
};

/// Group count used throughout: 8, or the channel count when it is smaller.
/// Falls back to the largest divisor of `channels` not exceeding 8.
std::size_t default_groups(std::size_t channels, std::size_t max_groups = 8);

extern template struct Conv2d<float>;
extern template struct Conv2d<double>;
extern template struct Linear<float>;
extern template struct Linear<double>;
extern template struct GroupNorm<float>;
extern template struct GroupNorm<double>;

}  // namespace climdiff::nn
