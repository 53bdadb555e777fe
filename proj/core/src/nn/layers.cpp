#include "climdiff/nn/layers.hpp"

#include <cmath>

namespace climdiff::nn {

namespace {

template <class T>
Var<T> he_normal(Shape shape, std::size_t fan_in, Rng& rng, Init init) {
  Tensor<T> t(std::move(shape));
  if (init == Init::HeNormal) {
    const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& v : t.data()) v = static_cast<T>(std * rng.normal());
  }
  return Var<T>(std::move(t), true);
}

}  // namespace

std::size_t default_groups(std::size_t channels, std::size_t max_groups) {
  if (channels < max_groups) return channels;
  std::size_t g = max_groups;
  while (channels % g != 0) --g;
  return g;
}

template <class T>
Conv2d<T>::Conv2d(std::size_t cin, std::size_t cout, std::size_t kernel, std::size_t stride_, Rng& rng, Init init)
    : weight(he_normal<T>({cout, cin, kernel, kernel}, cin * kernel * kernel, rng, init)),
      bias(Tensor<T>({cout}), true),
      stride(stride_),
      pad(kernel / 2) {}

template <class T>
void Conv2d<T>::collect(ParamList<T>& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

template <class T>
Linear<T>::Linear(std::size_t in, std::size_t out, Rng& rng, Init init)
    : weight(he_normal<T>({out, in}, in, rng, init)), bias(Tensor<T>({out}), true) {}

template <class T>
void Linear<T>::collect(ParamList<T>& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

template <class T>
GroupNorm<T>::GroupNorm(std::size_t channels, std::size_t max_groups)
    : gamma(Tensor<T>({channels}, T(1)), true), beta(Tensor<T>({channels}), true),
      groups(default_groups(channels, max_groups)) {}

template <class T>
void GroupNorm<T>::collect(ParamList<T>& out, const std::string& prefix) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

template struct Conv2d<float>;
template struct Conv2d<double>;
template struct Linear<float>;
template struct Linear<double>;
template struct GroupNorm<float>;
template struct GroupNorm<double>;

}  // namespace climdiff::nn
