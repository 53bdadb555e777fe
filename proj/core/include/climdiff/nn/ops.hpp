#pragma once

#include <span>

#include "climdiff/nn/autograd.hpp"

namespace climdiff::nn {

// Differentiable ops. Image tensors are NCHW.

/// Cross-correlation with a square kernel. weight [Cout,Cin,k,k], bias [Cout]
/// (bias may be undefined). Output H' = floor((H + 2*pad - k)/stride) + 1.
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::size_t stride, std::size_t pad);

/// x [N,In], weight [Out,In], bias [Out] -> [N,Out].
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b);

template <class T>
Var<T> scale(const Var<T>& a, T s);

template <class T>
Var<T> sum(const Var<T>& a);

/// x [N,C,H,W] + v [N,C] broadcast over H,W.
template <class T>
Var<T> add_channel_bias(const Var<T>& x, const Var<T>& v);

/// Per-sample, per-group normalization followed by per-channel affine.
template <class T>
Var<T> group_norm(const Var<T>& x, std::size_t groups, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5));

template <class T>
Var<T> silu(const Var<T>& x);

/// Concatenate along the channel axis (dim 1) of two NCHW tensors.
template <class T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b);

template <class T>
Var<T> upsample_nearest2x(const Var<T>& x);

/// Mean absolute difference; subgradient 0 where pred == target.
template <class T>
Var<T> l1_loss(const Var<T>& pred, const Var<T>& target);

/// Sinusoidal timestep features, [N, dim]; constant (no gradient).
template <class T>
Tensor<T> sinusoidal_embedding(std::span<const int> timesteps, std::size_t dim);

#define CLIMDIFF_NN_OPS_EXTERN(T)                                                                    \
  extern template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t, std::size_t); \
  extern template Var<T> linear<T>(const Var<T>&, const Var<T>&, const Var<T>&);                     \
  extern template Var<T> add<T>(const Var<T>&, const Var<T>&);                                       \
  extern template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                       \
  extern template Var<T> scale<T>(const Var<T>&, T);                                                 \
  extern template Var<T> sum<T>(const Var<T>&);                                                      \
  extern template Var<T> add_channel_bias<T>(const Var<T>&, const Var<T>&);                          \
  extern template Var<T> group_norm<T>(const Var<T>&, std::size_t, const Var<T>&, const Var<T>&, T); \
  extern template Var<T> silu<T>(const Var<T>&);                                                     \
  extern template Var<T> concat_channels<T>(const Var<T>&, const Var<T>&);                           \
  extern template Var<T> upsample_nearest2x<T>(const Var<T>&);                                       \
  extern template Var<T> l1_loss<T>(const Var<T>&, const Var<T>&);                                   \
  extern template Tensor<T> sinusoidal_embedding<T>(std::span<const int>, std::size_t);

CLIMDIFF_NN_OPS_EXTERN(float)
CLIMDIFF_NN_OPS_EXTERN(double)
#undef CLIMDIFF_NN_OPS_EXTERN

}  // namespace climdiff::nn
