#pragma once

#include <cstdint>

#include "climdiff/nn/layers.hpp"

namespace climdiff {

struct SRResNetConfig {
  std::size_t in_channels = 3;
  std::size_t out_channels = 1;
  std::size_t width = 64;
  std::size_t num_blocks = 8;
  /// Power of two; the tail applies log2(scale) nearest-2x + conv stages.
  std::size_t scale = 4;

  void validate() const;
};

/// SRResNet-style regressor: conv head, residual trunk with a global skip,
/// and an upsampling tail. Operates on LR-resolution input.
template <class T>
class SRResNet {
 public:
  SRResNet(SRResNetConfig config, std::uint64_t seed);

  /// x: [N, in_channels, h, w] -> [N, out_channels, h*scale, w*scale].
  nn::Var<T> forward(const nn::Var<T>& x) const;
  nn::ParamList<T> parameters() const;
  const SRResNetConfig& config() const noexcept { return config_; }

 private:
  struct Block {
    nn::Conv2d<T> conv1, conv2;
    nn::GroupNorm<T> norm1, norm2;
  };

  SRResNetConfig config_;
  nn::Conv2d<T> head_;
  std::vector<Block> blocks_;
  nn::Conv2d<T> trunk_conv_;
  nn::GroupNorm<T> trunk_norm_;
  std::vector<nn::Conv2d<T>> tail_;
  nn::Conv2d<T> out_conv_;
};

extern template class SRResNet<float>;
extern template class SRResNet<double>;

}  // namespace climdiff
