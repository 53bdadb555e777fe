#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "climdiff/field.hpp"
#include "climdiff/nn/layers.hpp"

namespace climdiff {

/// Architecture of the encoder/decoder network. One entry of
/// `level_multipliers` per resolution level; level i has
/// base_width * level_multipliers[i] channels.
struct UNetConfig {
  std::size_t in_channels = 4;
  std::size_t out_channels = 1;
  std::size_t base_width = 128;
  std::vector<std::size_t> level_multipliers{1, 1, 2, 2, 4};
  std::size_t blocks_per_level = 2;
  /// Width of the timestep embedding; 0 builds an unconditional network.
  std::size_t time_embed_dim = 128;
  /// Zero-initialise the output convolution so the first prediction is 0.
  bool zero_init_output = true;

  void validate() const;
  std::size_t levels() const { return level_multipliers.size(); }
  /// Spatial dims must be divisible by this (one halving per level transition).
  std::size_t spatial_divisor() const { return std::size_t{1} << (levels() - 1); }
};

/// U-Net with residual blocks (conv-norm-SiLU twice, timestep injection
/// between them, identity or 3x3 projection skip), stride-2 conv
/// downsampling, nearest-2x + conv upsampling and skip concatenation.
template <class T>
class UNet {
 public:
  UNet(UNetConfig config, std::uint64_t seed);

  /// x: [N, in_channels, H, W]; timesteps: N entries (ignored without time
  /// embedding). Returns [N, out_channels, H, W].
  nn::Var<T> forward(const nn::Var<T>& x, std::span<const int> timesteps) const;

  nn::ParamList<T> parameters() const;
  const UNetConfig& config() const noexcept { return config_; }

 private:
  struct ResBlock {
    nn::Conv2d<T> conv1, conv2, skip;
    nn::GroupNorm<T> norm1, norm2;
    nn::Linear<T> time_proj;
    bool has_skip = false;
    bool has_time = false;

    nn::Var<T> operator()(const nn::Var<T>& x, const nn::Var<T>& temb) const;
    void collect(nn::ParamList<T>& out, const std::string& prefix) const;
  };
  ResBlock make_block(std::size_t cin, std::size_t cout, Rng& rng) const;

  UNetConfig config_;
  nn::Linear<T> time_fc1_, time_fc2_;
  nn::Conv2d<T> stem_;
  std::vector<std::vector<ResBlock>> encoder_;
  std::vector<nn::Conv2d<T>> down_;
  std::vector<nn::Conv2d<T>> up_;  // up_[i] feeds decoder level i
  std::vector<std::vector<ResBlock>> decoder_;
  nn::GroupNorm<T> out_norm_;
  nn::Conv2d<T> out_conv_;
};

/// Conditional noise predictor configuration: the network sees the upsampled
/// conditioning channels followed by the noisy target channels.
struct DenoiserConfig {
  std::size_t cond_channels = 3;
  std::size_t target_channels = 1;
  std::size_t base_width = 128;
  std::vector<std::size_t> level_multipliers{1, 1, 2, 2, 4};
  std::size_t blocks_per_level = 2;
  std::size_t time_embed_dim = 128;

  void validate() const;
  UNetConfig unet() const;
};

template <class T>
using Denoiser = UNet<T>;

template <class T>
Denoiser<T> build_denoiser(const DenoiserConfig& config, std::uint64_t seed) {
  config.validate();
  return Denoiser<T>(config.unet(), seed);
}

/// Stacks same-layout fields into an NCHW tensor.
nn::Tensor<float> fields_to_tensor(std::span<const Field> fields);
/// Splits an NCHW tensor back into fields with the given channel names.
std::vector<Field> tensor_to_fields(const nn::Tensor<float>& t, const std::vector<std::string>& channels);

/// Denoiser input for one sample: conditioning channels first, then the noisy
/// target channels, as a [1, Cc+Ct, H, W] tensor.
nn::Tensor<float> concat_condition(const Field& lr_upsampled, const Field& x_t);

extern template class UNet<float>;
extern template class UNet<double>;

}  // namespace climdiff
