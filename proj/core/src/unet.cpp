#include "climdiff/unet.hpp"

#include <algorithm>

namespace climdiff {

using nn::Var;

void UNetConfig::validate() const {
  if (in_channels == 0 || out_channels == 0) fail(ErrorKind::Config, "unet: channel counts must be positive");
  if (base_width == 0) fail(ErrorKind::Config, "unet: base_width must be positive");
  if (level_multipliers.empty()) fail(ErrorKind::Config, "unet: at least one resolution level is required");
  if (level_multipliers.size() > 8) fail(ErrorKind::Config, "unet: at most 8 resolution levels");
  if (std::any_of(level_multipliers.begin(), level_multipliers.end(), [](std::size_t m) { return m == 0; })) {
    fail(ErrorKind::Config, "unet: level multipliers must be positive");
  }
  if (blocks_per_level == 0) fail(ErrorKind::Config, "unet: blocks_per_level must be positive");
  if (time_embed_dim % 2 != 0) fail(ErrorKind::Config, "unet: time_embed_dim must be even");
}

template <class T>
typename UNet<T>::ResBlock UNet<T>::make_block(std::size_t cin, std::size_t cout, Rng& rng) const {
  ResBlock b;
  b.conv1 = nn::Conv2d<T>(cin, cout, 3, 1, rng);
  b.norm1 = nn::GroupNorm<T>(cout);
  b.conv2 = nn::Conv2d<T>(cout, cout, 3, 1, rng);
  b.norm2 = nn::GroupNorm<T>(cout);
  if (config_.time_embed_dim > 0) {
    b.time_proj = nn::Linear<T>(config_.time_embed_dim, cout, rng);
    b.has_time = true;
  }
  if (cin != cout) {
    b.skip = nn::Conv2d<T>(cin, cout, 3, 1, rng);
    b.has_skip = true;
  }
  return b;
}

template <class T>
Var<T> UNet<T>::ResBlock::operator()(const Var<T>& x, const Var<T>& temb) const {
  Var<T> h = nn::silu(norm1(conv1(x)));
  if (has_time) h = nn::add_channel_bias(h, time_proj(temb));
  h = nn::silu(norm2(conv2(h)));
  return nn::add(h, has_skip ? skip(x) : x);
}

template <class T>
void UNet<T>::ResBlock::collect(nn::ParamList<T>& out, const std::string& prefix) const {
  conv1.collect(out, prefix + ".conv1");
  norm1.collect(out, prefix + ".norm1");
  if (has_time) time_proj.collect(out, prefix + ".time_proj");
  conv2.collect(out, prefix + ".conv2");
  norm2.collect(out, prefix + ".norm2");
  if (has_skip) skip.collect(out, prefix + ".skip");
}

template <class T>
UNet<T>::UNet(UNetConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(seed, streams::kInit);
  const auto& mult = config_.level_multipliers;
  const std::size_t L = mult.size();
  const std::size_t D = config_.time_embed_dim;
  if (D > 0) {
    time_fc1_ = nn::Linear<T>(D, D, rng);
    time_fc2_ = nn::Linear<T>(D, D, rng);
  }
  std::size_t ch = config_.base_width * mult[0];
  stem_ = nn::Conv2d<T>(config_.in_channels, ch, 3, 1, rng);

  std::vector<std::size_t> skip_channels;
  encoder_.resize(L);
  for (std::size_t i = 0; i < L; ++i) {
    const std::size_t width = config_.base_width * mult[i];
    for (std::size_t b = 0; b < config_.blocks_per_level; ++b) {
      encoder_[i].push_back(make_block(ch, width, rng));
      ch = width;
    }
    if (i + 1 < L) {
      skip_channels.push_back(ch);
      down_.push_back(nn::Conv2d<T>(ch, ch, 3, 2, rng));
    }
  }
  up_.resize(L > 0 ? L - 1 : 0);
  decoder_.resize(L > 0 ? L - 1 : 0);
  for (std::size_t i = L - 1; i-- > 0;) {
    up_[i] = nn::Conv2d<T>(ch, ch, 3, 1, rng);
    const std::size_t width = config_.base_width * mult[i];
    std::size_t cin = ch + skip_channels[i];
    for (std::size_t b = 0; b < config_.blocks_per_level; ++b) {
      decoder_[i].push_back(make_block(cin, width, rng));
      cin = width;
    }
    ch = width;
  }
  out_norm_ = nn::GroupNorm<T>(ch);
  out_conv_ = nn::Conv2d<T>(ch, config_.out_channels, 3, 1, rng,
                            config_.zero_init_output ? nn::Init::Zeros : nn::Init::HeNormal);
}

template <class T>
Var<T> UNet<T>::forward(const Var<T>& x, std::span<const int> timesteps) const {
  const auto& s = x.shape();
  if (s.size() != 4 || s[1] != config_.in_channels) {
    fail(ErrorKind::Shape, "unet: expected input [N," + std::to_string(config_.in_channels) + ",H,W], got " +
                               nn::shape_string(s));
  }
  const std::size_t div = config_.spatial_divisor();
  if (s[2] % div != 0 || s[3] % div != 0) {
    fail(ErrorKind::Shape, "unet: spatial dims " + std::to_string(s[2]) + "x" + std::to_string(s[3]) +
                               " not divisible by " + std::to_string(div));
  }
  Var<T> temb;
  if (config_.time_embed_dim > 0) {
    if (timesteps.size() != s[0]) fail(ErrorKind::Shape, "unet: need one timestep per sample");
    Var<T> e(nn::sinusoidal_embedding<T>(timesteps, config_.time_embed_dim));
    temb = nn::silu(time_fc2_(nn::silu(time_fc1_(e))));
  }

  const std::size_t L = config_.levels();
  Var<T> h = stem_(x);
  std::vector<Var<T>> skips;
  for (std::size_t i = 0; i < L; ++i) {
    for (const auto& block : encoder_[i]) h = block(h, temb);
    if (i + 1 < L) {
      skips.push_back(h);
      h = down_[i](h);
    }
  }
  for (std::size_t i = L - 1; i-- > 0;) {
    h = up_[i](nn::upsample_nearest2x(h));
    h = nn::concat_channels(h, skips[i]);
    for (const auto& block : decoder_[i]) h = block(h, temb);
  }
  return out_conv_(nn::silu(out_norm_(h)));
}

template <class T>
nn::ParamList<T> UNet<T>::parameters() const {
  nn::ParamList<T> out;
  if (config_.time_embed_dim > 0) {
    time_fc1_.collect(out, "time.fc1");
    time_fc2_.collect(out, "time.fc2");
  }
  stem_.collect(out, "stem");
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    for (std::size_t b = 0; b < encoder_[i].size(); ++b) {
      encoder_[i][b].collect(out, "enc" + std::to_string(i) + ".block" + std::to_string(b));
    }
    if (i < down_.size()) down_[i].collect(out, "enc" + std::to_string(i) + ".down");
  }
  for (std::size_t i = decoder_.size(); i-- > 0;) {
    up_[i].collect(out, "dec" + std::to_string(i) + ".up");
    for (std::size_t b = 0; b < decoder_[i].size(); ++b) {
      decoder_[i][b].collect(out, "dec" + std::to_string(i) + ".block" + std::to_string(b));
    }
  }
  out_norm_.collect(out, "out.norm");
  out_conv_.collect(out, "out.conv");
  return out;
}

void DenoiserConfig::validate() const {
  if (cond_channels == 0) fail(ErrorKind::Config, "denoiser: cond_channels must be positive");
  if (target_channels == 0) fail(ErrorKind::Config, "denoiser: target_channels must be positive");
  unet().validate();
}

UNetConfig DenoiserConfig::unet() const {
  UNetConfig c;
  c.in_channels = cond_channels + target_channels;
  c.out_channels = target_channels;
  c.base_width = base_width;
  c.level_multipliers = level_multipliers;
  c.blocks_per_level = blocks_per_level;
  c.time_embed_dim = time_embed_dim;
  c.zero_init_output = true;
  return c;
}

nn::Tensor<float> fields_to_tensor(std::span<const Field> fields) {
  if (fields.empty()) fail(ErrorKind::Shape, "fields_to_tensor: empty batch");
  const Field& first = fields.front();
  nn::Tensor<float> t({fields.size(), first.num_channels(), first.height(), first.width()});
  for (std::size_t n = 0; n < fields.size(); ++n) {
    if (!fields[n].same_layout(first)) fail(ErrorKind::Shape, "fields_to_tensor: batch layouts differ");
    std::copy(fields[n].data().begin(), fields[n].data().end(), t.ptr() + n * first.size());
  }
  return t;
}

std::vector<Field> tensor_to_fields(const nn::Tensor<float>& t, const std::vector<std::string>& channels) {
  if (t.rank() != 4 || t.dim(1) != channels.size()) fail(ErrorKind::Shape, "tensor_to_fields: channel mismatch");
  const std::size_t per = t.dim(1) * t.dim(2) * t.dim(3);
  std::vector<Field> out;
  out.reserve(t.dim(0));
  for (std::size_t n = 0; n < t.dim(0); ++n) {
    std::vector<float> data(t.ptr() + n * per, t.ptr() + (n + 1) * per);
    out.emplace_back(channels, t.dim(2), t.dim(3), std::move(data));
  }
  return out;
}

nn::Tensor<float> concat_condition(const Field& lr_upsampled, const Field& x_t) {
  if (x_t.num_channels() == 0) fail(ErrorKind::Shape, "concat_condition: target has no channels");
  if (lr_upsampled.num_channels() == 0) fail(ErrorKind::Shape, "concat_condition: condition has no channels");
  if (lr_upsampled.height() != x_t.height() || lr_upsampled.width() != x_t.width()) {
    fail(ErrorKind::Shape, "concat_condition: spatial dims differ");
  }
  nn::Tensor<float> t({1, lr_upsampled.num_channels() + x_t.num_channels(), x_t.height(), x_t.width()});
  std::copy(lr_upsampled.data().begin(), lr_upsampled.data().end(), t.ptr());
  std::copy(x_t.data().begin(), x_t.data().end(), t.ptr() + lr_upsampled.size());
  return t;
}

template class UNet<float>;
template class UNet<double>;

}  // namespace climdiff
