#include "climdiff/srresnet.hpp"

#include <bit>

namespace climdiff {

using nn::Var;

void SRResNetConfig::validate() const {
  if (in_channels == 0 || out_channels == 0 || width == 0) fail(ErrorKind::Config, "srresnet: sizes must be positive");
  if (scale < 1 || !std::has_single_bit(scale)) fail(ErrorKind::Config, "srresnet: scale must be a power of two");
}

template <class T>
SRResNet<T>::SRResNet(SRResNetConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed, streams::kInit);
  const std::size_t w = config_.width;
  head_ = nn::Conv2d<T>(config_.in_channels, w, 3, 1, rng);
  for (std::size_t b = 0; b < config_.num_blocks; ++b) {
    Block blk;
    blk.conv1 = nn::Conv2d<T>(w, w, 3, 1, rng);
    blk.norm1 = nn::GroupNorm<T>(w);
    blk.conv2 = nn::Conv2d<T>(w, w, 3, 1, rng);
    blk.norm2 = nn::GroupNorm<T>(w);
    blocks_.push_back(std::move(blk));
  }
  trunk_conv_ = nn::Conv2d<T>(w, w, 3, 1, rng);
  trunk_norm_ = nn::GroupNorm<T>(w);
  for (std::size_t s = config_.scale; s > 1; s /= 2) tail_.push_back(nn::Conv2d<T>(w, w, 3, 1, rng));
  out_conv_ = nn::Conv2d<T>(w, config_.out_channels, 3, 1, rng, nn::Init::Zeros);
}

template <class T>
Var<T> SRResNet<T>::forward(const Var<T>& x) const {
  if (x.shape().size() != 4 || x.shape()[1] != config_.in_channels) {
    fail(ErrorKind::Shape, "srresnet: expected input [N," + std::to_string(config_.in_channels) + ",h,w], got " +
                               nn::shape_string(x.shape()));
  }
  const Var<T> head = nn::silu(head_(x));
  Var<T> h = head;
  for (const auto& b : blocks_) {
    Var<T> r = nn::silu(b.norm1(b.conv1(h)));
    r = b.norm2(b.conv2(r));
    h = nn::add(h, r);
  }
  h = nn::add(trunk_norm_(trunk_conv_(h)), head);
  for (const auto& conv : tail_) h = nn::silu(conv(nn::upsample_nearest2x(h)));
  return out_conv_(h);
}

template <class T>
nn::ParamList<T> SRResNet<T>::parameters() const {
  nn::ParamList<T> out;
  head_.collect(out, "head");
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const std::string p = "block" + std::to_string(b);
    blocks_[b].conv1.collect(out, p + ".conv1");
    blocks_[b].norm1.collect(out, p + ".norm1");
    blocks_[b].conv2.collect(out, p + ".conv2");
    blocks_[b].norm2.collect(out, p + ".norm2");
  }
  trunk_conv_.collect(out, "trunk.conv");
  trunk_norm_.collect(out, "trunk.norm");
  for (std::size_t i = 0; i < tail_.size(); ++i) tail_[i].collect(out, "tail" + std::to_string(i));
  out_conv_.collect(out, "out.conv");
  return out;
}

template class SRResNet<float>;
template class SRResNet<double>;

}  // namespace climdiff
