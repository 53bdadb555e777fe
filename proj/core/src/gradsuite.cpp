#include "climdiff/gradsuite.hpp"

#include <algorithm>

#include "climdiff/nn/layers.hpp"
#include "climdiff/srresnet.hpp"
#include "climdiff/unet.hpp"

namespace climdiff {

namespace {

using nn::Tensor;
using nn::Var;
using D = double;

Var<D> leaf(nn::Shape shape, Rng& rng, double scale = 1.0) {
  Tensor<D> t(std::move(shape));
  for (auto& v : t.data()) v = scale * rng.normal();
  return Var<D>(std::move(t), true);
}

// sum(out * R) with R fixed per case
struct Projection {
  Var<D> r;
  Var<D> operator()(const Var<D>& out, Rng& rng) {
    if (!r.defined() || r.shape() != out.shape()) r = leaf(out.shape(), rng);
    return nn::sum(nn::mul(out, Var<D>(r.value())));
  }
};

// Zero-initialised layers would hide gradient paths behind them.
void perturb(nn::ParamList<D>& params, Rng& rng) {
  for (auto& p : params) {
    for (auto& v : p.var.mutable_value().data()) v += 0.1 * rng.normal();
  }
}

GradSuiteCase run_case(std::string name, const std::function<Var<D>()>& loss, const nn::ParamList<D>& inputs,
                       Rng& rng, const nn::GradCheckOptions& options) {
  GradSuiteCase c{std::move(name), nn::check_gradients(loss, inputs, rng, options), 0.0};
  for (const auto& t : c.tensors) c.max_rel_error = std::max(c.max_rel_error, t.max_rel_error);
  return c;
}

}  // namespace

std::vector<GradSuiteCase> run_gradient_suite(std::uint64_t seed, const nn::GradCheckOptions& options) {
  Rng rng(seed, streams::kInit, 0x67);
  std::vector<GradSuiteCase> out;
  Projection proj;

  {
    nn::Conv2d<D> conv(3, 4, 3, 1, rng);
    auto x = leaf({2, 3, 5, 6}, rng);
    nn::ParamList<D> ps{{"x", x}};
    conv.collect(ps, "conv");
    perturb(ps, rng);
    proj = {};
    out.push_back(run_case("conv2d 3x3 stride 1", [&] { return proj(conv(x), rng); }, ps, rng, options));
  }
  {
    nn::Conv2d<D> conv(2, 3, 3, 2, rng);
    auto x = leaf({2, 2, 6, 6}, rng);
    nn::ParamList<D> ps{{"x", x}};
    conv.collect(ps, "conv");
    perturb(ps, rng);
    proj = {};
    out.push_back(run_case("conv2d 3x3 stride 2", [&] { return proj(conv(x), rng); }, ps, rng, options));
  }
  {
    nn::Linear<D> lin(5, 4, rng);
    auto x = leaf({3, 5}, rng);
    nn::ParamList<D> ps{{"x", x}};
    lin.collect(ps, "linear");
    perturb(ps, rng);
    proj = {};
    out.push_back(run_case("linear", [&] { return proj(lin(x), rng); }, ps, rng, options));
  }
  {
    nn::GroupNorm<D> gn(6, 3);
    auto x = leaf({2, 6, 4, 3}, rng);
    nn::ParamList<D> ps{{"x", x}};
    gn.collect(ps, "norm");
    perturb(ps, rng);
    proj = {};
    out.push_back(run_case("group_norm", [&] { return proj(gn(x), rng); }, ps, rng, options));
  }
  {
    auto x = leaf({2, 3, 4, 4}, rng, 2.0);
    proj = {};
    out.push_back(run_case("silu", [&] { return proj(nn::silu(x), rng); }, {{"x", x}}, rng, options));
  }
  {
    auto x = leaf({2, 3, 4, 4}, rng);
    auto v = leaf({2, 3}, rng);
    proj = {};
    out.push_back(run_case("add_channel_bias", [&] { return proj(nn::add_channel_bias(x, v), rng); },
                           {{"x", x}, {"v", v}}, rng, options));
  }
  {
    auto a = leaf({2, 2, 3, 3}, rng);
    auto b = leaf({2, 3, 3, 3}, rng);
    proj = {};
    out.push_back(run_case("concat_channels", [&] { return proj(nn::concat_channels(a, b), rng); },
                           {{"a", a}, {"b", b}}, rng, options));
  }
  {
    auto x = leaf({2, 2, 3, 4}, rng);
    proj = {};
    out.push_back(
        run_case("upsample_nearest2x", [&] { return proj(nn::upsample_nearest2x(x), rng); }, {{"x", x}}, rng, options));
  }
  {
    auto a = leaf({3, 4}, rng);
    auto b = leaf({3, 4}, rng);
    proj = {};
    out.push_back(run_case("add/mul/scale",
                           [&] { return proj(nn::scale(nn::add(nn::mul(a, b), a), 0.5), rng); },
                           {{"a", a}, {"b", b}}, rng, options));
  }
  {
    auto p = leaf({2, 1, 4, 4}, rng);
    auto t = leaf({2, 1, 4, 4}, rng);
    out.push_back(run_case("l1_loss", [&] { return nn::l1_loss(p, t); }, {{"pred", p}, {"target", t}}, rng, options));
  }
  {
    UNetConfig cfg;
    cfg.in_channels = 4;
    cfg.out_channels = 1;
    cfg.base_width = 16;
    cfg.level_multipliers = {1, 2, 2};
    cfg.blocks_per_level = 1;
    cfg.time_embed_dim = 16;
    UNet<D> net(cfg, seed);
    auto params = net.parameters();
    perturb(params, rng);
    auto x = leaf({2, 4, 8, 8}, rng);
    const std::vector<int> ts{3, 41};
    nn::ParamList<D> ps{{"x", x}};
    ps.insert(ps.end(), params.begin(), params.end());
    proj = {};
    out.push_back(run_case("unet width 16, 3 levels", [&] { return proj(net.forward(x, ts), rng); }, ps, rng, options));
  }
  {
    SRResNetConfig cfg{3, 1, 16, 2, 2};
    SRResNet<D> net(cfg, seed);
    auto params = net.parameters();
    perturb(params, rng);
    auto x = leaf({2, 3, 4, 4}, rng);
    nn::ParamList<D> ps{{"x", x}};
    ps.insert(ps.end(), params.begin(), params.end());
    proj = {};
    out.push_back(run_case("srresnet width 16", [&] { return proj(net.forward(x), rng); }, ps, rng, options));
  }
  return out;
}

}  // namespace climdiff
