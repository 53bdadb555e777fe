#include <cmath>
#include <cstring>

#include "climdiff/nn/checkpoint.hpp"
#include "climdiff/nn/gradcheck.hpp"
#include "climdiff/nn/layers.hpp"
#include "climdiff/nn/optim.hpp"
#include "test_util.hpp"

namespace climdiff::nn {
namespace {

using climdiff::testing::error_kind;
using climdiff::testing::TempDir;

template <class T = float>
Var<T> constant(Shape shape, std::vector<T> values, bool grad = false) {
  return Var<T>(Tensor<T>(std::move(shape), std::move(values)), grad);
}

template <class T = float>
Var<T> randn(Shape shape, Rng& rng, bool grad = false) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.normal());
  return Var<T>(std::move(t), grad);
}

TEST(Conv2d, AllOnesHandExample) {
  auto x = Var<float>(Tensor<float>({1, 1, 3, 3}, 1.0f));
  auto w = Var<float>(Tensor<float>({1, 1, 3, 3}, 1.0f));
  const auto y = conv2d(x, w, Var<float>(), 1, 1).value();
  ASSERT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
  EXPECT_FLOAT_EQ(y[4], 9.0f);
  EXPECT_FLOAT_EQ(y[0], 4.0f);
  EXPECT_FLOAT_EQ(y[8], 4.0f);
  EXPECT_FLOAT_EQ(y[1], 6.0f);
}

TEST(Conv2d, IdentityKernel) {
  Rng rng(1);
  auto x = randn({2, 1, 5, 4}, rng);
  Tensor<float> k({1, 1, 3, 3});
  k[4] = 1.0f;
  const auto y = conv2d(x, Var<float>(k), Var<float>(), 1, 1).value();
  EXPECT_EQ(y, x.value());
}

TEST(Conv2d, BiasAndStrideShape) {
  auto x = Var<float>(Tensor<float>({1, 1, 4, 4}, 0.0f));
  auto w = Var<float>(Tensor<float>({2, 1, 3, 3}, 1.0f));
  auto b = constant({2}, {0.5f, -1.0f});
  const auto y = conv2d(x, w, b, 2, 1).value();
  ASSERT_EQ(y.shape(), (Shape{1, 2, 2, 2}));
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(y[i], 0.5f);
    EXPECT_EQ(y[4 + i], -1.0f);
  }
}

TEST(Conv2d, ChannelMismatchIsShapeError) {
  auto x = Var<float>(Tensor<float>({1, 2, 4, 4}));
  auto w = Var<float>(Tensor<float>({1, 3, 3, 3}));
  EXPECT_EQ(error_kind([&] { conv2d(x, w, Var<float>(), 1, 1); }), ErrorKind::Shape);
}

// Direct loop oracle for a strided, padded cross-correlation.
TEST(Conv2d, MatchesDirectLoops) {
  Rng rng(7);
  for (std::size_t stride : {1u, 2u}) {
    const std::size_t N = 2, Ci = 3, Co = 4, H = 7, W = 6, K = 3, P = 1;
    auto x = randn({N, Ci, H, W}, rng);
    auto w = randn({Co, Ci, K, K}, rng);
    auto b = randn({Co}, rng);
    const auto y = conv2d(x, w, b, stride, P).value();
    const std::size_t Ho = (H + 2 * P - K) / stride + 1, Wo = (W + 2 * P - K) / stride + 1;
    ASSERT_EQ(y.shape(), (Shape{N, Co, Ho, Wo}));
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t o = 0; o < Co; ++o)
        for (std::size_t i = 0; i < Ho; ++i)
          for (std::size_t j = 0; j < Wo; ++j) {
            double acc = b.value()[o];
            for (std::size_t c = 0; c < Ci; ++c)
              for (std::size_t ky = 0; ky < K; ++ky)
                for (std::size_t kx = 0; kx < K; ++kx) {
                  const long yy = static_cast<long>(i * stride + ky) - static_cast<long>(P);
                  const long xx = static_cast<long>(j * stride + kx) - static_cast<long>(P);
                  if (yy < 0 || xx < 0 || yy >= static_cast<long>(H) || xx >= static_cast<long>(W)) continue;
                  acc += double(w.value()[((o * Ci + c) * K + ky) * K + kx]) *
                         x.value()[((n * Ci + c) * H + yy) * W + xx];
                }
            EXPECT_NEAR(y[((n * Co + o) * Ho + i) * Wo + j], acc, 1e-4);
          }
  }
}

TEST(Upsample, ReplicatesBlocks) {
  const auto y = upsample_nearest2x(constant({1, 1, 2, 2}, {1, 2, 3, 4})).value();
  const std::vector<float> expect{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
  EXPECT_EQ(y, Tensor<float>({1, 1, 4, 4}, expect));
}

TEST(Upsample, ConstantStaysConstant) {
  const auto y = upsample_nearest2x(Var<float>(Tensor<float>({2, 3, 3, 5}, 1.25f))).value();
  ASSERT_EQ(y.shape(), (Shape{2, 3, 6, 10}));
  for (float v : y.data()) EXPECT_EQ(v, 1.25f);
}

TEST(Upsample, StrideTwoConvRestoresShape) {
  Rng rng(2);
  Conv2d<float> down(3, 3, 3, 2, rng);
  auto x = randn({1, 3, 6, 10}, rng);
  EXPECT_EQ(down(upsample_nearest2x(x)).shape(), x.shape());
}

TEST(GroupNorm, SingleGroupZScores) {
  auto x = constant({1, 1, 2, 2}, {1, 2, 3, 4});
  const auto y = group_norm(x, 1, constant({1}, {1}), constant({1}, {0})).value();
  double mean = 0, sq = 0;
  for (float v : y.data()) mean += v;
  mean /= 4;
  for (float v : y.data()) sq += (v - mean) * (v - mean);
  EXPECT_NEAR(mean, 0.0, 1e-7);
  EXPECT_NEAR(std::sqrt(sq / 4), 1.0, 1e-5);
}

TEST(GroupNorm, ConstantInputGivesBeta) {
  auto x = Var<float>(Tensor<float>({2, 4, 3, 3}, 7.0f));
  auto gamma = constant({4}, {1, 2, 3, 4});
  auto beta = constant({4}, {0.5f, -1, 2, 0});
  const auto y = group_norm(x, 2, gamma, beta).value();
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t i = 0; i < 9; ++i) EXPECT_FLOAT_EQ(y[(n * 4 + c) * 9 + i], beta.value()[c]);
}

TEST(GroupNorm, ZeroGammaGivesBeta) {
  Rng rng(4);
  auto x = randn({2, 4, 3, 3}, rng);
  auto beta = constant({4}, {1, 2, 3, 4});
  const auto y = group_norm(x, 2, Var<float>(Tensor<float>({4})), beta).value();
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(y[(n * 4 + c) * 9 + i], beta.value()[c]);
}

TEST(GroupNorm, IndivisibleChannelsRejected) {
  auto x = Var<float>(Tensor<float>({1, 6, 2, 2}));
  auto g = Var<float>(Tensor<float>({6}, 1.0f));
  EXPECT_THROW(group_norm(x, 4, g, Var<float>(Tensor<float>({6}))), Error);
  EXPECT_EQ(default_groups(6), 6u);
  EXPECT_EQ(default_groups(64), 8u);
  EXPECT_EQ(default_groups(12), 6u);
}

TEST(Silu, ClosedFormValues) {
  auto x = constant<double>({3}, {0.0, 10.0, -3.0}, true);
  auto y = silu(x);
  EXPECT_EQ(y.value()[0], 0.0);
  EXPECT_NEAR(y.value()[1], 9.99955, 1e-5);
  EXPECT_NEAR(y.value()[1], 10.0 / (1.0 + std::exp(-10.0)), 1e-12);
  EXPECT_NEAR(y.value()[2], -3.0 / (1.0 + std::exp(3.0)), 1e-12);
  backward(sum(y));
  EXPECT_NEAR(x.grad()[0], 0.5, 1e-12);
}

TEST(L1Loss, Examples) {
  auto p = constant({2}, {0, 0}, true);
  auto t = constant({2}, {1, 3});
  auto loss = l1_loss(p, t);
  EXPECT_FLOAT_EQ(loss.value()[0], 2.0f);
  backward(loss);
  EXPECT_FLOAT_EQ(p.grad()[0], -0.5f);
  EXPECT_FLOAT_EQ(p.grad()[1], -0.5f);

  auto q = constant({3}, {1, 2, 5}, true);
  auto r = constant({3}, {1, 4, 2});
  auto l2 = l1_loss(q, r);
  EXPECT_FLOAT_EQ(l2.value()[0], 5.0f / 3.0f);
  backward(l2);
  EXPECT_EQ(q.grad()[0], 0.0f);  // subgradient at the kink
  EXPECT_FLOAT_EQ(q.grad()[1], -1.0f / 3.0f);
  EXPECT_FLOAT_EQ(q.grad()[2], 1.0f / 3.0f);

  EXPECT_EQ(l1_loss(r, r).value()[0], 0.0f);
  EXPECT_THROW(l1_loss(p, r), Error);
}

TEST(Backward, LinearFormGradientIsInput) {
  Rng rng(8);
  auto w = randn({5}, rng, true);
  auto x = randn({5}, rng);
  backward(sum(mul(w, x)));
  EXPECT_EQ(w.grad(), x.value());
  EXPECT_FALSE(x.requires_grad());
}

TEST(Backward, RepeatedCallsAccumulate) {
  Rng rng(9);
  auto w = randn({4}, rng, true);
  auto x = randn({4}, rng);
  auto loss = sum(mul(w, x));
  backward(loss);
  const auto once = w.grad();
  backward(loss);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_FLOAT_EQ(w.grad()[i], 2 * once[i]);
  w.zero_grad();
  for (float g : w.grad().data()) EXPECT_EQ(g, 0.0f);
}

TEST(Backward, LeavesValuesUntouched) {
  Rng rng(10);
  Conv2d<float> conv(2, 3, 3, 1, rng);
  auto x = randn({1, 2, 4, 4}, rng, true);
  const auto before = x.value();
  const auto w_before = conv.weight.value();
  backward(sum(silu(conv(x))));
  EXPECT_EQ(x.value(), before);
  EXPECT_EQ(conv.weight.value(), w_before);
}

TEST(Backward, NoGradGuardRecordsNothing) {
  Rng rng(11);
  auto w = randn({3}, rng, true);
  NoGradGuard guard;
  auto y = mul(w, w);
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.node()->parents.empty());
}

TEST(Ops, ForwardIsBitReproducible) {
  auto run = [] {
    Rng rng(12);
    Conv2d<float> conv(3, 8, 3, 1, rng);
    GroupNorm<float> gn(8);
    auto x = randn({2, 3, 8, 8}, rng);
    return silu(gn(conv(x))).value();
  };
  EXPECT_EQ(run(), run());
}

// Two-layer conv net: analytic gradients against central differences.
template <class T>
double two_layer_conv_error(double h) {
  Rng rng(13);
  Conv2d<T> c1(2, 3, 3, 1, rng), c2(3, 2, 3, 2, rng);
  auto x = randn<T>({2, 2, 6, 6}, rng);
  auto r = randn<T>({2, 2, 3, 3}, rng);
  ParamList<T> ps;
  c1.collect(ps, "c1");
  c2.collect(ps, "c2");
  auto loss = [&] { return sum(mul(c2(silu(c1(x))), r)); };
  zero_grads(ps);
  backward(loss());
  double worst = 0;
  for (auto& p : ps) {
    double num2 = 0, diff2 = 0, ana2 = 0;
    auto& v = p.var.mutable_value();
    for (std::size_t i = 0; i < v.numel(); ++i) {
      const T orig = v[i];
      const double step = h * std::max(1.0, std::abs(double(orig)));
      v[i] = static_cast<T>(orig + step);
      const double fp = loss().value()[0];
      v[i] = static_cast<T>(orig - step);
      const double fm = loss().value()[0];
      v[i] = orig;
      const double n = (fp - fm) / (2 * step);
      const double a = p.var.grad()[i];
      num2 += n * n;
      ana2 += a * a;
      diff2 += (n - a) * (n - a);
    }
    worst = std::max(worst, std::sqrt(diff2) / std::max({std::sqrt(num2), std::sqrt(ana2), 1e-12}));
  }
  return worst;
}

TEST(GradCheck, TwoLayerConvFloat) { EXPECT_LT(two_layer_conv_error<float>(1e-2), 1e-3); }

TEST(GradCheck, TwoLayerConvDouble) { EXPECT_LT(two_layer_conv_error<double>(1e-5), 1e-6); }

TEST(GradCheck, LibraryCheckerFlagsWrongGradient) {
  Rng rng(14);
  auto x = randn<double>({6}, rng, true);
  // silu(x) * x with the graph cut on one factor: the recorded gradient is wrong
  auto loss = [&] { return sum(mul(silu(x), Var<double>(x.value()))); };
  const auto bad = check_gradients(loss, {{"x", x}}, rng);
  ASSERT_EQ(bad.size(), 1u);
  EXPECT_GT(bad[0].max_rel_error, 1e-2);
  auto good = [&] { return sum(mul(silu(x), x)); };
  EXPECT_LT(check_gradients(good, {{"x", x}}, rng)[0].max_rel_error, 1e-8);
}

TEST(Adam, FirstStepIsLrTimesSign) {
  auto w = constant({4}, {1, 1, 1, 1}, true);
  ParamList<float> ps{{"w", w}};
  AdamState<float> st(ps);
  w.mutable_grad() = Tensor<float>({4}, {0.5f, -2.0f, 1e-3f, 0.0f});
  adam_step(ps, st, 0.1);
  EXPECT_NEAR(w.value()[0], 1 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-6);
  EXPECT_NEAR(w.value()[1], 1 + 0.1, 1e-6);
  EXPECT_NEAR(w.value()[2], 1 - 0.1 * 1e-3 / (1e-3 + 1e-8), 1e-6);
  EXPECT_EQ(w.value()[3], 1.0f);
  EXPECT_EQ(st.step, 1);
  ASSERT_EQ(st.m.size(), 1u);
  EXPECT_EQ(st.m[0].shape(), w.shape());
}

TEST(Adam, MatchesReferenceRecurrence) {
  auto w = constant<double>({1}, {0.3}, true);
  ParamList<double> ps{{"w", w}};
  AdamState<double> st(ps);
  double m = 0, v = 0, ref = 0.3;
  const double grads[] = {0.4, -1.0, 0.2, 0.7};
  for (int k = 0; k < 4; ++k) {
    w.mutable_grad()[0] = grads[k];
    adam_step(ps, st, 0.01);
    m = 0.9 * m + 0.1 * grads[k];
    v = 0.999 * v + 0.001 * grads[k] * grads[k];
    const double mh = m / (1 - std::pow(0.9, k + 1)), vh = v / (1 - std::pow(0.999, k + 1));
    ref -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(w.value()[0], ref, 1e-12);
  }
}

TEST(Adam, Deterministic) {
  auto run = [] {
    Rng rng(15);
    auto w = randn({8}, rng, true);
    ParamList<float> ps{{"w", w}};
    AdamState<float> st(ps);
    for (int k = 0; k < 3; ++k) {
      zero_grads(ps);
      backward(sum(mul(w, w)));
      adam_step(ps, st, 0.05);
    }
    return w.value();
  };
  EXPECT_EQ(run(), run());
}

TEST(CosineLr, Endpoints) {
  CosineLr lr{2e-5, 1000};
  EXPECT_DOUBLE_EQ(lr(0), 2e-5);
  EXPECT_NEAR(lr(500), 1e-5, 1e-18);
  EXPECT_NEAR(lr(1000), 0.0, 1e-20);
  for (int i = 1; i <= 1000; ++i) EXPECT_LE(lr(i), lr(i - 1));
}

TEST(Checkpoint, RandomRoundTripsAreBitExact) {
  TempDir dir;
  Rng rng(16);
  for (int i = 0; i < 100; ++i) {
    std::vector<NamedArray> arrays;
    const std::size_t n = rng.uniform_int(5);
    for (std::size_t k = 0; k < n; ++k) {
      NamedArray a;
      a.name = "p" + std::to_string(k) + (k % 2 ? ".weight" : ".bias");
      std::size_t numel = 1;
      for (std::size_t d = 0, r = rng.uniform_int(4); d < r; ++d) {
        a.dims.push_back(static_cast<std::uint32_t>(1 + rng.uniform_int(5)));
        numel *= a.dims.back();
      }
      for (std::size_t e = 0; e < numel; ++e) {
        const std::uint32_t bits = static_cast<std::uint32_t>(rng.next_u64());
        float f;
        std::memcpy(&f, &bits, 4);
        if (std::isnan(f)) f = 0.0f;  // NaN != NaN would defeat ==
        a.values.push_back(f);
      }
      arrays.push_back(std::move(a));
    }
    write_checkpoint(dir / "c.ckpt", arrays);
    ASSERT_EQ(read_checkpoint(dir / "c.ckpt"), arrays);
  }
}

TEST(Checkpoint, LayoutAndErrors) {
  TempDir dir;
  const std::vector<NamedArray> a{{"w", {2}, {1.0f, -2.0f}}};
  write_checkpoint(dir / "c.ckpt", a);
  const std::string b = climdiff::testing::read_bytes(dir / "c.ckpt");
  EXPECT_EQ(b.substr(0, 4), "CKPT");
  EXPECT_EQ(b.size(), 4u + 4 + 4 + 1 + 4 + 4 + 8);
  std::filesystem::resize_file(dir / "c.ckpt", b.size() - 2);
  EXPECT_EQ(error_kind([&] { read_checkpoint(dir / "c.ckpt"); }), ErrorKind::Format);
  EXPECT_EQ(error_kind([&] { read_checkpoint(dir / "none.ckpt"); }), ErrorKind::Io);
}

TEST(Checkpoint, LoadIntoParameters) {
  Rng rng(17);
  Conv2d<float> a(2, 3, 3, 1, rng), b(2, 3, 3, 1, rng);
  ParamList<float> pa, pb;
  a.collect(pa, "conv");
  b.collect(pb, "conv");
  load_into(pb, to_arrays(pa, "model."), "model.");
  EXPECT_EQ(b.weight.value(), a.weight.value());
  EXPECT_EQ(b.bias.value(), a.bias.value());

  Conv2d<float> wrong(2, 4, 3, 1, rng);
  ParamList<float> pw;
  wrong.collect(pw, "conv");
  EXPECT_THROW(load_into(pw, to_arrays(pa)), Error);
  EXPECT_THROW(load_into(pa, std::vector<NamedArray>{}), Error);
}

TEST(Embedding, SinusoidalShapeAndRange) {
  const std::vector<int> ts{0, 5, 99};
  const auto e = sinusoidal_embedding<float>(ts, 16);
  ASSERT_EQ(e.shape(), (Shape{3, 16}));
  for (float v : e.data()) EXPECT_LE(std::abs(v), 1.0f);
  EXPECT_NE(std::vector<float>(e.ptr(), e.ptr() + 16), std::vector<float>(e.ptr() + 16, e.ptr() + 32));
}

}  // namespace
}  // namespace climdiff::nn
