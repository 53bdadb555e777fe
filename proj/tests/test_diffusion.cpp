#include <algorithm>
#include <cmath>

#include "climdiff/datagen.hpp"
#include "climdiff/diffusion.hpp"
#include "test_util.hpp"

namespace climdiff {
namespace {

using testing::error_kind;
using testing::random_field;

// Returns the noise that makes x_t consistent with the stored clean targets:
// (x_t - sqrt(abar_t) x0) / sqrt(1 - abar_t).
class ConsistentOracle : public NoisePredictor {
 public:
  ConsistentOracle(std::vector<Field> x0, const NoiseSchedule& s) : x0_(std::move(x0)), s_(s) {}
  std::vector<Field> predict(std::span<const Field>, std::span<const Field> x_t, std::size_t t) const override {
    const double ab = s_.alpha_bar[t];
    std::vector<Field> out;
    for (std::size_t n = 0; n < x_t.size(); ++n) {
      Field e = x_t[n];
      for (std::size_t i = 0; i < e.size(); ++i) {
        e.data()[i] = static_cast<float>((double(x_t[n].data()[i]) - std::sqrt(ab) * x0_[n].data()[i]) /
                                         std::sqrt(1.0 - ab));
      }
      out.push_back(std::move(e));
    }
    return out;
  }

 private:
  std::vector<Field> x0_;
  const NoiseSchedule& s_;
};

class FixedPredictor : public NoisePredictor {
 public:
  explicit FixedPredictor(std::vector<Field> eps) : eps_(std::move(eps)) {}
  std::vector<Field> predict(std::span<const Field>, std::span<const Field>, std::size_t) const override {
    return eps_;
  }

 private:
  std::vector<Field> eps_;
};

Field zeros_like(const Field& f) { return Field(f.channels(), f.height(), f.width()); }

TEST(QSample, ZeroNoiseScalesSignal) {
  const auto s = linear_schedule(100);
  Rng rng(1);
  const Field x0 = random_field({"PRECT"}, 4, 4, rng);
  const Field out = q_sample(x0, 40, zeros_like(x0), s);
  for (std::size_t i = 0; i < x0.size(); ++i) {
    EXPECT_FLOAT_EQ(out.data()[i], static_cast<float>(std::sqrt(s.alpha_bar[40]) * x0.data()[i]));
  }
}

TEST(QSample, ZeroSignalScalesNoise) {
  const auto s = linear_schedule(100);
  Rng rng(2);
  const Field eps = random_field({"PRECT"}, 4, 4, rng);
  const Field out = q_sample(zeros_like(eps), 99, eps, s);
  for (std::size_t i = 0; i < eps.size(); ++i) {
    EXPECT_FLOAT_EQ(out.data()[i], static_cast<float>(std::sqrt(1 - s.alpha_bar[99]) * eps.data()[i]));
  }
  EXPECT_EQ(error_kind([&] { q_sample(eps, 0, random_field({"PRECT"}, 4, 5, rng), s); }), ErrorKind::Shape);
}

struct Moments {
  std::vector<double> mean, var;
};

Moments moments(const std::vector<Field>& draws) {
  const std::size_t m = draws.front().size();
  Moments out{std::vector<double>(m), std::vector<double>(m)};
  for (const auto& d : draws)
    for (std::size_t i = 0; i < m; ++i) out.mean[i] += d.data()[i];
  for (auto& v : out.mean) v /= static_cast<double>(draws.size());
  for (const auto& d : draws)
    for (std::size_t i = 0; i < m; ++i) out.var[i] += std::pow(d.data()[i] - out.mean[i], 2);
  for (auto& v : out.var) v /= static_cast<double>(draws.size() - 1);
  return out;
}

// Mean within 3 standard errors of sqrt(abar) x0, variance within 3 standard
// errors of (1 - abar); for Gaussian draws var(s^2) = 2 sigma^4 / (n - 1).
void expect_marginal(const std::vector<Field>& draws, const Field& x0, double ab) {
  const auto m = moments(draws);
  const double n = static_cast<double>(draws.size());
  const double var = 1.0 - ab;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    EXPECT_NEAR(m.mean[i], std::sqrt(ab) * x0.data()[i], 3 * std::sqrt(var / n)) << "pixel " << i;
    EXPECT_NEAR(m.var[i], var, 3 * var * std::sqrt(2.0 / (n - 1))) << "pixel " << i;
  }
}

TEST(QSample, MonteCarloMatchesClosedForm) {
  const auto s = linear_schedule(100);
  const Field x0({"PRECT"}, 2, 2, {1.5f, -0.5f, 0.0f, 2.0f});
  for (std::size_t t : {1u, 50u, 99u}) {
    Rng rng(3, streams::kForward, t);
    std::vector<Field> draws;
    for (int k = 0; k < 10000; ++k) draws.push_back(q_sample(x0, t, gaussian_field({"PRECT"}, 2, 2, rng), s));
    expect_marginal(draws, x0, s.alpha_bar[t]);
  }
}

TEST(QStep, TinyBetaIsNearIdentity) {
  const auto s = linear_schedule(1, 1e-12, 1e-12);
  Rng rng(4), noise(5);
  const Field x = random_field({"a", "b"}, 3, 3, rng);
  const Field y = q_step(x, 0, s, noise);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y.data()[i], x.data()[i], 1e-5);
}

TEST(QStep, IteratedChainMatchesClosedForm) {
  const auto s = linear_schedule(100);
  const Field x0({"PRECT"}, 2, 2, {1.5f, -0.5f, 0.0f, 2.0f});
  std::vector<Field> chains(10000, x0);
  std::vector<Rng> rngs;
  for (std::size_t c = 0; c < chains.size(); ++c) rngs.emplace_back(6, streams::kForward, c);
  std::size_t done = 0;
  for (std::size_t t : {1u, 50u, 99u}) {
    for (; done <= t; ++done) {
      for (std::size_t c = 0; c < chains.size(); ++c) chains[c] = q_step(chains[c], done, s, rngs[c]);
    }
    expect_marginal(chains, x0, s.alpha_bar[t]);
  }
}

TEST(QStep, SeededRunsAreIdentical) {
  const auto s = linear_schedule(100);
  Rng src(7);
  const Field x = random_field({"a"}, 4, 4, src);
  Rng r1(8, streams::kForward, 0), r2(8, streams::kForward, 0);
  EXPECT_EQ(q_step(x, 10, s, r1), q_step(x, 10, s, r2));
}

TEST(PSampleStep, ZeroPredictionNoNoiseDividesBySqrtAlpha) {
  const auto s = linear_schedule(100);
  Rng rng(9);
  const std::vector<Field> x{random_field({"PRECT"}, 3, 3, rng)};
  const FixedPredictor zero({zeros_like(x[0])});
  std::vector<Rng> rngs{Rng(1)};
  const auto out = p_sample_step(zero, x, x, 30, s, rngs, 0.0);
  for (std::size_t i = 0; i < x[0].size(); ++i) {
    EXPECT_FLOAT_EQ(out[0].data()[i], static_cast<float>(x[0].data()[i] / std::sqrt(s.alpha[30])));
  }
}

TEST(PSampleStep, FinalStepAddsNoNoise) {
  const auto s = linear_schedule(100);
  Rng rng(10);
  const std::vector<Field> x{random_field({"PRECT"}, 3, 3, rng)};
  const FixedPredictor pred({random_field({"PRECT"}, 3, 3, rng)});
  std::vector<Rng> a{Rng(1)}, b{Rng(2)};
  EXPECT_EQ(p_sample_step(pred, x, x, 0, s, a, 1.0), p_sample_step(pred, x, x, 0, s, b, 0.0));
  // any other step does inject noise
  EXPECT_NE(p_sample_step(pred, x, x, 5, s, a, 1.0), p_sample_step(pred, x, x, 5, s, b, 0.0));
}

TEST(PSampleStep, NoiseIsAddedOutsideTheScaling) {
  const auto s = linear_schedule(100);
  Rng rng(11);
  const std::vector<Field> x{random_field({"PRECT"}, 3, 3, rng)};
  const FixedPredictor pred({random_field({"PRECT"}, 3, 3, rng)});
  std::vector<Rng> noisy{Rng(5)}, clean{Rng(5)};
  const auto with = p_sample_step(pred, x, x, 20, s, noisy, 1.0);
  const auto without = p_sample_step(pred, x, x, 20, s, clean, 0.0);
  Rng z(5);
  for (std::size_t i = 0; i < x[0].size(); ++i) {
    EXPECT_NEAR(with[0].data()[i] - without[0].data()[i], s.sigma[20] * z.normal(), 1e-6);
  }
}

TEST(Inversion, ConsistentOracleRecoversCleanTarget) {
  const auto s = linear_schedule(100);
  Rng rng(12);
  std::vector<Field> x0, lr;
  for (int i = 0; i < 3; ++i) {
    x0.push_back(random_field({"PRECT"}, 8, 8, rng));
    lr.push_back(random_field({"TS", "PRECT", "dPHIS"}, 2, 2, rng));
  }
  const ConsistentOracle oracle(x0, s);
  const auto out = sample(oracle, lr, s, {{"PRECT"}, 4, 0, 0, 0.0});
  ASSERT_EQ(out.size(), 3u);
  for (std::size_t n = 0; n < 3; ++n) {
    double worst = 0, scale = 0;
    for (std::size_t i = 0; i < x0[n].size(); ++i) {
      worst = std::max(worst, std::abs(double(out[n].data()[i]) - x0[n].data()[i]));
      scale = std::max(scale, std::abs(double(x0[n].data()[i])));
    }
    EXPECT_LT(worst / scale, 1e-5);
  }
}

TEST(Inversion, SingleStepScheduleWithStoredNoise) {
  const auto s = linear_schedule(1, 0.3, 0.3);
  Rng rng(13);
  const Field x0 = random_field({"PRECT"}, 4, 4, rng);
  const Field eps = random_field({"PRECT"}, 4, 4, rng);
  const FixedPredictor stored({eps});
  std::vector<Rng> rngs{Rng(0)};
  const auto out = reverse_chain(stored, {q_sample(x0, 0, eps, s)}, std::vector<Field>{x0}, s, rngs, 0.0);
  for (std::size_t i = 0; i < x0.size(); ++i) EXPECT_NEAR(out[0].data()[i], x0.data()[i], 1e-6);
}

TEST(Sample, DeterministicPerChainStreams) {
  const auto s = linear_schedule(10);
  Rng rng(14);
  std::vector<Field> lr;
  for (int i = 0; i < 3; ++i) lr.push_back(random_field({"TS", "PRECT", "dPHIS"}, 2, 2, rng));
  const FixedPredictor zero(std::vector<Field>(3, Field({"PRECT"}, 8, 8)));
  const SampleRequest req{{"PRECT"}, 4, 21, 0, 1.0};
  const auto a = sample(zero, lr, s, req);
  EXPECT_EQ(a, sample(zero, lr, s, req));

  auto other = req;
  other.seed = 22;
  EXPECT_NE(a, sample(zero, lr, s, other));

  // chain 2 sampled alone with first_chain = 2 equals chain 2 of the batch
  const FixedPredictor zero1(std::vector<Field>(1, Field({"PRECT"}, 8, 8)));
  auto tail = req;
  tail.first_chain = 2;
  const auto c = sample(zero1, std::span<const Field>(lr).subspan(2, 1), s, tail);
  EXPECT_EQ(c[0], a[2]);
  EXPECT_EQ(a[0].height(), 8u);
}

DenoiserConfig tiny_denoiser(std::size_t targets = 1) {
  DenoiserConfig c;
  c.cond_channels = 3;
  c.target_channels = targets;
  c.base_width = 8;
  c.level_multipliers = {1, 2};
  c.blocks_per_level = 1;
  c.time_embed_dim = 16;
  return c;
}

TrainBatch random_batch(Rng& rng, std::size_t n, std::size_t targets = 1, std::size_t cond = 3,
                        std::size_t timesteps = 100) {
  TrainBatch b;
  std::vector<std::string> tnames = targets == 1 ? std::vector<std::string>{"PRECT"}
                                                 : std::vector<std::string>{"TS", "PRECT", "dPHIS"};
  std::vector<std::string> cnames{"TS", "PRECT", "dPHIS"};
  cnames.resize(cond);
  for (std::size_t i = 0; i < n; ++i) {
    b.lr_cond.push_back(random_field(cnames, 8, 8, rng));
    b.hr_target.push_back(random_field(tnames, 8, 8, rng));
    b.eps.push_back(random_field(tnames, 8, 8, rng));
    b.t.push_back(static_cast<int>(rng.uniform_int(timesteps)));
  }
  return b;
}

TEST(TrainStep, InitialLossIsMeanAbsoluteNoise) {
  auto net = build_denoiser<float>(tiny_denoiser(), 0);
  DiffusionTrainer tr(net, linear_schedule(100), {1e-3, 100});
  Rng rng(15);
  const auto batch = random_batch(rng, 4);
  double mean_abs = 0, count = 0;
  for (const auto& e : batch.eps)
    for (float v : e.data()) mean_abs += std::abs(v), ++count;
  mean_abs /= count;
  EXPECT_NEAR(tr.train_step(batch), mean_abs, 1e-6);
  EXPECT_NEAR(mean_abs, std::sqrt(2.0 / M_PI), 0.1);
  EXPECT_EQ(tr.iteration(), 1);
}

TEST(TrainStep, LossInvariantToBatchOrder) {
  Rng rng(16);
  const auto first = random_batch(rng, 4);
  const auto second = random_batch(rng, 4);
  auto permuted = second;
  std::reverse(permuted.lr_cond.begin(), permuted.lr_cond.end());
  std::reverse(permuted.hr_target.begin(), permuted.hr_target.end());
  std::reverse(permuted.eps.begin(), permuted.eps.end());
  std::reverse(permuted.t.begin(), permuted.t.end());

  auto na = build_denoiser<float>(tiny_denoiser(), 1);
  auto nb = build_denoiser<float>(tiny_denoiser(), 1);
  DiffusionTrainer a(na, linear_schedule(100), {1e-3, 100}), b(nb, linear_schedule(100), {1e-3, 100});
  a.train_step(first);
  b.train_step(first);
  EXPECT_NEAR(a.train_step(second), b.train_step(permuted), 1e-6);
}

TEST(TrainStep, SeededRunsAreBitIdentical) {
  auto run = [] {
    auto net = build_denoiser<float>(tiny_denoiser(), 2);
    DiffusionTrainer tr(net, linear_schedule(100), {1e-3, 10});
    std::vector<double> losses;
    for (int i = 0; i < 10; ++i) {
      Rng rng(17, streams::kTrain, i);
      losses.push_back(tr.train_step(random_batch(rng, 2)));
    }
    std::vector<float> params;
    for (const auto& p : net.parameters()) params.insert(params.end(), p.var.value().data().begin(), p.var.value().data().end());
    return std::make_pair(losses, params);
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(TrainStep, RejectsChannelMismatch) {
  auto net = build_denoiser<float>(tiny_denoiser(), 3);
  DiffusionTrainer tr(net, linear_schedule(100), {1e-3, 10});
  Rng rng(18);
  EXPECT_EQ(error_kind([&] { tr.train_step(random_batch(rng, 2, 1, 2)); }), ErrorKind::Config);
  EXPECT_EQ(error_kind([&] { tr.train_step(random_batch(rng, 2, 3, 3)); }), ErrorKind::Config);
  auto bad_t = random_batch(rng, 2);
  bad_t.t[1] = 100;
  EXPECT_EQ(error_kind([&] { tr.train_step(bad_t); }), ErrorKind::Range);
}

TEST(TrainStep, LossDecreasesOnFixedBatch) {
  auto net = build_denoiser<float>(tiny_denoiser(), 4);
  DiffusionTrainer tr(net, linear_schedule(100), {3e-3, 150});
  Rng rng(19);
  const auto batch = random_batch(rng, 2);
  const double first = tr.train_step(batch);
  double last = first;
  for (int i = 0; i < 149; ++i) last = tr.train_step(batch);
  EXPECT_LT(last, 0.6 * first);
}

TEST(Sample, DenoiserPredictorRunsOnTrainedNet) {
  auto net = build_denoiser<float>(tiny_denoiser(), 5);
  DiffusionTrainer tr(net, linear_schedule(10), {1e-3, 5});
  Rng rng(20);
  for (int i = 0; i < 3; ++i) tr.train_step(random_batch(rng, 2, 1, 3, 10));
  const DenoiserPredictor pred(net);
  std::vector<Field> lr{random_field({"TS", "PRECT", "dPHIS"}, 2, 2, rng)};
  const auto out = sample(pred, lr, tr.schedule(), {{"PRECT"}, 4, 3, 0, 1.0});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].channels(), std::vector<std::string>{"PRECT"});
  EXPECT_EQ(out[0].height(), 8u);
  EXPECT_TRUE(out[0].all_finite());
}

}  // namespace
}  // namespace climdiff
