#include "climdiff/diffusion.hpp"

#include <cmath>

#include "climdiff/datagen.hpp"
#include "climdiff/nn/ops.hpp"

namespace climdiff {

Field gaussian_field(const std::vector<std::string>& channels, std::size_t height, std::size_t width, Rng& rng) {
  Field f(channels, height, width);
  for (auto& v : f.data()) v = static_cast<float>(rng.normal());
  return f;
}

Field q_sample(const Field& x0, std::size_t t, const Field& eps, const NoiseSchedule& schedule) {
  if (x0.num_channels() != eps.num_channels() || x0.height() != eps.height() || x0.width() != eps.width()) {
    fail(ErrorKind::Shape, "q_sample: noise layout differs from x0");
  }
  const auto e = schedule.lookup(t);
  const double a = std::sqrt(e.alpha_bar), b = std::sqrt(1.0 - e.alpha_bar);
  Field out = x0;
  auto d = out.data();
  const auto n = eps.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<float>(a * d[i] + b * n[i]);
  return out;
}

Field q_step(const Field& x_prev, std::size_t t, const NoiseSchedule& schedule, Rng& rng) {
  const auto e = schedule.lookup(t);
  const double a = std::sqrt(1.0 - e.beta), b = std::sqrt(e.beta);
  Field out = x_prev;
  for (auto& v : out.data()) v = static_cast<float>(a * v + b * rng.normal());
  return out;
}

std::vector<Field> DenoiserPredictor::predict(std::span<const Field> cond, std::span<const Field> x_t,
                                              std::size_t t) const {
  if (cond.size() != x_t.size() || cond.empty()) fail(ErrorKind::Shape, "predict: condition/target batch mismatch");
  const auto& cfg = net_.config();
  const Field& c0 = cond.front();
  const Field& x0 = x_t.front();
  if (c0.num_channels() + x0.num_channels() != cfg.in_channels || x0.num_channels() != cfg.out_channels) {
    fail(ErrorKind::Config, "predict: denoiser expects " + std::to_string(cfg.in_channels) + " input and " +
                                std::to_string(cfg.out_channels) + " target channels");
  }
  const std::size_t cs = c0.size(), xs = x0.size();
  nn::Tensor<float> input({cond.size(), cfg.in_channels, x0.height(), x0.width()});
  for (std::size_t n = 0; n < cond.size(); ++n) {
    if (cond[n].size() != cs || x_t[n].size() != xs) fail(ErrorKind::Shape, "predict: ragged batch");
    std::copy(cond[n].data().begin(), cond[n].data().end(), input.ptr() + n * (cs + xs));
    std::copy(x_t[n].data().begin(), x_t[n].data().end(), input.ptr() + n * (cs + xs) + cs);
  }
  std::vector<int> ts(cond.size(), static_cast<int>(t));
  nn::NoGradGuard guard;
  const auto out = net_.forward(nn::Var<float>(std::move(input)), ts);
  return tensor_to_fields(out.value(), x0.channels());
}

void TrainBatch::validate(std::size_t timesteps) const {
  const std::size_t n = hr_target.size();
  if (n == 0) fail(ErrorKind::Shape, "train batch is empty");
  if (lr_cond.size() != n || t.size() != n || eps.size() != n) fail(ErrorKind::Shape, "train batch members differ in length");
  for (std::size_t i = 0; i < n; ++i) {
    if (lr_cond[i].height() != hr_target[i].height() || lr_cond[i].width() != hr_target[i].width()) {
      fail(ErrorKind::Shape, "train batch: conditioning dims differ from target dims");
    }
    if (!eps[i].same_layout(hr_target[i])) fail(ErrorKind::Shape, "train batch: noise layout differs from target");
    if (t[i] < 0 || static_cast<std::size_t>(t[i]) >= timesteps) fail(ErrorKind::Range, "train batch: timestep out of range");
  }
}

DiffusionTrainer::DiffusionTrainer(Denoiser<float>& denoiser, NoiseSchedule schedule, nn::CosineLr lr,
                                   nn::AdamOptions adam)
    : net_(denoiser), schedule_(std::move(schedule)), lr_(lr), params_(denoiser.parameters()), adam_(params_, adam) {}

double DiffusionTrainer::train_step(const TrainBatch& batch) {
  batch.validate(schedule_.timesteps());
  const auto& cfg = net_.config();
  const std::size_t cc = batch.lr_cond.front().num_channels();
  const std::size_t tc = batch.hr_target.front().num_channels();
  if (cc + tc != cfg.in_channels || tc != cfg.out_channels) {
    fail(ErrorKind::Config, "train_step: batch has " + std::to_string(cc) + " condition and " + std::to_string(tc) +
                                " target channels, denoiser expects " + std::to_string(cfg.in_channels - cfg.out_channels) +
                                " and " + std::to_string(cfg.out_channels));
  }
  const std::size_t n = batch.hr_target.size();
  const std::size_t h = batch.hr_target.front().height(), w = batch.hr_target.front().width();
  nn::Tensor<float> input({n, cc + tc, h, w});
  nn::Tensor<float> target({n, tc, h, w});
  const std::size_t cs = cc * h * w, xs = tc * h * w;
  for (std::size_t i = 0; i < n; ++i) {
    const Field xt = q_sample(batch.hr_target[i], static_cast<std::size_t>(batch.t[i]), batch.eps[i], schedule_);
    std::copy(batch.lr_cond[i].data().begin(), batch.lr_cond[i].data().end(), input.ptr() + i * (cs + xs));
    std::copy(xt.data().begin(), xt.data().end(), input.ptr() + i * (cs + xs) + cs);
    std::copy(batch.eps[i].data().begin(), batch.eps[i].data().end(), target.ptr() + i * xs);
  }

  nn::zero_grads(params_);
  const auto pred = net_.forward(nn::Var<float>(std::move(input)), batch.t);
  const auto loss = nn::l1_loss(pred, nn::Var<float>(std::move(target)));
  nn::backward(loss);
  nn::adam_step(params_, adam_, lr_(iteration_));
  ++iteration_;
  return loss.value()[0];
}

std::vector<Field> p_sample_step(const NoisePredictor& predictor, std::span<const Field> x_t,
                                 std::span<const Field> cond, std::size_t t, const NoiseSchedule& schedule,
                                 std::span<Rng> rngs, double noise_scale) {
  if (rngs.size() != x_t.size()) fail(ErrorKind::Shape, "p_sample_step: need one rng per chain");
  const auto e = schedule.lookup(t);
  const auto eps = predictor.predict(cond, x_t, t);
  const double inv_sqrt_alpha = 1.0 / std::sqrt(e.alpha);
  const double eps_coef = (1.0 - e.alpha) / std::sqrt(1.0 - e.alpha_bar);
  const double noise = t > 0 ? noise_scale * e.sigma : 0.0;
  std::vector<Field> out;
  out.reserve(x_t.size());
  for (std::size_t n = 0; n < x_t.size(); ++n) {
    if (!eps[n].same_layout(x_t[n])) fail(ErrorKind::Shape, "p_sample_step: prediction layout differs from x_t");
    Field next = x_t[n];
    auto d = next.data();
    const auto ep = eps[n].data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      double v = inv_sqrt_alpha * (d[i] - eps_coef * ep[i]);
      if (t > 0) {
        const double z = rngs[n].normal();
        v += noise * z;
      }
      d[i] = static_cast<float>(v);
    }
    out.push_back(std::move(next));
  }
  return out;
}

std::vector<Field> reverse_chain(const NoisePredictor& predictor, std::vector<Field> x, std::span<const Field> cond,
                                 const NoiseSchedule& schedule, std::span<Rng> rngs, double noise_scale) {
  for (std::size_t t = schedule.timesteps(); t-- > 0;) {
    x = p_sample_step(predictor, x, cond, t, schedule, rngs, noise_scale);
  }
  return x;
}

std::vector<Field> sample(const NoisePredictor& predictor, std::span<const Field> lr_cond, const NoiseSchedule& schedule,
                          const SampleRequest& request) {
  if (request.target_names.empty()) fail(ErrorKind::Config, "sample: no target channels requested");
  std::vector<Field> cond;
  std::vector<Field> x;
  std::vector<Rng> rngs;
  for (std::size_t i = 0; i < lr_cond.size(); ++i) {
    cond.push_back(upsample_condition(lr_cond[i], request.scale));
    rngs.emplace_back(request.seed, streams::kSample, request.first_chain + i);
    x.push_back(gaussian_field(request.target_names, cond.back().height(), cond.back().width(), rngs.back()));
  }
  if (cond.empty()) return {};
  return reverse_chain(predictor, std::move(x), cond, schedule, rngs, request.noise_scale);
}

}  // namespace climdiff
