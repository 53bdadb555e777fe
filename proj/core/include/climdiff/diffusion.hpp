#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "climdiff/field.hpp"
#include "climdiff/nn/optim.hpp"
#include "climdiff/rng.hpp"
#include "climdiff/schedule.hpp"
#include "climdiff/unet.hpp"

namespace climdiff {

/// Field of i.i.d. standard normals with the given layout.
Field gaussian_field(const std::vector<std::string>& channels, std::size_t height, std::size_t width, Rng& rng);

/// Closed-form forward marginal: sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps.
Field q_sample(const Field& x0, std::size_t t, const Field& eps, const NoiseSchedule& schedule);

/// One Markov noising step: sqrt(1 - beta_t) * x_prev + sqrt(beta_t) * z.
Field q_step(const Field& x_prev, std::size_t t, const NoiseSchedule& schedule, Rng& rng);

/// Predicts the injected noise for a batch of noisy targets that share one
/// timestep. `cond` holds the HR-sized conditioning fields.
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;
  virtual std::vector<Field> predict(std::span<const Field> cond, std::span<const Field> x_t, std::size_t t) const = 0;
};

/// Adapts a trained denoiser network. Inference runs without graph recording.
class DenoiserPredictor final : public NoisePredictor {
 public:
  explicit DenoiserPredictor(const Denoiser<float>& net) : net_(net) {}
  std::vector<Field> predict(std::span<const Field> cond, std::span<const Field> x_t, std::size_t t) const override;

 private:
  const Denoiser<float>& net_;
};

/// One supervised example set for a training step. `t` uses the internal
/// 0-based index; `eps` has the layout of `hr_target`.
struct TrainBatch {
  std::vector<Field> lr_cond;  // already upsampled to HR dims
  std::vector<Field> hr_target;
  std::vector<int> t;
  std::vector<Field> eps;

  void validate(std::size_t timesteps) const;
};

/// Owns the optimisation state for training a denoiser with the L1 noise
/// prediction objective.
class DiffusionTrainer {
 public:
  DiffusionTrainer(Denoiser<float>& denoiser, NoiseSchedule schedule, nn::CosineLr lr, nn::AdamOptions adam = {});

  /// Forms x_t by q_sample, predicts noise from [cond ++ x_t], takes one Adam
  /// step on the mean absolute error and returns that loss.
  double train_step(const TrainBatch& batch);

  std::int64_t iteration() const noexcept { return iteration_; }
  void set_iteration(std::int64_t it) noexcept { iteration_ = it; }
  double current_lr() const { return lr_(iteration_); }
  const NoiseSchedule& schedule() const noexcept { return schedule_; }
  nn::AdamState<float>& adam_state() noexcept { return adam_; }
  nn::ParamList<float>& parameters() noexcept { return params_; }

 private:
  Denoiser<float>& net_;
  NoiseSchedule schedule_;
  nn::CosineLr lr_;
  nn::ParamList<float> params_;
  nn::AdamState<float> adam_;
  std::int64_t iteration_ = 0;
};

/// One reverse step: (x_t - beta_t / sqrt(1 - abar_t) * eps_pred) / sqrt(alpha_t)
/// + noise_scale * sigma_t * z, with z = 0 at t = 0. Noise is drawn from each
/// chain's own stream.
std::vector<Field> p_sample_step(const NoisePredictor& predictor, std::span<const Field> x_t,
                                 std::span<const Field> cond, std::size_t t, const NoiseSchedule& schedule,
                                 std::span<Rng> rngs, double noise_scale = 1.0);

/// Runs t = T-1 .. 0 from the supplied x_T.
std::vector<Field> reverse_chain(const NoisePredictor& predictor, std::vector<Field> x_T, std::span<const Field> cond,
                                 const NoiseSchedule& schedule, std::span<Rng> rngs, double noise_scale = 1.0);

struct SampleRequest {
  std::vector<std::string> target_names;
  std::size_t scale = 4;
  std::uint64_t seed = 0;
  /// Chain i draws from stream (seed, sample, first_chain + i), so results do
  /// not depend on how a dataset is split into batches.
  std::uint64_t first_chain = 0;
  double noise_scale = 1.0;
};

/// Conditional generation: upsample each LR condition to HR size, draw x_T
/// from N(0, I) and run the reverse chain. Output is in normalised units.
std::vector<Field> sample(const NoisePredictor& predictor, std::span<const Field> lr_cond, const NoiseSchedule& schedule,
                          const SampleRequest& request);

}  // namespace climdiff
