#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "climdiff/field.hpp"
#include "climdiff/nn/optim.hpp"
#include "climdiff/srresnet.hpp"
#include "climdiff/unet.hpp"

namespace climdiff {

enum class BaselineKind { Bilinear, Bicubic, RegressionUNet, SRResNetLike };

std::string_view to_string(BaselineKind kind);
BaselineKind parse_baseline_kind(std::string_view text);  // bilinear | bicubic | unet | srresnet
inline bool is_interpolation(BaselineKind kind) {
  return kind == BaselineKind::Bilinear || kind == BaselineKind::Bicubic;
}

Field bilinear_upscale(const Field& lr, std::size_t scale);
Field bicubic_upscale(const Field& lr, std::size_t scale);
/// Parameter-free baselines. Throws Usage for learned kinds.
Field interpolate(BaselineKind kind, const Field& lr, std::size_t scale);

struct RegressionConfig {
  BaselineKind kind = BaselineKind::RegressionUNet;
  std::size_t cond_channels = 3;
  std::size_t target_channels = 1;
  std::size_t scale = 4;
  // U-Net variant: same layout as the denoiser, without a timestep embedding.
  std::size_t base_width = 128;
  std::vector<std::size_t> level_multipliers{1, 1, 2, 2, 4};
  std::size_t blocks_per_level = 2;
  // SRResNet-like variant.
  std::size_t srresnet_width = 64;
  std::size_t srresnet_blocks = 8;

  void validate() const;
};

/// Direct LR -> HR regressor. The U-Net consumes the bicubic-upsampled LR,
/// the SRResNet-like network the raw LR grid. Inputs and outputs are in
/// normalised units.
class RegressionModel {
 public:
  RegressionModel(RegressionConfig config, std::uint64_t seed);
  ~RegressionModel();
  RegressionModel(RegressionModel&&) noexcept;
  RegressionModel& operator=(RegressionModel&&) noexcept;

  nn::Var<float> forward(std::span<const Field> lr) const;
  /// Inference without graph recording; output fields carry `target_names`.
  std::vector<Field> predict(std::span<const Field> lr, const std::vector<std::string>& target_names) const;
  nn::ParamList<float> parameters() const;
  const RegressionConfig& config() const noexcept { return config_; }

 private:
  RegressionConfig config_;
  std::unique_ptr<UNet<float>> unet_;
  std::unique_ptr<SRResNet<float>> srresnet_;
};

class RegressionTrainer {
 public:
  RegressionTrainer(RegressionModel& model, nn::CosineLr lr, nn::AdamOptions adam = {});

  /// One Adam step on the mean absolute error between prediction and the
  /// HR target channels.
  double train_step(std::span<const Field> lr, std::span<const Field> hr_target);

  std::int64_t iteration() const noexcept { return iteration_; }
  void set_iteration(std::int64_t it) noexcept { iteration_ = it; }
  nn::AdamState<float>& adam_state() noexcept { return adam_; }
  nn::ParamList<float>& parameters() noexcept { return params_; }

 private:
  RegressionModel& model_;
  nn::CosineLr lr_;
  nn::ParamList<float> params_;
  nn::AdamState<float> adam_;
  std::int64_t iteration_ = 0;
};

}  // namespace climdiff
