#include "climdiff/baselines.hpp"

#include "climdiff/datagen.hpp"
#include "climdiff/error.hpp"
#include "climdiff/nn/ops.hpp"
#include "climdiff/resample.hpp"

namespace climdiff {

std::string_view to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::Bilinear: return "bilinear";
    case BaselineKind::Bicubic: return "bicubic";
    case BaselineKind::RegressionUNet: return "unet";
    case BaselineKind::SRResNetLike: return "srresnet";
  }
  return "?";
}

BaselineKind parse_baseline_kind(std::string_view text) {
  if (text == "bilinear") return BaselineKind::Bilinear;
  if (text == "bicubic") return BaselineKind::Bicubic;
  if (text == "unet") return BaselineKind::RegressionUNet;
  if (text == "srresnet") return BaselineKind::SRResNetLike;
  fail(ErrorKind::Usage, "unknown baseline '" + std::string(text) + "' (bilinear, bicubic, unet, srresnet)");
}

Field bilinear_upscale(const Field& lr, std::size_t scale) {
  if (scale == 0) fail(ErrorKind::Range, "bilinear_upscale: scale must be positive");
  return bilinear_resize(lr, lr.height() * scale, lr.width() * scale);
}

Field bicubic_upscale(const Field& lr, std::size_t scale) {
  if (scale == 0) fail(ErrorKind::Range, "bicubic_upscale: scale must be positive");
  return bicubic_resize(lr, lr.height() * scale, lr.width() * scale, false);
}

Field interpolate(BaselineKind kind, const Field& lr, std::size_t scale) {
  switch (kind) {
    case BaselineKind::Bilinear: return bilinear_upscale(lr, scale);
    case BaselineKind::Bicubic: return bicubic_upscale(lr, scale);
    default: fail(ErrorKind::Usage, std::string(to_string(kind)) + " is a learned baseline, not an interpolation");
  }
}

void RegressionConfig::validate() const {
  if (is_interpolation(kind)) fail(ErrorKind::Config, "regression baseline must be unet or srresnet");
  if (cond_channels == 0 || target_channels == 0) fail(ErrorKind::Config, "regression: channel counts must be positive");
  if (kind == BaselineKind::RegressionUNet) {
    UNetConfig u{cond_channels, target_channels, base_width, level_multipliers, blocks_per_level, 0, true};
    u.validate();
  } else {
    SRResNetConfig s{cond_channels, target_channels, srresnet_width, srresnet_blocks, scale};
    s.validate();
  }
}

RegressionModel::RegressionModel(RegressionConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  if (config_.kind == BaselineKind::RegressionUNet) {
    UNetConfig u{config_.cond_channels, config_.target_channels, config_.base_width, config_.level_multipliers,
                 config_.blocks_per_level, 0, true};
    unet_ = std::make_unique<UNet<float>>(u, seed);
  } else {
    SRResNetConfig s{config_.cond_channels, config_.target_channels, config_.srresnet_width, config_.srresnet_blocks,
                     config_.scale};
    srresnet_ = std::make_unique<SRResNet<float>>(s, seed);
  }
}

RegressionModel::~RegressionModel() = default;
RegressionModel::RegressionModel(RegressionModel&&) noexcept = default;
RegressionModel& RegressionModel::operator=(RegressionModel&&) noexcept = default;

nn::Var<float> RegressionModel::forward(std::span<const Field> lr) const {
  if (lr.empty()) fail(ErrorKind::Shape, "regression forward: empty batch");
  if (lr.front().num_channels() != config_.cond_channels) {
    fail(ErrorKind::Config, "regression model expects " + std::to_string(config_.cond_channels) +
                                " input channels, got " + std::to_string(lr.front().num_channels()));
  }
  if (unet_) {
    std::vector<Field> up;
    up.reserve(lr.size());
    for (const auto& f : lr) up.push_back(upsample_condition(f, config_.scale));
    return unet_->forward(nn::Var<float>(fields_to_tensor(up)), {});
  }
  return srresnet_->forward(nn::Var<float>(fields_to_tensor(lr)));
}

std::vector<Field> RegressionModel::predict(std::span<const Field> lr,
                                            const std::vector<std::string>& target_names) const {
  if (target_names.size() != config_.target_channels) {
    fail(ErrorKind::Config, "regression predict: model has " + std::to_string(config_.target_channels) +
                                " outputs, " + std::to_string(target_names.size()) + " names given");
  }
  nn::NoGradGuard guard;
  return tensor_to_fields(forward(lr).value(), target_names);
}

nn::ParamList<float> RegressionModel::parameters() const {
  return unet_ ? unet_->parameters() : srresnet_->parameters();
}

RegressionTrainer::RegressionTrainer(RegressionModel& model, nn::CosineLr lr, nn::AdamOptions adam)
    : model_(model), lr_(lr), params_(model.parameters()), adam_(params_, adam) {}

double RegressionTrainer::train_step(std::span<const Field> lr, std::span<const Field> hr_target) {
  if (lr.size() != hr_target.size() || lr.empty()) fail(ErrorKind::Shape, "regression step: batch size mismatch");
  if (hr_target.front().num_channels() != model_.config().target_channels) {
    fail(ErrorKind::Config, "regression step: target has " + std::to_string(hr_target.front().num_channels()) +
                                " channels, model outputs " + std::to_string(model_.config().target_channels));
  }
  nn::zero_grads(params_);
  const auto pred = model_.forward(lr);
  auto target = fields_to_tensor(hr_target);
  if (target.shape() != pred.shape()) fail(ErrorKind::Shape, "regression step: target dims do not match output");
  const auto loss = nn::l1_loss(pred, nn::Var<float>(std::move(target)));
  nn::backward(loss);
  nn::adam_step(params_, adam_, lr_(iteration_));
  ++iteration_;
  return loss.value()[0];
}

}  // namespace climdiff
