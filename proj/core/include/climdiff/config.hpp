#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "climdiff/datagen.hpp"
#include "climdiff/schedule.hpp"

namespace climdiff {

struct DataSettings {
  std::size_t n_samples = 730;
  std::size_t h = 48;
  std::size_t w = 48;
  std::size_t scale = 4;
  std::uint64_t seed = 0;
  std::array<double, 3> split_ratios{5300.0, 500.0, 1500.0};
};

struct DiffusionSettings {
  std::size_t timesteps = 100;
  double beta_start = 1e-4;
  double beta_end = 0.02;
};

struct ModelSettings {
  std::size_t base_width = 16;
  std::vector<std::size_t> level_multipliers{1, 2, 2};
  std::size_t blocks_per_level = 1;
  std::size_t cond_channels = 3;
  std::size_t target_channels = 1;
  std::size_t srresnet_width = 64;
  std::size_t srresnet_blocks = 8;
};

struct TrainSettings {
  std::size_t iters = 10000;
  std::size_t batch_size = 2;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 1000;
};

struct EvalSettings {
  std::vector<std::string> methods{"bilinear", "bicubic", "unet", "srresnet", "ddpm"};
  std::vector<std::size_t> scales{4, 8};
  /// Evaluate on the first `max_samples` test samples; 0 means all.
  std::size_t max_samples = 0;
  bool per_sample_rmse = false;
};

/// Every setting of a run. Defaults are desk scale; a config file overrides
/// them and command-line flags override the file.
struct RunConfig {
  DataSettings data;
  DiffusionSettings diffusion;
  ModelSettings model;
  TrainSettings train;
  EvalSettings eval;

  void validate() const;
  SyntheticSpec synthetic_spec() const;
  ScheduleParams schedule_params() const;
};

/// Parses JSON text on top of `base`. Unknown keys and wrongly typed values
/// are Config errors naming the offending key.
RunConfig parse_config(std::string_view json_text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});
/// Canonical JSON rendering (sorted, fully populated).
std::string dump_config(const RunConfig& config);

}  // namespace climdiff
