#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "climdiff/config.hpp"
#include "climdiff/datagen.hpp"
#include "climdiff/eval.hpp"

namespace climdiff {

// Pipeline steps shared by the command-line tool and the experiment matrix.

enum class Method { Bilinear, Bicubic, UNet, SRResNet, DDPM };

std::string_view to_string(Method m);
Method parse_method(std::string_view text);  // bilinear | bicubic | unet | srresnet | ddpm
inline bool is_learned(Method m) { return m != Method::Bilinear && m != Method::Bicubic; }

/// Channels a model with this I/O configuration predicts.
std::vector<std::string> model_targets(IoConfig io);
/// Channel the report's RMSE is computed on (every method, every I/O config).
inline constexpr std::string_view kEvalChannel = channel::kPRECT;

/// Normalised splits at one scale: LR grids, their bicubic upsampling to HR
/// size (the conditioning input) and the HR grids.
struct PreparedSplit {
  std::vector<Field> lr, lr_up, hr;
  std::vector<Field> hr_raw;  // denormalised ground truth for evaluation
  std::size_t size() const { return hr.size(); }
};

struct PreparedData {
  NormStats stats;
  std::size_t scale = 4;
  PreparedSplit train, val, test;
};

/// Degrades raw HR by `scale`, normalises LR and HR with the training HR
/// statistics. `max_test` > 0 keeps only the first test samples.
PreparedData prepare_data(const DatasetFiles& files, std::size_t scale, std::size_t max_test = 0);

struct DatasetSummary {
  SplitCounts counts;
  std::uint64_t hash = 0;
};

/// Generates, splits and writes the synthetic dataset described by `config`.
DatasetSummary generate_dataset(const RunConfig& config, const std::filesystem::path& dir);
std::string hash_hex(std::uint64_t hash);

struct TrainJob {
  Method method = Method::DDPM;
  IoConfig io = IoConfig::ThreeInOneOut;
  std::size_t scale = 4;
};

/// "<method>_<io>_x<scale>", used for checkpoint and log file names.
std::string job_name(const TrainJob& job);

struct TrainPaths {
  std::filesystem::path checkpoint;
  std::filesystem::path loss_log;
};

struct TrainOutcome {
  std::int64_t start_iter = 0;
  std::int64_t end_iter = 0;
  std::vector<double> losses;  // losses of the iterations run by this call
};

/// Trains a learned method. Batches are drawn from stream (train.seed,
/// train, iter), so a run resumed from a checkpoint continues exactly as an
/// uninterrupted run would. Writes the checkpoint every
/// train.checkpoint_every iterations and at the end, and one loss log row
/// per iteration.
TrainOutcome train_model(const RunConfig& config, const TrainJob& job, const PreparedData& data,
                         const TrainPaths& paths, bool resume, std::ostream* progress = nullptr);

/// Downscales every LR input with the given method and returns denormalised
/// HR-size fields holding the method's target channels. Learned methods load
/// `checkpoint`. DDPM chain i uses sampling stream (seed, first_chain + i).
std::vector<Field> downscale(const RunConfig& config, const TrainJob& job, const PreparedData& data,
                             std::span<const Field> lr_normalized, const std::optional<std::filesystem::path>& checkpoint,
                             std::uint64_t seed, std::uint64_t first_chain = 0, std::ostream* progress = nullptr);

struct MethodEvaluation {
  ReportRow row;
  std::vector<Field> predictions;  // denormalised
};

/// Runs `downscale` over the prepared test split and scores the PRECT channel.
MethodEvaluation evaluate_method(const RunConfig& config, const TrainJob& job, const PreparedData& data,
                                 const std::optional<std::filesystem::path>& checkpoint, std::uint64_t seed,
                                 std::ostream* progress = nullptr);

}  // namespace climdiff
