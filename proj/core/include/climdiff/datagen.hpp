#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "climdiff/field.hpp"
#include "climdiff/rng.hpp"

namespace climdiff {

/// Stationary Gaussian random field on a periodic h x w grid, synthesised
/// spectrally with power spectrum (1 + (|k| s)^2)^(-exponent). The spectral
/// scale s is solved so the x-axis autocorrelation at `correlation_length`
/// grid cells equals 1/e. Draws have unit variance in expectation.
class GaussianRandomField {
 public:
  GaussianRandomField(std::size_t height, std::size_t width, double correlation_length, double spectrum_exponent);

  std::vector<double> draw(Rng& rng) const;
  /// Model autocorrelation along x at a (possibly fractional) lag.
  double correlation(double lag) const;
  double spectral_scale() const noexcept { return scale_; }

 private:
  double correlation_for_scale(double scale, double lag) const;
  std::vector<double> amplitude_for_scale(double scale) const;

  std::size_t h_, w_;
  double exponent_;
  double scale_ = 1.0;
  std::vector<double> amplitude_;  // h x (w/2+1), sqrt of normalised spectrum
};

struct ChannelSpectrum {
  double correlation_length;  // grid cells
  double spectrum_exponent;
};

/// Parameters of the synthetic climate-like data (TS, PRECT, dPHIS).
struct SyntheticSpec {
  std::size_t n_samples = 730;
  std::size_t h = 48;
  std::size_t w = 48;
  /// Fields are generated on a larger grid and centre-cropped to h x w.
  std::size_t raw_h = 0;  // 0: h * 213 / 192 rounded
  std::size_t raw_w = 0;  // 0: w * 321 / 256 rounded
  std::array<ChannelSpectrum, 3> spectra{{{8.0, 3.0}, {5.0, 2.5}, {10.0, 3.0}}};  // TS, PRECT latent, topography
  double prect_mixing = 0.5;  // weight of the shared TS latent in the PRECT latent
  double prect_log_std = 0.8;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t resolved_raw_h() const;
  std::size_t resolved_raw_w() const;
};

std::vector<std::string> default_channels();

/// Static topography pair: PHIS (height) and dPHIS (gradient magnitude).
Field generate_topography(const SyntheticSpec& spec);

/// Three-channel samples [TS, PRECT, dPHIS] in raw (physical-like) units.
/// Sample i draws from stream (seed, data, i); dPHIS is identical in all.
std::vector<Field> generate_fields(const SyntheticSpec& spec);

struct SplitCounts {
  std::size_t train = 0, val = 0, test = 0;
};

/// Proportional split by the 5300/500/1500 reference ratios; val and test are
/// rounded to nearest and the remainder goes to train.
SplitCounts split_counts(std::size_t n, std::array<double, 3> ratios = {5300.0, 500.0, 1500.0});

/// Antialiased bicubic degradation to (H/scale, W/scale). scale in {4, 8}.
Field degrade(const Field& hr, std::size_t scale);

/// Bicubic (no antialias) upsampling of an LR field to scale x its dims.
Field upsample_condition(const Field& lr, std::size_t scale);

/// Per-channel normalisation statistics, keyed by channel name.
struct NormStats {
  std::vector<std::string> channels;
  std::vector<ChannelStats> stats;

  const ChannelStats& at(std::string_view channel) const;
  friend bool operator==(const NormStats&, const NormStats&) = default;
};

inline constexpr double kStdFloor = 1e-8;

/// Pooled mean / population std per channel over every sample and pixel.
NormStats compute_norm_stats(std::span<const Field> train_hr);

/// z-score per channel with std floored at kStdFloor.
Field normalize(const Field& f, const NormStats& stats);
Field denormalize(const Field& f, const NormStats& stats);

struct Pair {
  Field lr;
  Field hr;
};

/// Paired LR/HR splits with statistics computed from the training HR only.
struct DatasetBundle {
  std::vector<Pair> train, val, test;
  NormStats norm_stats;
  std::size_t scale_factor = 4;
  bool normalized = false;
};

DatasetBundle make_bundle(std::vector<Field> train_hr, std::vector<Field> val_hr, std::vector<Field> test_hr,
                          std::size_t scale);
/// Applies the bundle's training statistics to LR and HR of every split.
DatasetBundle normalize(DatasetBundle bundle);

// On-disk dataset: {train,val,test}.cgf hold raw HR samples, topography.cgf
// the static PHIS/dPHIS pair, stats.json the training statistics.
struct DatasetFiles {
  std::vector<Field> train, val, test;
  NormStats stats;
};

/// Writes the dataset and returns its hash (FNV-1a over all written files).
std::uint64_t write_dataset(const std::filesystem::path& dir, const DatasetFiles& data, const Field& topography);
DatasetFiles read_dataset(const std::filesystem::path& dir);
std::uint64_t dataset_hash(const std::filesystem::path& dir);

void write_stats(const std::filesystem::path& path, const NormStats& stats);
NormStats read_stats(const std::filesystem::path& path);

}  // namespace climdiff
