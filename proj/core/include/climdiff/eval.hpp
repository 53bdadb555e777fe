#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "climdiff/field.hpp"

namespace climdiff {

/// Pooled RMSE over every element of the named channels of every sample.
double rmse(std::span<const Field> pred, std::span<const Field> truth, const std::vector<std::string>& targets);
/// Mean of per-sample RMSEs; the alternative convention, for sensitivity checks.
double rmse_per_sample(std::span<const Field> pred, std::span<const Field> truth,
                       const std::vector<std::string>& targets);

/// 100 * (baseline - ours) / baseline. Requires baseline > 0.
double percent_improvement(double ours, double baseline);

struct ReportRow {
  std::string method;
  std::string io_config;  // "-" for interpolation methods
  std::size_t scale = 4;
  double rmse = 0.0;
  std::size_t n = 0;
  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct ReportMetadata {
  std::uint64_t seed = 0;
  std::string dataset_hash;
  std::string timestamp;
  std::string units = "data units of the synthetic generator";
};

struct EvalReport {
  std::vector<ReportRow> rows;
  ReportMetadata metadata;
};

/// Sorts rows by (scale, method, io_config). Duplicate keys or negative RMSE
/// are rejected.
EvalReport build_report(std::vector<ReportRow> rows, ReportMetadata metadata = {});

/// "method,io_config,scale,rmse,n" header plus one line per row; RMSE is
/// printed with 17 significant digits so parsing recovers it exactly.
std::string report_csv(const EvalReport& report);
std::vector<ReportRow> parse_report_csv(std::string_view csv);
/// Aligned text table with a percent-improvement column against the bicubic
/// row of the same scale.
std::string report_table(const EvalReport& report);

/// 8-bit binary PGM of one channel, min-max scaled; a constant channel maps to 128.
std::vector<unsigned char> render_pgm(const Field& f, std::string_view channel);
void render_map(const Field& f, std::string_view channel, const std::filesystem::path& path);

/// Mean squared 5-point discrete Laplacian over the interior pixels of every
/// channel. A proxy for fine-scale detail: smoothing lowers it.
double highfreq_energy(const Field& f);

}  // namespace climdiff
