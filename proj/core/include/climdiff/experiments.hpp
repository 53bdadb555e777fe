#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "climdiff/config.hpp"
#include "climdiff/eval.hpp"
#include "climdiff/workflow.hpp"

namespace climdiff {

struct MatrixCell {
  TrainJob job;
  std::uint64_t seed = 0;  // training and sampling seed of this cell
};

/// Methods x I/O configurations x scales. Interpolation methods ignore the
/// I/O configuration and get one cell per scale.
struct ExperimentMatrix {
  RunConfig config;
  std::vector<Method> methods{Method::Bilinear, Method::Bicubic, Method::UNet, Method::SRResNet, Method::DDPM};
  std::vector<IoConfig> io_configs{IoConfig::ThreeInThreeOut, IoConfig::ThreeInOneOut};
  std::vector<std::size_t> scales{4, 8};
  std::filesystem::path data_dir;
  std::filesystem::path out_dir;
  std::size_t jobs = 1;

  /// Fully expanded cell list, validated before anything runs.
  std::vector<MatrixCell> cells() const;
};

struct CellResult {
  MatrixCell cell;
  bool ok = false;
  bool cached = false;
  std::string error;
  ReportRow row;
  double highfreq = 0.0;     // mean highfreq_energy of the PRECT predictions
  double highfreq_hr = 0.0;  // same for the HR ground truth
};

enum class VerdictStatus { Holds, Fails, Inconclusive };
std::string_view to_string(VerdictStatus s);

struct Verdict {
  std::string id;
  std::string claim;
  VerdictStatus status = VerdictStatus::Inconclusive;
  std::string detail;
};

struct MatrixOutcome {
  EvalReport report;
  std::vector<CellResult> cells;
  std::vector<Verdict> verdicts;
  std::string findings;
};

/// Cache key of a cell: hash of the settings that influence its result and
/// of the dataset it runs on.
std::string cell_key(const MatrixCell& cell, const RunConfig& config, std::uint64_t dataset_hash);

/// Trains (when needed) and evaluates every cell. Cells whose stored result
/// carries a matching key are skipped. A failing cell is recorded and the
/// remaining cells still run. Writes the consolidated outputs via
/// `summarize_matrix`.
MatrixOutcome run_matrix(const ExperimentMatrix& matrix, std::ostream* progress = nullptr);

/// Directional checks of the reference trends:
///   a: every method's 8x RMSE exceeds its 4x RMSE
///   b: DDPM 3in1out RMSE below DDPM 3in3out RMSE
///   c: DDPM 3in1out outputs carry more high-frequency energy than bicubic
///   d: DDPM 3in1out has the lowest RMSE at each scale
std::vector<Verdict> compute_verdicts(const std::vector<CellResult>& cells);
std::string render_findings(const MatrixOutcome& outcome);

/// Reads every stored cell result under `out_dir` and (re)writes
/// report.csv, report.txt and findings.md there.
MatrixOutcome summarize_matrix(const std::filesystem::path& out_dir);

}  // namespace climdiff
