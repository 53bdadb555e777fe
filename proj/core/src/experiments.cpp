#include "climdiff/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include "climdiff/error.hpp"
#include "json.hpp"

namespace climdiff {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string cell_dir_name(const TrainJob& job) {
  if (!is_learned(job.method)) return std::string(to_string(job.method)) + "_x" + std::to_string(job.scale);
  return job_name(job);
}

json to_json(const CellResult& r, const std::string& key, const std::string& dataset) {
  return json{{"key", key},
              {"dataset_hash", dataset},
              {"method", r.row.method},
              {"io_config", r.row.io_config},
              {"scale", r.row.scale},
              {"seed", r.cell.seed},
              {"rmse", r.row.rmse},
              {"n", r.row.n},
              {"highfreq", r.highfreq},
              {"highfreq_hr", r.highfreq_hr}};
}

std::optional<json> read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  try {
    return json::parse(in);
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

CellResult from_json(const json& j) {
  CellResult r;
  r.ok = true;
  r.row.method = j.at("method").get<std::string>();
  r.row.io_config = j.at("io_config").get<std::string>();
  r.row.scale = j.at("scale").get<std::size_t>();
  r.row.rmse = j.at("rmse").get<double>();
  r.row.n = j.at("n").get<std::size_t>();
  r.cell.seed = j.at("seed").get<std::uint64_t>();
  r.cell.job.method = parse_method(r.row.method);
  if (r.row.io_config != "-") r.cell.job.io = parse_io_config(r.row.io_config);
  r.cell.job.scale = r.row.scale;
  r.highfreq = j.at("highfreq").get<double>();
  r.highfreq_hr = j.at("highfreq_hr").get<double>();
  return r;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << text;
}

double mean_highfreq(std::span<const Field> fields) {
  if (fields.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& f : fields) acc += highfreq_energy(f.select({std::string(kEvalChannel)}));
  return acc / static_cast<double>(fields.size());
}

CellResult run_cell(const ExperimentMatrix& m, const MatrixCell& cell, const PreparedData& data,
                    const std::string& key, const std::string& dataset, std::ostream* progress) {
  CellResult r;
  r.cell = cell;
  const fs::path dir = m.out_dir / "cells" / cell_dir_name(cell.job);
  fs::create_directories(dir);
  RunConfig cfg = m.config;
  cfg.train.seed = cell.seed;
  std::optional<fs::path> ckpt;
  if (is_learned(cell.job.method)) {
    ckpt = dir / "model.ckpt";
    train_model(cfg, cell.job, data, {*ckpt, dir / "loss.csv"}, false, progress);
  }
  auto ev = evaluate_method(cfg, cell.job, data, ckpt, cell.seed, progress);
  r.row = ev.row;
  r.highfreq = mean_highfreq(ev.predictions);
  r.highfreq_hr = mean_highfreq(data.test.hr_raw);
  r.ok = true;
  write_text(dir / "result.json", to_json(r, key, dataset).dump(2) + "\n");
  fs::remove(dir / "error.txt");
  return r;
}

const CellResult* find_cell(const std::vector<CellResult>& cells, std::string_view method, std::string_view io,
                            std::size_t scale) {
  for (const auto& c : cells) {
    if (c.ok && c.row.method == method && c.row.io_config == io && c.row.scale == scale) return &c;
  }
  return nullptr;
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(5) << v;
  return s.str();
}

std::vector<std::size_t> scales_of(const std::vector<CellResult>& cells) {
  std::vector<std::size_t> s;
  for (const auto& c : cells) {
    if (c.ok && std::find(s.begin(), s.end(), c.row.scale) == s.end()) s.push_back(c.row.scale);
  }
  std::sort(s.begin(), s.end());
  return s;
}

Verdict combine(Verdict v, const std::vector<bool>& checks, const std::vector<std::string>& notes) {
  if (checks.empty()) {
    v.status = VerdictStatus::Inconclusive;
    v.detail = "no comparable cells";
    return v;
  }
  v.status = std::all_of(checks.begin(), checks.end(), [](bool b) { return b; }) ? VerdictStatus::Holds
                                                                                   : VerdictStatus::Fails;
  for (const auto& n : notes) v.detail += (v.detail.empty() ? "" : "; ") + n;
  return v;
}

}  // namespace

std::string_view to_string(VerdictStatus s) {
  switch (s) {
    case VerdictStatus::Holds: return "HOLDS";
    case VerdictStatus::Fails: return "FAILS";
    case VerdictStatus::Inconclusive: return "INCONCLUSIVE";
  }
  return "?";
}

std::vector<MatrixCell> ExperimentMatrix::cells() const {
  config.validate();
  if (methods.empty() || scales.empty()) fail(ErrorKind::Config, "matrix: methods and scales must not be empty");
  if (io_configs.empty()) fail(ErrorKind::Config, "matrix: io_configs must not be empty");
  if (jobs == 0) fail(ErrorKind::Config, "matrix: jobs must be positive");
  std::vector<MatrixCell> out;
  for (auto scale : scales) {
    if (scale != 4 && scale != 8) fail(ErrorKind::Config, "matrix: scale must be 4 or 8");
    for (auto method : methods) {
      if (!is_learned(method)) {
        out.push_back({{method, IoConfig::ThreeInOneOut, scale}, config.train.seed});
        continue;
      }
      for (auto io : io_configs) out.push_back({{method, io, scale}, config.train.seed});
    }
  }
  std::vector<std::string> names;
  for (const auto& c : out) names.push_back(cell_dir_name(c.job));
  std::sort(names.begin(), names.end());
  if (std::adjacent_find(names.begin(), names.end()) != names.end()) fail(ErrorKind::Config, "matrix: duplicate cells");
  return out;
}

std::string cell_key(const MatrixCell& cell, const RunConfig& config, std::uint64_t dataset_hash) {
  RunConfig c = config;
  c.eval.methods.clear();
  c.eval.scales.clear();
  c.train.seed = cell.seed;
  if (!is_learned(cell.job.method)) {
    // interpolation results depend on data and evaluation settings only
    c.model = {};
    c.train = {};
    c.diffusion = {};
  }
  const std::string text = dump_config(c) + "|" + cell_dir_name(cell.job) + "|" + hash_hex(dataset_hash);
  return hash_hex(fnv1a64(std::as_bytes(std::span(text.data(), text.size()))));
}

MatrixOutcome run_matrix(const ExperimentMatrix& m, std::ostream* progress) {
  const auto cells = m.cells();
  const auto files = read_dataset(m.data_dir);
  const std::uint64_t dhash = dataset_hash(m.data_dir);
  const std::string dataset = hash_hex(dhash);
  fs::create_directories(m.out_dir / "cells");
  write_text(m.out_dir / "matrix.json",
             json{{"dataset_hash", dataset}, {"seed", m.config.train.seed}, {"config", json::parse(dump_config(m.config))}}
                     .dump(2) +
                 "\n");

  std::map<std::size_t, PreparedData> prepared;
  for (auto s : m.scales) prepared.emplace(s, prepare_data(files, s, m.config.eval.max_samples));

  std::vector<CellResult> results(cells.size());
  std::mutex io_mutex;
  auto log = [&](const std::string& line) {
    if (!progress) return;
    std::lock_guard lock(io_mutex);
    *progress << line << std::endl;
  };
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const auto& cell = cells[i];
      const std::string name = cell_dir_name(cell.job);
      const std::string key = cell_key(cell, m.config, dhash);
      const auto stored = read_json(m.out_dir / "cells" / name / "result.json");
      if (stored && stored->value("key", "") == key) {
        results[i] = from_json(*stored);
        results[i].cached = true;
        log("cell " + name + ": cached");
        continue;
      }
      log("cell " + name + ": running");
      try {
        results[i] = run_cell(m, cell, prepared.at(cell.job.scale), key, dataset, m.jobs == 1 ? progress : nullptr);
        log("cell " + name + ": rmse " + fmt(results[i].row.rmse));
      } catch (const std::exception& e) {
        results[i].cell = cell;
        results[i].error = name + ": " + e.what();
        log("cell " + name + ": FAILED: " + e.what());
        fs::remove(m.out_dir / "cells" / name / "result.json");
        write_text(m.out_dir / "cells" / name / "error.txt", std::string(e.what()) + "\n");
      }
    }
  };
  const std::size_t n_threads = std::min(m.jobs, cells.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  auto outcome = summarize_matrix(m.out_dir);
  // keep run-time status (cached flags, failures) of this invocation
  outcome.cells = results;
  outcome.verdicts = compute_verdicts(results);
  outcome.findings = render_findings(outcome);
  write_text(m.out_dir / "findings.md", outcome.findings);
  return outcome;
}

std::vector<Verdict> compute_verdicts(const std::vector<CellResult>& cells) {
  std::vector<Verdict> out;
  const auto scales = scales_of(cells);

  {
    std::vector<bool> checks;
    std::vector<std::string> notes;
    std::map<std::pair<std::string, std::string>, std::map<std::size_t, double>> by_method;
    for (const auto& c : cells) {
      if (c.ok) by_method[{c.row.method, c.row.io_config}][c.row.scale] = c.row.rmse;
    }
    for (const auto& [m, per_scale] : by_method) {
      if (!per_scale.contains(4) || !per_scale.contains(8)) continue;
      const bool ok = per_scale.at(8) > per_scale.at(4);
      checks.push_back(ok);
      if (!ok) notes.push_back(m.first + "/" + m.second + " 8x " + fmt(per_scale.at(8)) + " <= 4x " + fmt(per_scale.at(4)));
    }
    if (!checks.empty() && notes.empty()) notes.push_back(std::to_string(checks.size()) + " method rows compared");
    out.push_back(combine({"a", "every method's 8x RMSE exceeds its 4x RMSE", {}, {}}, checks, notes));
  }
  {
    std::vector<bool> checks;
    std::vector<std::string> notes;
    for (auto s : scales) {
      const auto* one = find_cell(cells, "ddpm", "3in1out", s);
      const auto* three = find_cell(cells, "ddpm", "3in3out", s);
      if (!one || !three) continue;
      checks.push_back(one->row.rmse < three->row.rmse);
      notes.push_back(std::to_string(s) + "x: 3in1out " + fmt(one->row.rmse) + " vs 3in3out " + fmt(three->row.rmse));
    }
    out.push_back(combine({"b", "DDPM 3in1out RMSE is below DDPM 3in3out RMSE", {}, {}}, checks, notes));
  }
  {
    std::vector<bool> checks;
    std::vector<std::string> notes;
    for (auto s : scales) {
      const auto* ddpm = find_cell(cells, "ddpm", "3in1out", s);
      const auto* bic = find_cell(cells, "bicubic", "-", s);
      if (!ddpm || !bic) continue;
      checks.push_back(ddpm->highfreq > bic->highfreq);
      notes.push_back(std::to_string(s) + "x: DDPM " + fmt(ddpm->highfreq) + " vs bicubic " + fmt(bic->highfreq) +
                      " (HR " + fmt(ddpm->highfreq_hr) + ")");
    }
    out.push_back(combine({"c", "DDPM 3in1out outputs have more high-frequency energy than bicubic", {}, {}}, checks,
                          notes));
  }
  {
    std::vector<bool> checks;
    std::vector<std::string> notes;
    for (auto s : scales) {
      const auto* ddpm = find_cell(cells, "ddpm", "3in1out", s);
      if (!ddpm) continue;
      const CellResult* best = nullptr;
      for (const auto& c : cells) {
        if (c.ok && c.row.scale == s && (!best || c.row.rmse < best->row.rmse)) best = &c;
      }
      checks.push_back(best == ddpm);
      notes.push_back(std::to_string(s) + "x: best " + best->row.method + "/" + best->row.io_config + " " +
                      fmt(best->row.rmse));
    }
    out.push_back(combine({"d", "DDPM 3in1out has the lowest RMSE at each scale", {}, {}}, checks, notes));
  }
  return out;
}

std::string render_findings(const MatrixOutcome& o) {
  std::ostringstream s;
  std::size_t ok = 0, cached = 0, failed = 0;
  for (const auto& c : o.cells) {
    if (c.ok) ++ok; else ++failed;
    if (c.cached) ++cached;
  }
  s << "# Findings\n\n";
  s << "Dataset " << (o.report.metadata.dataset_hash.empty() ? "?" : o.report.metadata.dataset_hash) << ", seed "
    << o.report.metadata.seed << ". " << o.cells.size() << " cells: " << ok << " ok (" << cached << " from cache), "
    << failed << " failed.\n";
  s << "RMSE is computed on the PRECT channel in " << o.report.metadata.units << ".\n\n";
  s << "## Results\n\n```\n" << report_table(o.report) << "```\n\n";
  s << "## High-frequency energy (PRECT, mean over test samples)\n\n```\n";
  for (const auto& c : o.cells) {
    if (!c.ok) continue;
    s << c.row.method << " " << c.row.io_config << " " << c.row.scale << "x: " << fmt(c.highfreq) << " (HR "
      << fmt(c.highfreq_hr) << ")\n";
  }
  s << "```\n\n## Verdicts\n\n";
  for (const auto& v : o.verdicts) {
    s << "- [" << v.id << "] " << to_string(v.status) << ": " << v.claim;
    if (!v.detail.empty()) s << " (" << v.detail << ")";
    s << "\n";
  }
  if (failed) {
    s << "\n## Failed cells\n\n";
    for (const auto& c : o.cells) {
      if (!c.ok) s << "- " << c.error << "\n";
    }
  }
  return s.str();
}

MatrixOutcome summarize_matrix(const fs::path& out_dir) {
  const fs::path cells_dir = out_dir / "cells";
  if (!fs::is_directory(cells_dir)) fail(ErrorKind::Io, "no matrix results under " + out_dir.string());
  MatrixOutcome o;
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(cells_dir)) {
    if (e.is_directory()) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  ReportMetadata meta;
  if (const auto mj = read_json(out_dir / "matrix.json")) {
    meta.dataset_hash = mj->value("dataset_hash", "");
    meta.seed = mj->value("seed", std::uint64_t{0});
  }
  std::vector<ReportRow> rows;
  for (const auto& d : dirs) {
    if (const auto j = read_json(d / "result.json")) {
      auto r = from_json(*j);
      r.cached = true;
      rows.push_back(r.row);
      o.cells.push_back(std::move(r));
    } else if (fs::exists(d / "error.txt")) {
      CellResult r;
      std::ifstream in(d / "error.txt");
      std::getline(in, r.error);
      r.error = d.filename().string() + ": " + r.error;
      o.cells.push_back(std::move(r));
    }
  }
  if (rows.empty()) fail(ErrorKind::Io, "no completed matrix cells under " + out_dir.string());
  o.report = build_report(std::move(rows), meta);
  o.verdicts = compute_verdicts(o.cells);
  o.findings = render_findings(o);
  write_text(out_dir / "report.csv", report_csv(o.report));
  write_text(out_dir / "report.txt", report_table(o.report));
  write_text(out_dir / "findings.md", o.findings);
  return o;
}

}  // namespace climdiff
