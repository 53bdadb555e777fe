#include "cli.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "climdiff/config.hpp"
#include "climdiff/error.hpp"
#include "climdiff/eval.hpp"
#include "climdiff/experiments.hpp"
#include "climdiff/gradsuite.hpp"
#include "climdiff/workflow.hpp"
#include "json.hpp"

namespace climdiff::cli {

namespace fs = std::filesystem;

namespace {

// Reduced matrix budget (--quick).
constexpr std::size_t kQuickIters = 500;
constexpr std::size_t kQuickTestSamples = 16;

struct Globals {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::string out = "run";
};

// Overrides shared by the training-related subcommands; unset means "keep
// the config value".
struct Overrides {
  std::optional<std::size_t> timesteps, steps, batch_size, checkpoint_every, max_samples, samples;
  std::optional<double> lr;
  std::optional<std::size_t> width;

  void apply(RunConfig& c) const {
    if (timesteps) c.diffusion.timesteps = *timesteps;
    if (steps) c.train.iters = *steps;
    if (batch_size) c.train.batch_size = *batch_size;
    if (checkpoint_every) c.train.checkpoint_every = *checkpoint_every;
    if (max_samples) c.eval.max_samples = *max_samples;
    if (samples) c.data.n_samples = *samples;
    if (lr) c.train.lr = *lr;
    if (width) c.model.base_width = *width;
  }
};

template <class T>
std::string str(const T& v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (const auto& x : v) out += (out.empty() ? "" : ",") + str(x);
  return out;
}

void add_timesteps(CLI::App* cmd, Overrides& o, const RunConfig& d) {
  cmd->add_option("--timesteps", o.timesteps, "Diffusion steps T")->default_str(str(d.diffusion.timesteps));
}

void add_training(CLI::App* cmd, Overrides& o, const RunConfig& d) {
  cmd->add_option("--steps", o.steps, "Training iterations")->default_str(str(d.train.iters));
  cmd->add_option("--batch-size", o.batch_size, "Samples per iteration")->default_str(str(d.train.batch_size));
  cmd->add_option("--lr", o.lr, "Initial learning rate (cosine annealed)")->default_str(str(d.train.lr));
  cmd->add_option("--width", o.width, "U-Net base width")->default_str(str(d.model.base_width));
  cmd->add_option("--checkpoint-every", o.checkpoint_every, "Checkpoint interval in iterations")
      ->default_str(str(d.train.checkpoint_every));
}

RunConfig resolve_config(const Globals& g, const Overrides& o) {
  RunConfig c = g.config ? load_config(*g.config) : RunConfig{};
  if (g.seed) {
    c.data.seed = *g.seed;
    c.train.seed = *g.seed;
  }
  o.apply(c);
  c.validate();
  return c;
}

struct Layout {
  fs::path root;
  fs::path data() const { return root / "data"; }
  fs::path checkpoint(const TrainJob& j) const { return root / "ckpt" / (job_name(j) + ".ckpt"); }
  fs::path loss_log(const TrainJob& j) const { return root / "logs" / (job_name(j) + "_loss.csv"); }
  fs::path samples() const { return root / "samples"; }
  fs::path eval() const { return root / "eval"; }
  fs::path matrix() const { return root / "matrix"; }
};

DatasetFiles load_dataset(const Layout& layout) {
  if (!fs::exists(layout.data() / "train.cgf")) {
    fail(ErrorKind::Io, "no dataset under " + layout.data().string() + " (run gen-data first)");
  }
  return read_dataset(layout.data());
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::trunc);
  if (!f) fail(ErrorKind::Io, "cannot write " + path.string());
  f << text;
}

std::string utc_timestamp() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

int cmd_gen_data(const RunConfig& cfg, const Layout& layout, std::ostream& out) {
  const auto summary = generate_dataset(cfg, layout.data());
  out << "dataset " << hash_hex(summary.hash) << "\n"
      << "train " << summary.counts.train << "  val " << summary.counts.val << "  test " << summary.counts.test
      << "  (" << cfg.data.h << "x" << cfg.data.w << ", seed " << cfg.data.seed << ") -> " << layout.data().string()
      << "\n";
  return kOk;
}

int cmd_train(const RunConfig& cfg, const Layout& layout, const TrainJob& job, bool resume, std::ostream& out) {
  if (!is_learned(job.method)) fail(ErrorKind::Usage, "train: --method must be ddpm, unet or srresnet");
  const auto data = prepare_data(load_dataset(layout), job.scale, 1);
  const TrainPaths paths{layout.checkpoint(job), layout.loss_log(job)};
  const auto outcome = train_model(cfg, job, data, paths, resume, &out);
  out << job_name(job) << ": iterations " << outcome.start_iter << ".." << outcome.end_iter;
  if (!outcome.losses.empty()) out << ", final loss " << outcome.losses.back();
  out << "\ncheckpoint " << paths.checkpoint.string() << "\nloss log " << paths.loss_log.string() << "\n";
  return kOk;
}

int cmd_sample(const RunConfig& cfg, const Layout& layout, const TrainJob& job,
               const std::optional<std::string>& input, std::size_t count,
               const std::optional<std::string>& checkpoint, const std::optional<std::string>& output,
               std::ostream& out) {
  const auto files = load_dataset(layout);
  PreparedData data;
  data.stats = files.stats;
  data.scale = job.scale;
  std::vector<Field> lr;
  if (input) {
    for (const auto& f : read_fields(*input)) {
      if (f.channels() != default_channels()) {
        fail(ErrorKind::Shape, "sample: input fields must carry channels TS, PRECT, dPHIS in that order");
      }
      lr.push_back(normalize(f, files.stats));
    }
  } else {
    const auto prepared = prepare_data(files, job.scale, count);
    lr = prepared.test.lr;
  }
  if (count > 0 && lr.size() > count) lr.resize(count);
  if (lr.empty()) fail(ErrorKind::Usage, "sample: no input samples");

  std::optional<fs::path> ckpt;
  if (is_learned(job.method)) ckpt = checkpoint ? fs::path(*checkpoint) : layout.checkpoint(job);
  const auto pred = downscale(cfg, job, data, lr, ckpt, cfg.train.seed, 0, &out);

  const fs::path dest = output ? fs::path(*output) : layout.samples() / (job_name(job) + ".cgf");
  if (dest.has_parent_path()) fs::create_directories(dest.parent_path());
  write_fields(dest, pred);
  const std::string stem = (dest.parent_path() / dest.stem()).string();
  for (std::size_t i = 0; i < pred.size(); ++i) {
    render_map(pred[i], kEvalChannel, stem + "_" + std::to_string(i) + ".pgm");
  }
  out << "wrote " << pred.size() << " samples (" << pred.front().height() << "x" << pred.front().width() << ", "
      << join(pred.front().channels()) << ") to " << dest.string() << "\n";
  return kOk;
}

int cmd_evaluate(const RunConfig& cfg, const Layout& layout, const std::vector<IoConfig>& ios, std::ostream& out) {
  const auto files = load_dataset(layout);
  const auto hash = hash_hex(dataset_hash(layout.data()));
  std::vector<ReportRow> rows;
  for (auto scale : cfg.eval.scales) {
    const auto data = prepare_data(files, scale, cfg.eval.max_samples);
    for (const auto& name : cfg.eval.methods) {
      const Method m = parse_method(name);
      const std::vector<IoConfig> variants = is_learned(m) ? ios : std::vector<IoConfig>{IoConfig::ThreeInOneOut};
      for (auto io : variants) {
        const TrainJob job{m, io, scale};
        std::optional<fs::path> ckpt;
        if (is_learned(m)) {
          ckpt = layout.checkpoint(job);
          if (!fs::exists(*ckpt)) fail(ErrorKind::Io, "missing checkpoint for " + job_name(job) + ": " + ckpt->string());
        }
        rows.push_back(evaluate_method(cfg, job, data, ckpt, cfg.train.seed).row);
      }
    }
  }
  ReportMetadata meta;
  meta.seed = cfg.train.seed;
  meta.dataset_hash = hash;
  meta.timestamp = utc_timestamp();
  const auto report = build_report(std::move(rows), meta);
  write_file(layout.eval() / "report.csv", report_csv(report));
  write_file(layout.eval() / "report.txt", report_table(report));
  const nlohmann::json j{{"seed", meta.seed},
                         {"dataset_hash", meta.dataset_hash},
                         {"timestamp", meta.timestamp},
                         {"units", meta.units},
                         {"channel", std::string(kEvalChannel)},
                         {"rmse", cfg.eval.per_sample_rmse ? "per-sample mean" : "pooled"}};
  write_file(layout.eval() / "report.json", j.dump(2) + "\n");
  out << report_table(report);
  return kOk;
}

int cmd_report(const fs::path& dir, std::ostream& out) {
  const auto outcome = summarize_matrix(dir);
  out << outcome.findings;
  return kOk;
}

int cmd_check_grad(double tolerance, std::uint64_t seed, std::ostream& out) {
  bool ok = true;
  for (const auto& c : run_gradient_suite(seed)) {
    const bool pass = c.max_rel_error < tolerance;
    ok = ok && pass;
    out << (pass ? "PASS " : "FAIL ") << std::left << std::setw(28) << c.name << " max rel error "
        << std::scientific << std::setprecision(3) << c.max_rel_error << std::defaultfloat << "\n";
  }
  if (!ok) fail(ErrorKind::Range, "gradient check exceeded tolerance " + str(tolerance));
  return kOk;
}

int cmd_matrix(const RunConfig& cfg, const Layout& layout, const std::vector<Method>& methods,
               const std::vector<IoConfig>& ios, const std::vector<std::size_t>& scales, std::size_t jobs,
               std::ostream& out) {
  ExperimentMatrix m;
  m.config = cfg;
  m.methods = methods;
  m.io_configs = ios;
  m.scales = scales;
  m.jobs = jobs;
  m.data_dir = layout.data();
  m.out_dir = layout.matrix();
  load_dataset(layout);  // fail early with a clear message
  const auto outcome = run_matrix(m, &out);
  out << outcome.findings;
  return kOk;
}

std::vector<IoConfig> parse_ios(const std::vector<std::string>& v) {
  std::vector<IoConfig> out;
  for (const auto& s : v) out.push_back(parse_io_config(s));
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const RunConfig d;
  CLI::App app{"Conditional diffusion downscaling of synthetic climate fields", "climdiff"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config, "JSON config file; flags override it")->default_str("built-in defaults");
  app.add_option("--seed", g.seed, "Seed for data generation, training and sampling")->default_str(str(d.train.seed));
  app.add_option("--out", g.out, "Output directory")->default_str(g.out);

  Overrides o;
  std::string method = "ddpm", io = "3in1out";
  std::optional<std::size_t> scale;
  bool resume = false;

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic dataset and its statistics");
  gen->add_option("--samples", o.samples, "Number of samples before splitting")->default_str(str(d.data.n_samples));

  auto* train = app.add_subcommand("train", "Train a learned method");
  train->add_option("--method", method, "ddpm, unet or srresnet")->default_str(method);
  train->add_option("--io", io, "3in1out or 3in3out")->default_str(io);
  train->add_option("--scale", scale, "Downscaling factor, 4 or 8")->default_str(str(d.data.scale));
  add_timesteps(train, o, d);
  add_training(train, o, d);
  train->add_flag("--resume", resume, "Continue from the existing checkpoint")->default_str("false");

  auto* samp = app.add_subcommand("sample", "Downscale LR inputs with a trained model or interpolation");
  std::optional<std::string> input, checkpoint, output;
  std::size_t count = 2;
  samp->add_option("--method", method, "ddpm, unet, srresnet, bilinear or bicubic")->default_str(method);
  samp->add_option("--io", io, "3in1out or 3in3out")->default_str(io);
  samp->add_option("--scale", scale, "Downscaling factor, 4 or 8")->default_str(str(d.data.scale));
  samp->add_option("--input", input, "FieldFile of LR fields in data units")->default_str("test split");
  samp->add_option("--count", count, "Samples to downscale, 0 for all")->default_str(str(count));
  samp->add_option("--checkpoint", checkpoint, "Model checkpoint")->default_str("<out>/ckpt/<method>_<io>_x<scale>.ckpt");
  samp->add_option("--output", output, "Output FieldFile")->default_str("<out>/samples/<method>_<io>_x<scale>.cgf");
  add_timesteps(samp, o, d);
  add_training(samp, o, d);

  auto* evaluate = app.add_subcommand("evaluate", "Score methods on the test split");
  std::vector<std::string> methods, ios;
  std::vector<std::size_t> scales;
  bool per_sample = false;
  evaluate->add_option("--method", methods, "Methods to score (repeatable)")->default_str(join(d.eval.methods));
  evaluate->add_option("--io", ios, "I/O configs of learned methods (repeatable)")->default_str("3in1out");
  evaluate->add_option("--scale", scales, "Scales to score (repeatable)")->default_str(join(d.eval.scales));
  evaluate->add_option("--max-samples", o.max_samples, "Use the first N test samples, 0 for all")
      ->default_str(str(d.eval.max_samples));
  evaluate->add_flag("--per-sample", per_sample, "Average per-sample RMSE instead of pooling")->default_str("false");
  add_timesteps(evaluate, o, d);
  add_training(evaluate, o, d);

  auto* report = app.add_subcommand("report", "Summarise a matrix run into findings.md and a consolidated CSV");
  std::optional<std::string> matrix_dir;
  report->add_option("--matrix", matrix_dir, "Matrix output directory")->default_str("<out>/matrix");

  auto* check = app.add_subcommand("check-grad", "Finite-difference gradient checks of every layer type");
  double tolerance = 1e-6;
  check->add_option("--tolerance", tolerance, "Maximum relative error")->default_str(str(tolerance));

  auto* matrix = app.add_subcommand("matrix", "Train and evaluate every method x io x scale cell");
  std::size_t jobs = 1;
  bool quick = false;
  matrix->add_option("--method", methods, "Methods (repeatable)")->default_str("bilinear,bicubic,unet,srresnet,ddpm");
  matrix->add_option("--io", ios, "I/O configs (repeatable)")->default_str("3in3out,3in1out");
  matrix->add_option("--scale", scales, "Scales (repeatable)")->default_str("4,8");
  matrix->add_option("--jobs", jobs, "Cells run concurrently")->default_str(str(jobs));
  matrix->add_flag("--quick", quick,
                   "Reduced budget: " + str(kQuickIters) + " iterations, " + str(kQuickTestSamples) + " test samples")
      ->default_str("false");
  matrix->add_option("--max-samples", o.max_samples, "Use the first N test samples, 0 for all")
      ->default_str(str(d.eval.max_samples));
  add_timesteps(matrix, o, d);
  add_training(matrix, o, d);

  std::vector<std::string> argv_store{"climdiff"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error[usage]: " << e.what() << "\n";
    return kUsage;
  }

  try {
    const Layout layout{g.out};
    if (quick) {
      if (!o.steps) o.steps = kQuickIters;
      if (!o.max_samples) o.max_samples = kQuickTestSamples;
    }
    RunConfig cfg = resolve_config(g, o);
    if (per_sample) cfg.eval.per_sample_rmse = true;
    if (gen->parsed()) return cmd_gen_data(cfg, layout, out);
    const std::size_t s = scale.value_or(cfg.data.scale);
    const TrainJob job{parse_method(method), parse_io_config(io), s};
    if (train->parsed()) return cmd_train(cfg, layout, job, resume, out);
    if (samp->parsed()) return cmd_sample(cfg, layout, job, input, count, checkpoint, output, out);
    if (evaluate->parsed()) {
      if (!methods.empty()) cfg.eval.methods = methods;
      if (!scales.empty()) cfg.eval.scales = scales;
      cfg.validate();
      return cmd_evaluate(cfg, layout, ios.empty() ? std::vector<IoConfig>{IoConfig::ThreeInOneOut} : parse_ios(ios),
                          out);
    }
    if (report->parsed()) return cmd_report(matrix_dir ? fs::path(*matrix_dir) : layout.matrix(), out);
    if (check->parsed()) return cmd_check_grad(tolerance, cfg.train.seed, out);
    if (matrix->parsed()) {
      std::vector<Method> ms;
      for (const auto& m : methods.empty() ? std::vector<std::string>{"bilinear", "bicubic", "unet", "srresnet", "ddpm"}
                                           : methods) {
        ms.push_back(parse_method(m));
      }
      return cmd_matrix(cfg, layout, ms,
                        ios.empty() ? std::vector<IoConfig>{IoConfig::ThreeInThreeOut, IoConfig::ThreeInOneOut}
                                    : parse_ios(ios),
                        scales.empty() ? std::vector<std::size_t>{4, 8} : scales, jobs, out);
    }
    err << "error[usage]: no subcommand\n";
    return kUsage;
  } catch (const Error& e) {
    err << "error[" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return e.kind() == ErrorKind::Usage ? kUsage : kRuntime;
  } catch (const std::exception& e) {
    err << "error[runtime]: " << e.what() << "\n";
    return kRuntime;
  }
}

}  // namespace climdiff::cli
