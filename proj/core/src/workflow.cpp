#include "climdiff/workflow.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <memory>
#include <ostream>
#include <sstream>

#include "climdiff/baselines.hpp"
#include "climdiff/diffusion.hpp"
#include "climdiff/error.hpp"
#include "climdiff/nn/checkpoint.hpp"

namespace climdiff {

namespace fs = std::filesystem;

std::string_view to_string(Method m) {
  switch (m) {
    case Method::Bilinear: return "bilinear";
    case Method::Bicubic: return "bicubic";
    case Method::UNet: return "unet";
    case Method::SRResNet: return "srresnet";
    case Method::DDPM: return "ddpm";
  }
  return "?";
}

Method parse_method(std::string_view text) {
  if (text == "bilinear") return Method::Bilinear;
  if (text == "bicubic") return Method::Bicubic;
  if (text == "unet") return Method::UNet;
  if (text == "srresnet") return Method::SRResNet;
  if (text == "ddpm") return Method::DDPM;
  fail(ErrorKind::Usage, "unknown method '" + std::string(text) + "' (bilinear, bicubic, unet, srresnet, ddpm)");
}

std::vector<std::string> model_targets(IoConfig io) {
  return target_channels(channel_roles(default_channels(), io));
}

namespace {

constexpr std::size_t kChunk = 8;

PreparedSplit prepare_split(const std::vector<Field>& raw, const NormStats& stats, std::size_t scale,
                            std::size_t limit) {
  PreparedSplit s;
  const std::size_t n = limit ? std::min(limit, raw.size()) : raw.size();
  for (std::size_t i = 0; i < n; ++i) {
    Field hr = normalize(raw[i], stats);
    Field lr = degrade(hr, scale);
    s.lr_up.push_back(upsample_condition(lr, scale));
    s.lr.push_back(std::move(lr));
    s.hr.push_back(std::move(hr));
    s.hr_raw.push_back(raw[i]);
  }
  return s;
}

struct LearnedModel {
  std::unique_ptr<Denoiser<float>> ddpm;
  std::unique_ptr<RegressionModel> regression;

  nn::ParamList<float> parameters() const { return ddpm ? ddpm->parameters() : regression->parameters(); }
};

LearnedModel build_model(const RunConfig& cfg, const TrainJob& job) {
  const std::size_t targets = model_targets(job.io).size();
  LearnedModel m;
  if (job.method == Method::DDPM) {
    DenoiserConfig d;
    d.cond_channels = cfg.model.cond_channels;
    d.target_channels = targets;
    d.base_width = cfg.model.base_width;
    d.level_multipliers = cfg.model.level_multipliers;
    d.blocks_per_level = cfg.model.blocks_per_level;
    m.ddpm = std::make_unique<Denoiser<float>>(build_denoiser<float>(d, cfg.train.seed));
  } else if (job.method == Method::UNet || job.method == Method::SRResNet) {
    RegressionConfig r;
    r.kind = job.method == Method::UNet ? BaselineKind::RegressionUNet : BaselineKind::SRResNetLike;
    r.cond_channels = cfg.model.cond_channels;
    r.target_channels = targets;
    r.scale = job.scale;
    r.base_width = cfg.model.base_width;
    r.level_multipliers = cfg.model.level_multipliers;
    r.blocks_per_level = cfg.model.blocks_per_level;
    r.srresnet_width = cfg.model.srresnet_width;
    r.srresnet_blocks = cfg.model.srresnet_blocks;
    m.regression = std::make_unique<RegressionModel>(r, cfg.train.seed);
  } else {
    fail(ErrorKind::Usage, std::string(to_string(job.method)) + " has no trainable model");
  }
  return m;
}

// Architecture fingerprint stored in every checkpoint, so a checkpoint is
// never silently loaded into a differently shaped model.
nn::NamedArray arch_signature(const RunConfig& cfg, const TrainJob& job) {
  std::vector<float> v{static_cast<float>(job.method),
                       static_cast<float>(cfg.model.cond_channels),
                       static_cast<float>(model_targets(job.io).size()),
                       static_cast<float>(job.scale)};
  if (job.method == Method::SRResNet) {
    v.push_back(static_cast<float>(cfg.model.srresnet_width));
    v.push_back(static_cast<float>(cfg.model.srresnet_blocks));
  } else {
    v.push_back(static_cast<float>(cfg.model.base_width));
    v.push_back(static_cast<float>(cfg.model.blocks_per_level));
    for (auto m : cfg.model.level_multipliers) v.push_back(static_cast<float>(m));
  }
  if (job.method == Method::DDPM) v.push_back(static_cast<float>(cfg.diffusion.timesteps));
  return {"meta.arch", {static_cast<std::uint32_t>(v.size())}, std::move(v)};
}

std::string describe(const nn::NamedArray& sig) {
  std::string out;
  for (float f : sig.values) out += (out.empty() ? "" : ",") + std::to_string(static_cast<long long>(f));
  return "[" + out + "]";
}

std::vector<nn::NamedArray> read_compatible(const fs::path& path, const RunConfig& cfg, const TrainJob& job) {
  auto arrays = nn::read_checkpoint(path);
  const auto expected = arch_signature(cfg, job);
  const auto* sig = nn::find_array(arrays, expected.name);
  if (!sig) fail(ErrorKind::Format, path.string() + " has no architecture record");
  if (!(*sig == expected)) {
    fail(ErrorKind::Config, "checkpoint " + path.string() + " was written for architecture " + describe(*sig) +
                                ", config expects " + describe(expected) + " (method,cond,targets,scale,...)");
  }
  return arrays;
}

float scalar(std::span<const nn::NamedArray> arrays, const std::string& name, const fs::path& path) {
  const auto* a = nn::find_array(arrays, name);
  if (!a || a->values.size() != 1) fail(ErrorKind::Format, path.string() + ": missing scalar '" + name + "'");
  return a->values[0];
}

void save_training_state(const fs::path& path, const RunConfig& cfg, const TrainJob& job,
                         const nn::ParamList<float>& params, const nn::AdamState<float>& adam, std::int64_t iter) {
  std::vector<nn::NamedArray> arrays{arch_signature(cfg, job)};
  auto model = nn::to_arrays(params, "model.");
  arrays.insert(arrays.end(), model.begin(), model.end());
  for (std::size_t i = 0; i < params.size(); ++i) {
    arrays.push_back(nn::to_array("optim.m." + params[i].name, adam.m[i]));
    arrays.push_back(nn::to_array("optim.v." + params[i].name, adam.v[i]));
  }
  arrays.push_back({"optim.step", {1}, {static_cast<float>(adam.step)}});
  arrays.push_back({"train.iter", {1}, {static_cast<float>(iter)}});
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  // write-then-rename keeps the previous checkpoint intact if we die mid-write
  const fs::path tmp = path.string() + ".tmp";
  nn::write_checkpoint(tmp, arrays);
  fs::rename(tmp, path);
}

std::int64_t restore_training_state(const fs::path& path, const RunConfig& cfg, const TrainJob& job,
                                    nn::ParamList<float>& params, nn::AdamState<float>& adam) {
  const auto arrays = read_compatible(path, cfg, job);
  nn::load_into(params, arrays, "model.");
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (auto* buf : {&adam.m[i], &adam.v[i]}) {
      const std::string name = (buf == &adam.m[i] ? "optim.m." : "optim.v.") + params[i].name;
      const auto* a = nn::find_array(arrays, name);
      if (!a) fail(ErrorKind::Format, path.string() + ": missing optimiser state '" + name + "'");
      auto t = nn::to_tensor(*a);
      if (t.shape() != buf->shape()) fail(ErrorKind::Format, path.string() + ": shape mismatch for '" + name + "'");
      *buf = std::move(t);
    }
  }
  adam.step = static_cast<std::int64_t>(scalar(arrays, "optim.step", path));
  return static_cast<std::int64_t>(scalar(arrays, "train.iter", path));
}

// Keeps the log rows of iterations before `iter`, so a resumed run appends
// exactly where the checkpoint left off.
void truncate_loss_log(const fs::path& path, std::int64_t iter) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot read loss log " + path.string());
  std::string line, kept;
  std::getline(in, line);
  kept = line + "\n";
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (std::stoll(line.substr(0, line.find(','))) < iter) kept += line + "\n";
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  out << kept;
}

std::string format_loss_row(std::int64_t iter, double loss, double lr) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g\n", static_cast<long long>(iter), loss, lr);
  return buf;
}

}  // namespace

PreparedData prepare_data(const DatasetFiles& files, std::size_t scale, std::size_t max_test) {
  if (files.train.empty()) fail(ErrorKind::Config, "dataset has no training samples");
  PreparedData d;
  d.stats = files.stats;
  d.scale = scale;
  d.train = prepare_split(files.train, d.stats, scale, 0);
  d.val = prepare_split(files.val, d.stats, scale, 0);
  d.test = prepare_split(files.test, d.stats, scale, max_test);
  return d;
}

std::string hash_hex(std::uint64_t hash) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

DatasetSummary generate_dataset(const RunConfig& config, const fs::path& dir) {
  config.validate();
  const auto spec = config.synthetic_spec();
  auto fields = generate_fields(spec);
  const auto counts = split_counts(fields.size(), config.data.split_ratios);
  DatasetFiles files;
  auto it = std::make_move_iterator(fields.begin());
  files.train.assign(it, it + static_cast<std::ptrdiff_t>(counts.train));
  files.val.assign(it + static_cast<std::ptrdiff_t>(counts.train),
                   it + static_cast<std::ptrdiff_t>(counts.train + counts.val));
  files.test.assign(it + static_cast<std::ptrdiff_t>(counts.train + counts.val), std::make_move_iterator(fields.end()));
  files.stats = compute_norm_stats(files.train);
  const auto hash = write_dataset(dir, files, generate_topography(spec));
  return {counts, hash};
}

std::string job_name(const TrainJob& job) {
  return std::string(to_string(job.method)) + "_" + std::string(to_string(job.io)) + "_x" + std::to_string(job.scale);
}

TrainOutcome train_model(const RunConfig& cfg, const TrainJob& job, const PreparedData& data, const TrainPaths& paths,
                         bool resume, std::ostream* progress) {
  cfg.validate();
  if (!is_learned(job.method)) fail(ErrorKind::Usage, std::string(to_string(job.method)) + " needs no training");
  if (data.scale != job.scale) fail(ErrorKind::Config, "prepared data scale differs from the job scale");
  if (data.train.lr.front().num_channels() != cfg.model.cond_channels) {
    fail(ErrorKind::Config, "dataset has " + std::to_string(data.train.lr.front().num_channels()) +
                                " channels, model.cond_channels is " + std::to_string(cfg.model.cond_channels));
  }
  const auto targets = model_targets(job.io);
  const auto iters = static_cast<std::int64_t>(cfg.train.iters);
  const nn::CosineLr lr{cfg.train.lr, std::max<std::int64_t>(iters, 1)};
  const auto schedule = linear_schedule(cfg.schedule_params());

  auto model = build_model(cfg, job);
  std::unique_ptr<DiffusionTrainer> ddpm;
  std::unique_ptr<RegressionTrainer> regression;
  nn::ParamList<float>* params;
  nn::AdamState<float>* adam;
  if (model.ddpm) {
    ddpm = std::make_unique<DiffusionTrainer>(*model.ddpm, schedule, lr);
    params = &ddpm->parameters();
    adam = &ddpm->adam_state();
  } else {
    regression = std::make_unique<RegressionTrainer>(*model.regression, lr);
    params = &regression->parameters();
    adam = &regression->adam_state();
  }

  TrainOutcome out;
  if (resume) {
    if (!fs::exists(paths.checkpoint)) fail(ErrorKind::Io, "no checkpoint to resume from at " + paths.checkpoint.string());
    out.start_iter = restore_training_state(paths.checkpoint, cfg, job, *params, *adam);
    if (out.start_iter > iters) {
      fail(ErrorKind::Config, "checkpoint is at iteration " + std::to_string(out.start_iter) + ", beyond train.iters");
    }
    if (ddpm) ddpm->set_iteration(out.start_iter); else regression->set_iteration(out.start_iter);
    truncate_loss_log(paths.loss_log, out.start_iter);
  } else {
    if (paths.loss_log.has_parent_path()) fs::create_directories(paths.loss_log.parent_path());
    std::ofstream(paths.loss_log, std::ios::trunc) << "iter,loss,lr\n";
  }
  std::ofstream log(paths.loss_log, std::ios::app);
  if (!log) fail(ErrorKind::Io, "cannot write loss log " + paths.loss_log.string());

  const auto& train = data.train;
  const std::size_t batch = cfg.train.batch_size;
  const std::size_t every = cfg.train.checkpoint_every;
  for (std::int64_t it = out.start_iter; it < iters; ++it) {
    Rng rng(cfg.train.seed, streams::kTrain, static_cast<std::uint64_t>(it));
    double loss;
    if (ddpm) {
      TrainBatch b;
      for (std::size_t k = 0; k < batch; ++k) {
        const auto i = static_cast<std::size_t>(rng.uniform_int(train.size()));
        b.lr_cond.push_back(train.lr_up[i]);
        b.hr_target.push_back(train.hr[i].select(targets));
        b.t.push_back(static_cast<int>(rng.uniform_int(schedule.timesteps())));
        b.eps.push_back(gaussian_field(targets, train.hr[i].height(), train.hr[i].width(), rng));
      }
      loss = ddpm->train_step(b);
    } else {
      std::vector<Field> x, y;
      for (std::size_t k = 0; k < batch; ++k) {
        const auto i = static_cast<std::size_t>(rng.uniform_int(train.size()));
        x.push_back(train.lr[i]);
        y.push_back(train.hr[i].select(targets));
      }
      loss = regression->train_step(x, y);
    }
    out.losses.push_back(loss);
    log << format_loss_row(it, loss, lr(it));
    const std::int64_t done = it + 1;
    if ((every > 0 && done % static_cast<std::int64_t>(every) == 0) || done == iters) {
      log.flush();
      save_training_state(paths.checkpoint, cfg, job, *params, *adam, done);
    }
    if (progress && (done % 100 == 0 || done == iters)) {
      *progress << job_name(job) << " iter " << done << "/" << iters << " loss " << loss << std::endl;
    }
  }
  if (out.start_iter == iters) save_training_state(paths.checkpoint, cfg, job, *params, *adam, iters);
  out.end_iter = iters;
  return out;
}

std::vector<Field> downscale(const RunConfig& cfg, const TrainJob& job, const PreparedData& data,
                             std::span<const Field> lr, const std::optional<fs::path>& checkpoint, std::uint64_t seed,
                             std::uint64_t first_chain, std::ostream* progress) {
  if (!is_learned(job.method)) {
    const auto kind = job.method == Method::Bilinear ? BaselineKind::Bilinear : BaselineKind::Bicubic;
    std::vector<Field> out;
    out.reserve(lr.size());
    for (const auto& f : lr) out.push_back(denormalize(interpolate(kind, f, job.scale), data.stats));
    return out;
  }
  if (!checkpoint) fail(ErrorKind::Usage, job_name(job) + " needs a trained checkpoint");
  if (!fs::exists(*checkpoint)) fail(ErrorKind::Io, "missing checkpoint " + checkpoint->string());
  auto model = build_model(cfg, job);
  auto params = model.parameters();
  nn::load_into(params, read_compatible(*checkpoint, cfg, job), "model.");

  const auto targets = model_targets(job.io);
  const auto schedule = linear_schedule(cfg.schedule_params());
  std::vector<Field> out;
  out.reserve(lr.size());
  for (std::size_t start = 0; start < lr.size(); start += kChunk) {
    const auto chunk = lr.subspan(start, std::min(kChunk, lr.size() - start));
    std::vector<Field> pred;
    if (model.ddpm) {
      DenoiserPredictor predictor(*model.ddpm);
      SampleRequest req{targets, job.scale, seed, first_chain + start, 1.0};
      pred = sample(predictor, chunk, schedule, req);
    } else {
      pred = model.regression->predict(chunk, targets);
    }
    for (auto& f : pred) out.push_back(denormalize(f, data.stats));
    if (progress && model.ddpm) {
      *progress << job_name(job) << " sampled " << out.size() << "/" << lr.size() << std::endl;
    }
  }
  return out;
}

MethodEvaluation evaluate_method(const RunConfig& cfg, const TrainJob& job, const PreparedData& data,
                                 const std::optional<fs::path>& checkpoint, std::uint64_t seed,
                                 std::ostream* progress) {
  if (data.test.size() == 0) fail(ErrorKind::Config, "test split is empty");
  MethodEvaluation ev;
  ev.predictions = downscale(cfg, job, data, data.test.lr, checkpoint, seed, 0, progress);
  const std::vector<std::string> channel{std::string(kEvalChannel)};
  ev.row.method = std::string(to_string(job.method));
  ev.row.io_config = is_learned(job.method) ? std::string(to_string(job.io)) : "-";
  ev.row.scale = job.scale;
  ev.row.n = ev.predictions.size();
  ev.row.rmse = cfg.eval.per_sample_rmse ? rmse_per_sample(ev.predictions, data.test.hr_raw, channel)
                                         : rmse(ev.predictions, data.test.hr_raw, channel);
  return ev;
}

}  // namespace climdiff
