#include "climdiff/datagen.hpp"

#include <fftw3.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numbers>

#include <json.hpp>

#include "climdiff/error.hpp"
#include "climdiff/resample.hpp"

namespace climdiff {

namespace {

/// Signed frequency index for FFT bin i of an n-point transform.
double signed_freq(std::size_t i, std::size_t n) {
  return i <= n / 2 ? static_cast<double>(i) : static_cast<double>(i) - static_cast<double>(n);
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

}  // namespace

GaussianRandomField::GaussianRandomField(std::size_t height, std::size_t width, double correlation_length,
                                         double spectrum_exponent)
    : h_(height), w_(width), exponent_(spectrum_exponent) {
  if (h_ == 0 || w_ == 0) fail(ErrorKind::Config, "grf: dims must be positive");
  if (!(correlation_length > 0.0)) fail(ErrorKind::Config, "grf: correlation_length must be positive");
  if (!(spectrum_exponent > 0.0)) fail(ErrorKind::Config, "grf: spectrum_exponent must be positive");
  const double target = std::exp(-1.0);
  // correlation at a fixed lag increases monotonically with the spectral scale
  double lo = std::log(1e-4), hi = std::log(1e4);
  if (correlation_for_scale(std::exp(hi), correlation_length) < target) {
    fail(ErrorKind::Config, "grf: correlation length too long for the grid");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (correlation_for_scale(std::exp(mid), correlation_length) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  scale_ = std::exp(0.5 * (lo + hi));
  amplitude_ = amplitude_for_scale(scale_);
}

std::vector<double> GaussianRandomField::amplitude_for_scale(double scale) const {
  const std::size_t wc = w_ / 2 + 1;
  std::vector<double> power(h_ * wc);
  // normalise so the mean of the spectrum over the full (Hermitian) grid is 1
  double total = 0.0;
  for (std::size_t y = 0; y < h_; ++y) {
    const double ky = 2.0 * std::numbers::pi * signed_freq(y, h_) / static_cast<double>(h_);
    for (std::size_t x = 0; x < w_; ++x) {
      const double kx = 2.0 * std::numbers::pi * signed_freq(x, w_) / static_cast<double>(w_);
      const double p = std::pow(1.0 + (kx * kx + ky * ky) * scale * scale, -exponent_);
      total += p;
      if (x < wc) power[y * wc + x] = p;
    }
  }
  const double norm = static_cast<double>(h_ * w_) / total;
  for (auto& p : power) p = std::sqrt(p * norm);
  return power;
}

double GaussianRandomField::correlation_for_scale(double scale, double lag) const {
  double num = 0.0, den = 0.0;
  for (std::size_t y = 0; y < h_; ++y) {
    const double ky = 2.0 * std::numbers::pi * signed_freq(y, h_) / static_cast<double>(h_);
    for (std::size_t x = 0; x < w_; ++x) {
      const double kx = 2.0 * std::numbers::pi * signed_freq(x, w_) / static_cast<double>(w_);
      const double p = std::pow(1.0 + (kx * kx + ky * ky) * scale * scale, -exponent_);
      num += p * std::cos(kx * lag);
      den += p;
    }
  }
  return num / den;
}

double GaussianRandomField::correlation(double lag) const { return correlation_for_scale(scale_, lag); }

std::vector<double> GaussianRandomField::draw(Rng& rng) const {
  const std::size_t n = h_ * w_, wc = w_ / 2 + 1;
  std::unique_ptr<double, FftwFree> real(static_cast<double*>(fftw_malloc(sizeof(double) * n)));
  std::unique_ptr<fftw_complex, FftwFree> spec(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * h_ * wc)));
  for (std::size_t i = 0; i < n; ++i) real.get()[i] = rng.normal();

  fftw_plan fwd = fftw_plan_dft_r2c_2d(static_cast<int>(h_), static_cast<int>(w_), real.get(), spec.get(), FFTW_ESTIMATE);
  fftw_execute(fwd);
  fftw_destroy_plan(fwd);
  for (std::size_t i = 0; i < h_ * wc; ++i) {
    spec.get()[i][0] *= amplitude_[i];
    spec.get()[i][1] *= amplitude_[i];
  }
  fftw_plan inv = fftw_plan_dft_c2r_2d(static_cast<int>(h_), static_cast<int>(w_), spec.get(), real.get(), FFTW_ESTIMATE);
  fftw_execute(inv);
  fftw_destroy_plan(inv);

  std::vector<double> out(real.get(), real.get() + n);
  for (auto& v : out) v /= static_cast<double>(n);
  return out;
}

void SyntheticSpec::validate() const {
  if (h == 0 || w == 0 || h % 16 != 0 || w % 16 != 0) fail(ErrorKind::Config, "data: h and w must be positive multiples of 16");
  if (resolved_raw_h() < h || resolved_raw_w() < w) fail(ErrorKind::Config, "data: raw grid smaller than crop");
  for (const auto& s : spectra) {
    if (!(s.correlation_length > 0.0)) fail(ErrorKind::Config, "data: correlation_length must be positive");
    if (!(s.spectrum_exponent > 0.0)) fail(ErrorKind::Config, "data: spectrum_exponent must be positive");
  }
  if (!(prect_mixing >= 0.0 && prect_mixing <= 1.0)) fail(ErrorKind::Config, "data: prect_mixing must be in [0,1]");
}

std::size_t SyntheticSpec::resolved_raw_h() const {
  return raw_h ? raw_h : static_cast<std::size_t>(std::lround(static_cast<double>(h) * 213.0 / 192.0));
}

std::size_t SyntheticSpec::resolved_raw_w() const {
  return raw_w ? raw_w : static_cast<std::size_t>(std::lround(static_cast<double>(w) * 321.0 / 256.0));
}

std::vector<std::string> default_channels() {
  return {std::string(channel::kTS), std::string(channel::kPRECT), std::string(channel::kDPHIS)};
}

Field generate_topography(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t rh = spec.resolved_raw_h(), rw = spec.resolved_raw_w();
  GaussianRandomField grf(rh, rw, spec.spectra[2].correlation_length, spec.spectra[2].spectrum_exponent);
  Rng rng(spec.seed, streams::kTopography);
  const auto z = grf.draw(rng);
  Field topo({"PHIS", std::string(channel::kDPHIS)}, rh, rw);
  for (std::size_t i = 0; i < rh * rw; ++i) topo.plane(0)[i] = static_cast<float>(1000.0 * z[i]);
  // central differences on the periodic grid, per grid cell
  for (std::size_t y = 0; y < rh; ++y) {
    for (std::size_t x = 0; x < rw; ++x) {
      const double dx = 0.5 * (z[y * rw + (x + 1) % rw] - z[y * rw + (x + rw - 1) % rw]);
      const double dy = 0.5 * (z[((y + 1) % rh) * rw + x] - z[((y + rh - 1) % rh) * rw + x]);
      topo.at(1, y, x) = static_cast<float>(1000.0 * std::sqrt(dx * dx + dy * dy));
    }
  }
  return center_crop(topo, spec.h, spec.w);
}

std::vector<Field> generate_fields(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t rh = spec.resolved_raw_h(), rw = spec.resolved_raw_w(), n = rh * rw;
  const GaussianRandomField ts_grf(rh, rw, spec.spectra[0].correlation_length, spec.spectra[0].spectrum_exponent);
  const GaussianRandomField pr_grf(rh, rw, spec.spectra[1].correlation_length, spec.spectra[1].spectrum_exponent);
  const Field topo = generate_topography(spec);
  const auto dphis = topo.plane(1);
  const double mix = spec.prect_mixing;
  const double own = std::sqrt(1.0 - mix * mix);

  std::vector<Field> out;
  out.reserve(spec.n_samples);
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    Rng rng(spec.seed, streams::kData, i);
    const auto z_ts = ts_grf.draw(rng);
    const auto z_pr = pr_grf.draw(rng);
    Field raw(default_channels(), rh, rw);
    for (std::size_t k = 0; k < n; ++k) {
      raw.plane(0)[k] = static_cast<float>(288.0 + 10.0 * z_ts[k]);
      const double g = mix * z_ts[k] + own * z_pr[k];
      raw.plane(1)[k] = static_cast<float>(std::exp(spec.prect_log_std * g));
    }
    Field f = center_crop(raw, spec.h, spec.w);
    std::copy(dphis.begin(), dphis.end(), f.plane(2).begin());
    out.push_back(std::move(f));
  }
  return out;
}

SplitCounts split_counts(std::size_t n, std::array<double, 3> ratios) {
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (!(total > 0.0)) fail(ErrorKind::Config, "split ratios must sum to a positive value");
  SplitCounts c;
  c.val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios[1] / total));
  c.test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios[2] / total));
  if (c.val + c.test > n) fail(ErrorKind::Config, "split ratios leave no room for training data");
  c.train = n - c.val - c.test;
  return c;
}

Field degrade(const Field& hr, std::size_t scale) {
  if (scale != 4 && scale != 8) fail(ErrorKind::Range, "degrade: scale must be 4 or 8, got " + std::to_string(scale));
  if (hr.height() % scale != 0 || hr.width() % scale != 0) {
    fail(ErrorKind::Shape, "degrade: " + std::to_string(hr.height()) + "x" + std::to_string(hr.width()) +
                               " not divisible by " + std::to_string(scale));
  }
  return bicubic_resize(hr, hr.height() / scale, hr.width() / scale, true);
}

Field upsample_condition(const Field& lr, std::size_t scale) {
  if (scale == 0) fail(ErrorKind::Range, "upsample_condition: scale must be positive");
  return bicubic_resize(lr, lr.height() * scale, lr.width() * scale, false);
}

const ChannelStats& NormStats::at(std::string_view channel) const {
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (channels[i] == channel) return stats[i];
  }
  fail(ErrorKind::Shape, "no normalisation statistics for channel '" + std::string(channel) + "'");
}

NormStats compute_norm_stats(std::span<const Field> train_hr) {
  if (train_hr.empty()) fail(ErrorKind::Shape, "compute_norm_stats: empty training split");
  NormStats ns;
  ns.channels = train_hr.front().channels();
  for (std::size_t c = 0; c < ns.channels.size(); ++c) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& f : train_hr) {
      for (float v : f.plane(c)) sum += v;
      count += f.plane_size();
    }
    const double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (const auto& f : train_hr) {
      for (float v : f.plane(c)) ss += (v - mean) * (v - mean);
    }
    ns.stats.push_back({mean, std::sqrt(ss / static_cast<double>(count))});
  }
  return ns;
}

Field normalize(const Field& f, const NormStats& stats) {
  Field out = f;
  for (std::size_t c = 0; c < f.num_channels(); ++c) {
    const auto& s = stats.at(f.channels()[c]);
    const double inv = 1.0 / std::max(s.std, kStdFloor);
    for (auto& v : out.plane(c)) v = static_cast<float>((v - s.mean) * inv);
  }
  return out;
}

Field denormalize(const Field& f, const NormStats& stats) {
  Field out = f;
  for (std::size_t c = 0; c < f.num_channels(); ++c) {
    const auto& s = stats.at(f.channels()[c]);
    const double sd = std::max(s.std, kStdFloor);
    for (auto& v : out.plane(c)) v = static_cast<float>(v * sd + s.mean);
  }
  return out;
}

DatasetBundle make_bundle(std::vector<Field> train_hr, std::vector<Field> val_hr, std::vector<Field> test_hr,
                          std::size_t scale) {
  DatasetBundle b;
  b.scale_factor = scale;
  b.norm_stats = compute_norm_stats(train_hr);
  auto pairs = [scale](std::vector<Field>& hr) {
    std::vector<Pair> out;
    out.reserve(hr.size());
    for (auto& f : hr) {
      Field lr = degrade(f, scale);
      out.push_back({std::move(lr), std::move(f)});
    }
    return out;
  };
  b.train = pairs(train_hr);
  b.val = pairs(val_hr);
  b.test = pairs(test_hr);
  return b;
}

DatasetBundle normalize(DatasetBundle bundle) {
  if (bundle.normalized) return bundle;
  for (auto* split : {&bundle.train, &bundle.val, &bundle.test}) {
    for (auto& p : *split) {
      p.lr = normalize(p.lr, bundle.norm_stats);
      p.hr = normalize(p.hr, bundle.norm_stats);
    }
  }
  bundle.normalized = true;
  return bundle;
}

void write_stats(const std::filesystem::path& path, const NormStats& stats) {
  nlohmann::ordered_json j;
  j["channels"] = nlohmann::ordered_json::array();
  char buf[64];
  for (std::size_t i = 0; i < stats.channels.size(); ++i) {
    nlohmann::ordered_json c;
    c["name"] = stats.channels[i];
    std::snprintf(buf, sizeof buf, "%.17g", stats.stats[i].mean);
    c["mean"] = buf;
    std::snprintf(buf, sizeof buf, "%.17g", stats.stats[i].std);
    c["std"] = buf;
    j["channels"].push_back(c);
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << "\n";
}

NormStats read_stats(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path.string() + "'");
  NormStats ns;
  try {
    const auto j = nlohmann::json::parse(in);
    for (const auto& c : j.at("channels")) {
      ns.channels.push_back(c.at("name").get<std::string>());
      ns.stats.push_back({std::stod(c.at("mean").get<std::string>()), std::stod(c.at("std").get<std::string>())});
    }
  } catch (const std::exception& e) {
    fail(ErrorKind::Format, "malformed stats file '" + path.string() + "': " + e.what());
  }
  return ns;
}

std::uint64_t write_dataset(const std::filesystem::path& dir, const DatasetFiles& data, const Field& topography) {
  std::filesystem::create_directories(dir);
  write_fields(dir / "train.cgf", data.train);
  write_fields(dir / "val.cgf", data.val);
  write_fields(dir / "test.cgf", data.test);
  write_fields(dir / "topography.cgf", std::span<const Field>(&topography, 1));
  write_stats(dir / "stats.json", data.stats);
  return dataset_hash(dir);
}

DatasetFiles read_dataset(const std::filesystem::path& dir) {
  DatasetFiles d;
  d.train = read_fields(dir / "train.cgf");
  d.val = read_fields(dir / "val.cgf");
  d.test = read_fields(dir / "test.cgf");
  d.stats = read_stats(dir / "stats.json");
  return d;
}

std::uint64_t dataset_hash(const std::filesystem::path& dir) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char* name : {"train.cgf", "val.cgf", "test.cgf", "topography.cgf", "stats.json"}) {
    h = hash_file(dir / name, h);
  }
  return h;
}

}  // namespace climdiff
