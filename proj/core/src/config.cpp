#include "climdiff/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "climdiff/error.hpp"
#include "json.hpp"

namespace climdiff {

namespace {

using json = nlohmann::json;

std::string type_name(const json& j) { return j.type_name(); }

[[noreturn]] void bad_type(const std::string& key, const char* expected, const json& j) {
  fail(ErrorKind::Config, "config key '" + key + "': expected " + expected + ", got " + type_name(j));
}

std::size_t as_size(const std::string& key, const json& j) {
  if (!j.is_number_unsigned()) bad_type(key, "non-negative integer", j);
  return j.get<std::size_t>();
}

std::uint64_t as_u64(const std::string& key, const json& j) {
  if (!j.is_number_unsigned()) bad_type(key, "non-negative integer", j);
  return j.get<std::uint64_t>();
}

double as_double(const std::string& key, const json& j) {
  if (!j.is_number()) bad_type(key, "number", j);
  return j.get<double>();
}

bool as_bool(const std::string& key, const json& j) {
  if (!j.is_boolean()) bad_type(key, "boolean", j);
  return j.get<bool>();
}

std::vector<std::size_t> as_size_list(const std::string& key, const json& j) {
  if (!j.is_array()) bad_type(key, "array of integers", j);
  std::vector<std::size_t> out;
  for (const auto& v : j) out.push_back(as_size(key, v));
  return out;
}

std::vector<std::string> as_string_list(const std::string& key, const json& j) {
  if (!j.is_array()) bad_type(key, "array of strings", j);
  std::vector<std::string> out;
  for (const auto& v : j) {
    if (!v.is_string()) bad_type(key, "array of strings", v);
    out.push_back(v.get<std::string>());
  }
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&, const json&)>;

const std::map<std::string, std::map<std::string, Setter>>& schema() {
  static const std::map<std::string, std::map<std::string, Setter>> s{
      {"data",
       {
           {"n_samples", [](RunConfig& c, const std::string& k, const json& j) { c.data.n_samples = as_size(k, j); }},
           {"h", [](RunConfig& c, const std::string& k, const json& j) { c.data.h = as_size(k, j); }},
           {"w", [](RunConfig& c, const std::string& k, const json& j) { c.data.w = as_size(k, j); }},
           {"scale", [](RunConfig& c, const std::string& k, const json& j) { c.data.scale = as_size(k, j); }},
           {"seed", [](RunConfig& c, const std::string& k, const json& j) { c.data.seed = as_u64(k, j); }},
           {"split_ratios",
            [](RunConfig& c, const std::string& k, const json& j) {
              if (!j.is_array() || j.size() != 3) bad_type(k, "array of 3 numbers", j);
              for (std::size_t i = 0; i < 3; ++i) c.data.split_ratios[i] = as_double(k, j[i]);
            }},
       }},
      {"diffusion",
       {
           {"timesteps", [](RunConfig& c, const std::string& k, const json& j) { c.diffusion.timesteps = as_size(k, j); }},
           {"beta_start", [](RunConfig& c, const std::string& k, const json& j) { c.diffusion.beta_start = as_double(k, j); }},
           {"beta_end", [](RunConfig& c, const std::string& k, const json& j) { c.diffusion.beta_end = as_double(k, j); }},
       }},
      {"model",
       {
           {"base_width", [](RunConfig& c, const std::string& k, const json& j) { c.model.base_width = as_size(k, j); }},
           {"level_multipliers",
            [](RunConfig& c, const std::string& k, const json& j) { c.model.level_multipliers = as_size_list(k, j); }},
           {"blocks_per_level",
            [](RunConfig& c, const std::string& k, const json& j) { c.model.blocks_per_level = as_size(k, j); }},
           {"cond_channels", [](RunConfig& c, const std::string& k, const json& j) { c.model.cond_channels = as_size(k, j); }},
           {"target_channels",
            [](RunConfig& c, const std::string& k, const json& j) { c.model.target_channels = as_size(k, j); }},
           {"srresnet_width",
            [](RunConfig& c, const std::string& k, const json& j) { c.model.srresnet_width = as_size(k, j); }},
           {"srresnet_blocks",
            [](RunConfig& c, const std::string& k, const json& j) { c.model.srresnet_blocks = as_size(k, j); }},
       }},
      {"train",
       {
           {"iters", [](RunConfig& c, const std::string& k, const json& j) { c.train.iters = as_size(k, j); }},
           {"batch_size", [](RunConfig& c, const std::string& k, const json& j) { c.train.batch_size = as_size(k, j); }},
           {"lr", [](RunConfig& c, const std::string& k, const json& j) { c.train.lr = as_double(k, j); }},
           {"seed", [](RunConfig& c, const std::string& k, const json& j) { c.train.seed = as_u64(k, j); }},
           {"checkpoint_every",
            [](RunConfig& c, const std::string& k, const json& j) { c.train.checkpoint_every = as_size(k, j); }},
       }},
      {"eval",
       {
           {"methods", [](RunConfig& c, const std::string& k, const json& j) { c.eval.methods = as_string_list(k, j); }},
           {"scales", [](RunConfig& c, const std::string& k, const json& j) { c.eval.scales = as_size_list(k, j); }},
           {"max_samples", [](RunConfig& c, const std::string& k, const json& j) { c.eval.max_samples = as_size(k, j); }},
           {"per_sample_rmse",
            [](RunConfig& c, const std::string& k, const json& j) { c.eval.per_sample_rmse = as_bool(k, j); }},
       }},
  };
  return s;
}

void check_scale(std::size_t s, const char* key) {
  if (s != 4 && s != 8) fail(ErrorKind::Config, std::string(key) + " must be 4 or 8, got " + std::to_string(s));
}

}  // namespace

void RunConfig::validate() const {
  synthetic_spec().validate();
  if (data.n_samples < 3) fail(ErrorKind::Config, "data.n_samples must be at least 3");
  check_scale(data.scale, "data.scale");
  for (double r : data.split_ratios) {
    if (!(r >= 0.0)) fail(ErrorKind::Config, "data.split_ratios must be non-negative");
  }
  if (diffusion.timesteps == 0) fail(ErrorKind::Config, "diffusion.timesteps must be positive");
  if (!(diffusion.beta_start > 0.0 && diffusion.beta_end < 1.0 && diffusion.beta_start <= diffusion.beta_end)) {
    fail(ErrorKind::Config, "diffusion: need 0 < beta_start <= beta_end < 1");
  }
  if (model.base_width == 0 || model.level_multipliers.empty() || model.blocks_per_level == 0) {
    fail(ErrorKind::Config, "model: base_width, level_multipliers and blocks_per_level must be non-empty/positive");
  }
  if (model.cond_channels == 0) fail(ErrorKind::Config, "model.cond_channels must be positive");
  if (model.target_channels != 1 && model.target_channels != 3) {
    fail(ErrorKind::Config, "model.target_channels must be 1 (3in1out) or 3 (3in3out)");
  }
  const std::size_t div = std::size_t{1} << (model.level_multipliers.size() - 1);
  if (data.h % div != 0 || data.w % div != 0) {
    fail(ErrorKind::Config, "model: " + std::to_string(model.level_multipliers.size()) + " levels need h and w divisible by " +
                                std::to_string(div));
  }
  if (train.batch_size == 0) fail(ErrorKind::Config, "train.batch_size must be positive");
  if (!(train.lr > 0.0)) fail(ErrorKind::Config, "train.lr must be positive");
  if (eval.scales.empty()) fail(ErrorKind::Config, "eval.scales must not be empty");
  for (auto s : eval.scales) check_scale(s, "eval.scales");
  static const std::vector<std::string> known{"bilinear", "bicubic", "unet", "srresnet", "ddpm"};
  for (const auto& m : eval.methods) {
    if (std::find(known.begin(), known.end(), m) == known.end()) {
      fail(ErrorKind::Config, "eval.methods: unknown method '" + m + "'");
    }
  }
}

SyntheticSpec RunConfig::synthetic_spec() const {
  SyntheticSpec s;
  s.n_samples = data.n_samples;
  s.h = data.h;
  s.w = data.w;
  s.seed = data.seed;
  return s;
}

ScheduleParams RunConfig::schedule_params() const {
  return {diffusion.timesteps, diffusion.beta_start, diffusion.beta_end};
}

RunConfig parse_config(std::string_view json_text, RunConfig base) {
  json root;
  try {
    root = json::parse(json_text.begin(), json_text.end());
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Config, std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) fail(ErrorKind::Config, "config root must be an object");
  const auto& sch = schema();
  for (const auto& [section, body] : root.items()) {
    const auto sit = sch.find(section);
    if (sit == sch.end()) fail(ErrorKind::Config, "unknown config section '" + section + "'");
    if (!body.is_object()) bad_type(section, "object", body);
    for (const auto& [key, value] : body.items()) {
      const auto kit = sit->second.find(key);
      if (kit == sit->second.end()) fail(ErrorKind::Config, "unknown config key '" + section + "." + key + "'");
      kit->second(base, section + "." + key, value);
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string dump_config(const RunConfig& c) {
  json j;
  j["data"] = {{"n_samples", c.data.n_samples}, {"h", c.data.h},       {"w", c.data.w},
               {"scale", c.data.scale},         {"seed", c.data.seed}, {"split_ratios", c.data.split_ratios}};
  j["diffusion"] = {
      {"timesteps", c.diffusion.timesteps}, {"beta_start", c.diffusion.beta_start}, {"beta_end", c.diffusion.beta_end}};
  j["model"] = {{"base_width", c.model.base_width},
                {"level_multipliers", c.model.level_multipliers},
                {"blocks_per_level", c.model.blocks_per_level},
                {"cond_channels", c.model.cond_channels},
                {"target_channels", c.model.target_channels},
                {"srresnet_width", c.model.srresnet_width},
                {"srresnet_blocks", c.model.srresnet_blocks}};
  j["train"] = {{"iters", c.train.iters},
                {"batch_size", c.train.batch_size},
                {"lr", c.train.lr},
                {"seed", c.train.seed},
                {"checkpoint_every", c.train.checkpoint_every}};
  j["eval"] = {{"methods", c.eval.methods},
               {"scales", c.eval.scales},
               {"max_samples", c.eval.max_samples},
               {"per_sample_rmse", c.eval.per_sample_rmse}};
  return j.dump(2) + "\n";
}

}  // namespace climdiff
