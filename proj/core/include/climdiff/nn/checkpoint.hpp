#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "climdiff/nn/autograd.hpp"

namespace climdiff::nn {

/// One named float array of a checkpoint ("CKPT" container).
struct NamedArray {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  friend bool operator==(const NamedArray&, const NamedArray&) = default;
};

/// Layout: "CKPT", u32 count, then per entry: u32 name length + UTF-8 name,
/// u32 rank, rank x u32 dims, float32 payload. All integers and floats are
/// little-endian.
void write_checkpoint(const std::filesystem::path& path, std::span<const NamedArray> arrays);
std::vector<NamedArray> read_checkpoint(const std::filesystem::path& path);

std::vector<NamedArray> to_arrays(const ParamList<float>& params, const std::string& prefix = "");
NamedArray to_array(const std::string& name, const Tensor<float>& t);
Tensor<float> to_tensor(const NamedArray& a);

/// Copies arrays named `prefix + param.name` into the parameters. Every
/// parameter must be present with an identical shape.
void load_into(ParamList<float>& params, std::span<const NamedArray> arrays, const std::string& prefix = "");

const NamedArray* find_array(std::span<const NamedArray> arrays, const std::string& name);

}  // namespace climdiff::nn
