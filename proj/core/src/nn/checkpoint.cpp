#include "climdiff/nn/checkpoint.hpp"

#include <fstream>
#include <numeric>

#include "../binary_io.hpp"

namespace climdiff::nn {

namespace {
constexpr char kCkptMagic[4] = {'C', 'K', 'P', 'T'};
}

void write_checkpoint(const std::filesystem::path& path, std::span<const NamedArray> arrays) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  out.write(kCkptMagic, 4);
  detail::put_u32(out, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    const std::size_t n = std::accumulate(a.dims.begin(), a.dims.end(), std::size_t{1}, std::multiplies<>());
    if (n != a.values.size()) fail(ErrorKind::Shape, "checkpoint entry '" + a.name + "' has inconsistent size");
    detail::put_string(out, a.name);
    detail::put_u32(out, static_cast<std::uint32_t>(a.dims.size()));
    for (auto d : a.dims) detail::put_u32(out, d);
    for (float v : a.values) detail::put_f32(out, v);
  }
  if (!out) fail(ErrorKind::Io, "write to '" + path.string() + "' failed");
}

std::vector<NamedArray> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path.string() + "'");
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kCkptMagic)) {
    fail(ErrorKind::Format, "'" + path.string() + "' is not a CKPT checkpoint");
  }
  const auto count = detail::get_u32(in, "entry count");
  std::vector<NamedArray> arrays;
  for (std::uint32_t e = 0; e < count; ++e) {
    NamedArray a;
    a.name = detail::get_string(in, "entry name");
    const auto rank = detail::get_u32(in, "rank");
    if (rank > 8) fail(ErrorKind::Format, "implausible rank for '" + a.name + "'");
    std::size_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      a.dims.push_back(detail::get_u32(in, "dimension"));
      n *= a.dims.back();
    }
    if (n > (std::size_t{1} << 32)) fail(ErrorKind::Format, "implausible size for '" + a.name + "'");
    a.values.resize(n);
    for (auto& v : a.values) v = detail::get_f32(in, "payload");
    arrays.push_back(std::move(a));
  }
  if (in.peek() != std::char_traits<char>::eof()) fail(ErrorKind::Format, "'" + path.string() + "' has trailing bytes");
  return arrays;
}

NamedArray to_array(const std::string& name, const Tensor<float>& t) {
  NamedArray a{name, {}, t.storage()};
  for (auto d : t.shape()) a.dims.push_back(static_cast<std::uint32_t>(d));
  return a;
}

Tensor<float> to_tensor(const NamedArray& a) {
  Shape shape(a.dims.begin(), a.dims.end());
  return Tensor<float>(std::move(shape), a.values);
}

std::vector<NamedArray> to_arrays(const ParamList<float>& params, const std::string& prefix) {
  std::vector<NamedArray> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(to_array(prefix + p.name, p.var.value()));
  return out;
}

const NamedArray* find_array(std::span<const NamedArray> arrays, const std::string& name) {
  for (const auto& a : arrays) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

void load_into(ParamList<float>& params, std::span<const NamedArray> arrays, const std::string& prefix) {
  for (auto& p : params) {
    const auto* a = find_array(arrays, prefix + p.name);
    if (!a) fail(ErrorKind::Format, "checkpoint is missing parameter '" + prefix + p.name + "'");
    Tensor<float> t = to_tensor(*a);
    if (t.shape() != p.var.shape()) {
      fail(ErrorKind::Shape, "checkpoint parameter '" + p.name + "' has shape " + shape_string(t.shape()) +
                                 ", model expects " + shape_string(p.var.shape()));
    }
    p.var.mutable_value() = std::move(t);
  }
}

}  // namespace climdiff::nn
