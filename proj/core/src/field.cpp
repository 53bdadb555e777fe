#include "climdiff/field.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "binary_io.hpp"
#include "climdiff/error.hpp"

namespace climdiff {

namespace {

void check_unique(const std::vector<std::string>& channels) {
  std::set<std::string> seen;
  for (const auto& c : channels) {
    if (!seen.insert(c).second) fail(ErrorKind::Shape, "duplicate channel name '" + c + "'");
  }
}

constexpr char kFieldMagic[4] = {'C', 'G', 'F', '1'};

}  // namespace

Field::Field(std::vector<std::string> channels, std::size_t height, std::size_t width)
    : channels_(std::move(channels)), height_(height), width_(width),
      data_(channels_.size() * height * width, 0.0f) {
  if (height == 0 || width == 0) fail(ErrorKind::Shape, "field dimensions must be positive");
  check_unique(channels_);
}

Field::Field(std::vector<std::string> channels, std::size_t height, std::size_t width, std::vector<float> data)
    : channels_(std::move(channels)), height_(height), width_(width), data_(std::move(data)) {
  if (height == 0 || width == 0) fail(ErrorKind::Shape, "field dimensions must be positive");
  check_unique(channels_);
  if (data_.size() != channels_.size() * height * width) {
    fail(ErrorKind::Shape, "field data length " + std::to_string(data_.size()) + " does not match " +
                               std::to_string(channels_.size()) + "x" + std::to_string(height) + "x" +
                               std::to_string(width));
  }
  if (!all_finite()) fail(ErrorKind::Range, "field contains non-finite values");
}

std::span<const float> Field::plane(std::size_t c) const {
  return std::span<const float>(data_).subspan(c * plane_size(), plane_size());
}

std::span<float> Field::plane(std::size_t c) { return std::span<float>(data_).subspan(c * plane_size(), plane_size()); }

std::optional<std::size_t> Field::channel_index(std::string_view name) const {
  const auto it = std::find(channels_.begin(), channels_.end(), name);
  if (it == channels_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - channels_.begin());
}

std::size_t Field::require_channel(std::string_view name) const {
  const auto idx = channel_index(name);
  if (!idx) fail(ErrorKind::Shape, "field has no channel '" + std::string(name) + "'");
  return *idx;
}

Field Field::select(const std::vector<std::string>& names) const {
  Field out(names, height_, width_);
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto src = plane(require_channel(names[i]));
    std::copy(src.begin(), src.end(), out.plane(i).begin());
  }
  return out;
}

bool Field::same_layout(const Field& other) const {
  return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
}

bool Field::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

Field center_crop(const Field& f, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0 || out_h > f.height() || out_w > f.width()) {
    fail(ErrorKind::Shape, "crop " + std::to_string(out_h) + "x" + std::to_string(out_w) + " does not fit in " +
                               std::to_string(f.height()) + "x" + std::to_string(f.width()));
  }
  const std::size_t y0 = (f.height() - out_h) / 2;
  const std::size_t x0 = (f.width() - out_w) / 2;
  Field out(f.channels(), out_h, out_w);
  for (std::size_t c = 0; c < f.num_channels(); ++c) {
    for (std::size_t y = 0; y < out_h; ++y) {
      for (std::size_t x = 0; x < out_w; ++x) out.at(c, y, x) = f.at(c, y0 + y, x0 + x);
    }
  }
  return out;
}

Field concat_channels(const Field& a, const Field& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    fail(ErrorKind::Shape, "concat_channels: spatial dimensions differ");
  }
  auto names = a.channels();
  names.insert(names.end(), b.channels().begin(), b.channels().end());
  std::vector<float> data(a.data().begin(), a.data().end());
  data.insert(data.end(), b.data().begin(), b.data().end());
  return Field(std::move(names), a.height(), a.width(), std::move(data));
}

std::vector<ChannelStats> field_stats(const Field& f) {
  std::vector<ChannelStats> stats(f.num_channels());
  const double n = static_cast<double>(f.plane_size());
  for (std::size_t c = 0; c < f.num_channels(); ++c) {
    const auto p = f.plane(c);
    double sum = 0.0;
    for (float v : p) sum += v;
    const double mean = sum / n;
    double ss = 0.0;
    for (float v : p) ss += (v - mean) * (v - mean);
    stats[c] = {mean, std::sqrt(ss / n)};
  }
  return stats;
}

std::string_view to_string(IoConfig io) {
  return io == IoConfig::ThreeInOneOut ? "3in1out" : "3in3out";
}

IoConfig parse_io_config(std::string_view text) {
  if (text == "3in1out") return IoConfig::ThreeInOneOut;
  if (text == "3in3out") return IoConfig::ThreeInThreeOut;
  fail(ErrorKind::Config, "unknown io config '" + std::string(text) + "' (expected 3in1out or 3in3out)");
}

std::vector<ChannelRole> channel_roles(const std::vector<std::string>& channels, IoConfig io, std::string_view target) {
  std::vector<ChannelRole> roles;
  bool found = false;
  for (const auto& c : channels) {
    const bool is_target = io == IoConfig::ThreeInThreeOut || c == target;
    found = found || c == target;
    roles.push_back({c, is_target});
  }
  if (io == IoConfig::ThreeInOneOut && !found) {
    fail(ErrorKind::Config, "target channel '" + std::string(target) + "' not among conditioning channels");
  }
  return roles;
}

std::vector<std::string> target_channels(const std::vector<ChannelRole>& roles) {
  std::vector<std::string> out;
  for (const auto& r : roles) {
    if (r.is_target) out.push_back(r.name);
  }
  return out;
}

void write_fields(const std::filesystem::path& path, std::span<const Field> samples) {
  std::vector<std::string> channels;
  std::size_t h = 0, w = 0;
  if (!samples.empty()) {
    channels = samples.front().channels();
    h = samples.front().height();
    w = samples.front().width();
    for (const auto& s : samples) {
      if (s.channels() != channels || s.height() != h || s.width() != w) {
        fail(ErrorKind::Shape, "write_fields: samples do not share channels and dimensions");
      }
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  out.write(kFieldMagic, 4);
  detail::put_u32(out, static_cast<std::uint32_t>(samples.size()));
  detail::put_u32(out, static_cast<std::uint32_t>(channels.size()));
  detail::put_u32(out, static_cast<std::uint32_t>(h));
  detail::put_u32(out, static_cast<std::uint32_t>(w));
  for (const auto& name : channels) detail::put_string(out, name);
  for (const auto& s : samples) {
    for (float v : s.data()) detail::put_f32(out, v);
  }
  if (!out) fail(ErrorKind::Io, "write to '" + path.string() + "' failed");
}

std::vector<Field> read_fields(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path.string() + "'");
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kFieldMagic)) {
    fail(ErrorKind::Format, "'" + path.string() + "' is not a CGF1 field file");
  }
  const auto n = detail::get_u32(in, "sample count");
  const auto c = detail::get_u32(in, "channel count");
  const auto h = detail::get_u32(in, "height");
  const auto w = detail::get_u32(in, "width");
  std::vector<std::string> channels;
  for (std::uint32_t i = 0; i < c; ++i) channels.push_back(detail::get_string(in, "channel name"));
  if (n > 0 && (h == 0 || w == 0)) fail(ErrorKind::Format, "field file has zero spatial dimension");

  const std::size_t count = static_cast<std::size_t>(c) * h * w;
  std::vector<Field> samples;
  samples.reserve(n);
  std::vector<char> raw(count * 4);
  for (std::uint32_t s = 0; s < n; ++s) {
    if (!in.read(raw.data(), static_cast<std::streamsize>(raw.size()))) {
      fail(ErrorKind::Format, "'" + path.string() + "' payload truncated at sample " + std::to_string(s));
    }
    std::vector<float> data(count);
    for (std::size_t i = 0; i < count; ++i) {
      const auto* b = reinterpret_cast<const unsigned char*>(raw.data() + 4 * i);
      const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                                 (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
      data[i] = std::bit_cast<float>(bits);
    }
    samples.emplace_back(channels, h, w, std::move(data));
  }
  if (in.peek() != std::char_traits<char>::eof()) fail(ErrorKind::Format, "'" + path.string() + "' has trailing bytes");
  return samples;
}

std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t hash) {
  for (std::byte b : bytes) {
    hash ^= static_cast<std::uint64_t>(b);
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::uint64_t hash_file(const std::filesystem::path& path, std::uint64_t hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path.string() + "'");
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const auto got = static_cast<std::size_t>(in.gcount());
    hash = fnv1a64(std::as_bytes(std::span<const char>(buf.data(), got)), hash);
  }
  return hash;
}

}  // namespace climdiff
