#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace climdiff {

/// Canonical channel names of the three climate variables.
namespace channel {
inline constexpr std::string_view kTS = "TS";
inline constexpr std::string_view kPRECT = "PRECT";
inline constexpr std::string_view kDPHIS = "dPHIS";
}  // namespace channel

/// A C x H x W grid of float values with named channels.
///
/// Storage is channel-major then row-major, so appending channels is a
/// contiguous append of planes. Values are checked finite on construction.
class Field {
 public:
  Field() = default;
  Field(std::vector<std::string> channels, std::size_t height, std::size_t width);
  Field(std::vector<std::string> channels, std::size_t height, std::size_t width, std::vector<float> data);

  const std::vector<std::string>& channels() const noexcept { return channels_; }
  std::size_t num_channels() const noexcept { return channels_.size(); }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t plane_size() const noexcept { return height_ * width_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }
  std::span<const float> plane(std::size_t c) const;
  std::span<float> plane(std::size_t c);

  float at(std::size_t c, std::size_t y, std::size_t x) const { return data_[(c * height_ + y) * width_ + x]; }
  float& at(std::size_t c, std::size_t y, std::size_t x) { return data_[(c * height_ + y) * width_ + x]; }

  std::optional<std::size_t> channel_index(std::string_view name) const;
  /// Throws Shape error when the channel does not exist.
  std::size_t require_channel(std::string_view name) const;

  /// New field holding only the named channels, in the order given.
  Field select(const std::vector<std::string>& names) const;

  bool same_layout(const Field& other) const;
  bool all_finite() const;

  friend bool operator==(const Field&, const Field&) = default;

 private:
  std::vector<std::string> channels_;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<float> data_;
};

/// Centered out_h x out_w window. When the margin is odd the extra row/column
/// is dropped from the high-index side.
Field center_crop(const Field& f, std::size_t out_h, std::size_t out_w);

/// Channel concatenation: a's channels followed by b's.
Field concat_channels(const Field& a, const Field& b);

struct ChannelStats {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  friend bool operator==(const ChannelStats&, const ChannelStats&) = default;
};

/// Per-channel mean and population std with double accumulation.
std::vector<ChannelStats> field_stats(const Field& f);

/// Model input/output variable configuration.
enum class IoConfig { ThreeInThreeOut, ThreeInOneOut };

std::string_view to_string(IoConfig io);
IoConfig parse_io_config(std::string_view text);

struct ChannelRole {
  std::string name;
  bool is_target = false;
};

/// Roles for the conditioning channels; in 3in1out only `target` is a target.
std::vector<ChannelRole> channel_roles(const std::vector<std::string>& channels, IoConfig io,
                                       std::string_view target = channel::kPRECT);
std::vector<std::string> target_channels(const std::vector<ChannelRole>& roles);

// FieldFile ("CGF1") binary container.
void write_fields(const std::filesystem::path& path, std::span<const Field> samples);
std::vector<Field> read_fields(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t hash = 0xcbf29ce484222325ULL);
std::uint64_t hash_file(const std::filesystem::path& path, std::uint64_t hash = 0xcbf29ce484222325ULL);

}  // namespace climdiff
