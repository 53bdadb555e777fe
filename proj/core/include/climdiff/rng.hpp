#pragma once

#include <cstdint>
#include <random>

namespace climdiff {

/// Seeded pseudo-random stream.
///
/// Streams are keyed by (seed, tag, index) so that every stochastic call site
/// draws from its own substream and results do not depend on call ordering in
/// unrelated code. Uniform bits come from std::mt19937_64, whose output
/// sequence is fixed by the standard; normals use the Box-Muller transform.
/// Neither depends on implementation-defined std distributions, so a given
/// key reproduces the same values on every conforming platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t tag = 0, std::uint64_t index = 0);

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n);
  double normal();

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Stream tags used across the project.
namespace streams {
inline constexpr std::uint64_t kInit = 0x11;
inline constexpr std::uint64_t kTrain = 0x22;
inline constexpr std::uint64_t kSample = 0x33;
inline constexpr std::uint64_t kData = 0x44;
inline constexpr std::uint64_t kTopography = 0x55;
inline constexpr std::uint64_t kForward = 0x66;
}  // namespace streams

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace climdiff
