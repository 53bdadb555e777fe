#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "climdiff/error.hpp"
#include "climdiff/field.hpp"
#include "climdiff/rng.hpp"

namespace climdiff::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = "climdiff_";
    if (info) name += std::string(info->test_suite_name()) + "_" + info->name();
    for (auto& c : name) {
      if (c == '/') c = '_';
    }
    path_ = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

// Kind of the climdiff::Error thrown by f, or nullopt when it returns normally.
template <class F>
std::optional<ErrorKind> error_kind(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

inline std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline Field random_field(std::vector<std::string> channels, std::size_t h, std::size_t w, Rng& rng,
                          double scale = 1.0) {
  Field f(std::move(channels), h, w);
  for (auto& v : f.data()) v = static_cast<float>(scale * rng.normal());
  return f;
}

inline Field constant_field(std::vector<std::string> channels, std::size_t h, std::size_t w, float value) {
  Field f(std::move(channels), h, w);
  for (auto& v : f.data()) v = value;
  return f;
}

}  // namespace climdiff::testing
