#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "climdiff/error.hpp"

namespace climdiff::detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                         static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes, 4);
}

inline void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

inline void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::uint32_t get_u32(std::istream& in, const char* what) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) fail(ErrorKind::Format, std::string("truncated file reading ") + what);
  return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
}

inline float get_f32(std::istream& in, const char* what) { return std::bit_cast<float>(get_u32(in, what)); }

inline std::string get_string(std::istream& in, const char* what, std::uint32_t max_len = 1u << 16) {
  const auto n = get_u32(in, what);
  if (n > max_len) fail(ErrorKind::Format, std::string("implausible string length reading ") + what);
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), n)) fail(ErrorKind::Format, std::string("truncated file reading ") + what);
  return s;
}

}  // namespace climdiff::detail
