#pragma once

// Internal helpers shared by the file-format readers and writers.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "trackcouple/error.hpp"

namespace trackcouple::detail {

inline std::ofstream open_out(const std::filesystem::path& path, bool binary) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw Error(ErrorCode::kIo, "cannot open for writing: " + path.string());
  return out;
}

inline std::ifstream open_in(const std::filesystem::path& path, bool binary) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::kIo, "missing file: " + path.string());
  }
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw Error(ErrorCode::kIo, "cannot open for reading: " + path.string());
  return in;
}

inline void put_u32(std::ostream& out, std::uint32_t v) {
  char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  out.write(bytes, 4);
}

inline void put_i32(std::ostream& out, std::int32_t v) { put_u32(out, static_cast<std::uint32_t>(v)); }

inline void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFFu);
  out.write(bytes, 8);
}

inline bool get_u32(std::istream& in, std::uint32_t& v) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) return false;
  v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  return true;
}

inline bool get_i32(std::istream& in, std::int32_t& v) {
  std::uint32_t u = 0;
  if (!get_u32(in, u)) return false;
  v = static_cast<std::int32_t>(u);
  return true;
}

inline bool get_f64(std::istream& in, double& v) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) return false;
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  v = std::bit_cast<double>(bits);
  return true;
}

// Shortest text form that round-trips a double exactly.
std::string format_double(double v);

[[noreturn]] inline void format_error(const std::filesystem::path& path, std::size_t line,
                                      const std::string& what) {
  throw Error(ErrorCode::kFormat, path.string() + ":" + std::to_string(line) + ": " + what);
}

}  // namespace trackcouple::detail
