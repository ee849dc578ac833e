#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

// Little-endian primitives shared by the clip and checkpoint containers.
namespace exprdit::binio {

static_assert(std::endian::native == std::endian::little, "binary containers assume a little-endian host");

inline void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
inline void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }

inline void write_f32_array(std::ostream& out, std::span<const float> data) {
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::optional<std::uint32_t> read_u32(std::istream& in) {
  std::uint32_t v;
  if (!in.read(reinterpret_cast<char*>(&v), 4)) return std::nullopt;
  return v;
}

inline std::optional<std::uint64_t> read_u64(std::istream& in) {
  std::uint64_t v;
  if (!in.read(reinterpret_cast<char*>(&v), 8)) return std::nullopt;
  return v;
}

inline bool read_f32_array(std::istream& in, std::span<float> data) {
  return static_cast<bool>(
      in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float))));
}

inline std::optional<std::string> read_string(std::istream& in, std::uint32_t max_len = 1u << 24) {
  auto n = read_u32(in);
  if (!n || *n > max_len) return std::nullopt;
  std::string s(*n, '\0');
  if (!in.read(s.data(), *n)) return std::nullopt;
  return s;
}

}  // namespace exprdit::binio
