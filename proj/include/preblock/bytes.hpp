#pragma once

#include <cstdint>
#include <string>

// Little-endian integer encode/decode shared by the binary file formats.
namespace preblock::detail {

inline std::uint32_t read_u32le(const unsigned char *p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 |
         std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

inline std::uint16_t read_u16le(const unsigned char *p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

inline void put_u32le(std::string &out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_u16le(std::string &out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

} // namespace preblock::detail
