#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "preblock/bytes.hpp"
#include "preblock/error.hpp"

namespace preblock {

struct Waveform {
  std::vector<float> samples;
  int sample_rate = 16000;
};


/// Decodes a RIFF/WAVE byte buffer: PCM 16-bit or IEEE float 32-bit, mono.
/// The sample rate is returned as found; callers enforce 16 kHz.
inline Waveform decode_wav(const std::string &bytes) {
  const auto *p = reinterpret_cast<const unsigned char *>(bytes.data());
  const std::size_t n = bytes.size();
  if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
    throw BadMagicError("wav: not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= n) {
    const std::uint32_t size = detail::read_u32le(p + pos + 4);
    const unsigned char *body = p + pos + 8;
    if (pos + 8 + size > n)
      throw FormatError("wav: truncated chunk");
    if (std::memcmp(p + pos, "fmt ", 4) == 0) {
      if (size < 16)
        throw FormatError("wav: short fmt chunk");
      format = detail::read_u16le(body);
      channels = detail::read_u16le(body + 2);
      rate = detail::read_u32le(body + 4);
      bits = detail::read_u16le(body + 14);
      if (format == 0xFFFE && size >= 26) // WAVE_FORMAT_EXTENSIBLE
        format = detail::read_u16le(body + 24);
      have_fmt = true;
    } else if (std::memcmp(p + pos, "data", 4) == 0) {
      if (!have_fmt)
        throw FormatError("wav: data chunk before fmt chunk");
      if (channels != 1)
        throw FormatError("wav: expected mono, found " +
                          std::to_string(channels) + " channels");
      Waveform w;
      w.sample_rate = static_cast<int>(rate);
      if (format == 1 && bits == 16) {
        w.samples.resize(size / 2);
        for (std::size_t i = 0; i < w.samples.size(); ++i) {
          const auto v = static_cast<std::int16_t>(detail::read_u16le(body + 2 * i));
          w.samples[i] = static_cast<float>(v) / 32768.0f;
        }
      } else if (format == 3 && bits == 32) {
        w.samples.resize(size / 4);
        for (std::size_t i = 0; i < w.samples.size(); ++i) {
          const std::uint32_t u = detail::read_u32le(body + 4 * i);
          std::memcpy(&w.samples[i], &u, 4);
        }
      } else {
        throw FormatError("wav: unsupported encoding (format " +
                          std::to_string(format) + ", " + std::to_string(bits) +
                          " bits)");
      }
      return w;
    }
    pos += 8 + size + (size & 1);
  }
  throw FormatError("wav: no data chunk");
}

inline Waveform read_wav(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw FormatError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return decode_wav(bytes);
}

/// 16-bit PCM mono encoding; samples are clipped to [-1, 1].
inline std::string encode_wav_pcm16(const Waveform &w) {
  std::string out;
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  out.append("RIFF");
  detail::put_u32le(out, 36 + data_bytes);
  out.append("WAVEfmt ");
  detail::put_u32le(out, 16);
  detail::put_u16le(out, 1);
  detail::put_u16le(out, 1);
  detail::put_u32le(out, static_cast<std::uint32_t>(w.sample_rate));
  detail::put_u32le(out, static_cast<std::uint32_t>(w.sample_rate * 2));
  detail::put_u16le(out, 2);
  detail::put_u16le(out, 16);
  out.append("data");
  detail::put_u32le(out, data_bytes);
  for (float s : w.samples) {
    const float c = s < -1.0f ? -1.0f : (s > 1.0f ? 1.0f : s);
    const auto v = static_cast<std::int16_t>(std::lround(c * 32767.0f));
    detail::put_u16le(out, static_cast<std::uint16_t>(v));
  }
  return out;
}

inline void write_wav(const std::filesystem::path &path, const Waveform &w) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw FormatError("cannot write " + path.string());
  const auto bytes = encode_wav_pcm16(w);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

} // namespace preblock
