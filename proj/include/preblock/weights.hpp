#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <zlib.h>

#include "preblock/error.hpp"
#include "preblock/rng.hpp"
#include "preblock/bytes.hpp"

namespace preblock {

/// Topology of a conv-BN-ReLU-pool stack with a shared embedding and two
/// scalar heads.
struct ArchSpec {
  std::string id;
  std::size_t input_rows = 0;
  std::size_t input_cols = 0;
  std::vector<std::size_t> block_channels;
  std::size_t embed_dim = 0;
};

/// The reference topology: 1x128x94 input, four blocks of 32/64/128/256
/// channels, 256 -> 128 embedding, two 128 -> 1 heads.
inline const ArchSpec &pbcnn_v1() {
  static const ArchSpec spec{"pbcnn-v1", 128, 94, {32, 64, 128, 256}, 128};
  return spec;
}

/// One block, two channels, 4x4 input: small enough for nested-loop oracles.
inline const ArchSpec &probe_v1() {
  static const ArchSpec spec{"probe-v1", 4, 4, {2}, 3};
  return spec;
}

inline const ArchSpec &arch_by_id(const std::string &id) {
  for (const ArchSpec *a : {&pbcnn_v1(), &probe_v1()})
    if (a->id == id)
      return *a;
  throw FormatError("unknown architecture '" + id + "'");
}

struct TensorSpec {
  std::string name;
  std::vector<std::uint32_t> dims;

  std::size_t size() const {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                           std::multiplies<>());
  }
};

/// Ordered tensor list for an architecture. Names follow the PyTorch
/// state_dict of the equivalent module tree (without num_batches_tracked).
inline std::vector<TensorSpec> manifest(const ArchSpec &arch) {
  std::vector<TensorSpec> m;
  std::uint32_t in = 1;
  for (std::size_t b = 0; b < arch.block_channels.size(); ++b) {
    const auto out = static_cast<std::uint32_t>(arch.block_channels[b]);
    const std::string p = "block" + std::to_string(b) + ".";
    m.push_back({p + "conv.weight", {out, in, 3, 3}});
    m.push_back({p + "conv.bias", {out}});
    m.push_back({p + "bn.weight", {out}});
    m.push_back({p + "bn.bias", {out}});
    m.push_back({p + "bn.running_mean", {out}});
    m.push_back({p + "bn.running_var", {out}});
    in = out;
  }
  const auto e = static_cast<std::uint32_t>(arch.embed_dim);
  m.push_back({"embed.weight", {e, in}});
  m.push_back({"embed.bias", {e}});
  m.push_back({"event_head.weight", {1, e}});
  m.push_back({"event_head.bias", {1}});
  m.push_back({"preblock_head.weight", {1, e}});
  m.push_back({"preblock_head.bias", {1}});
  return m;
}

inline bool is_running_stat(const std::string &name) {
  return name.ends_with(".running_mean") || name.ends_with(".running_var");
}

/// Values stored in a weight file for this architecture.
inline std::size_t manifest_value_count(const ArchSpec &arch) {
  std::size_t n = 0;
  for (const auto &t : manifest(arch))
    n += t.size();
  return n;
}

/// Trainable parameters (batch-norm running statistics excluded).
inline std::size_t parameter_count(const ArchSpec &arch) {
  std::size_t n = 0;
  for (const auto &t : manifest(arch))
    if (!is_running_stat(t.name))
      n += t.size();
  return n;
}

struct Tensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  friend bool operator==(const Tensor &, const Tensor &) = default;
};

struct ModelWeights {
  std::string arch_id;
  std::vector<Tensor> tensors;
  /// CRC-32 of the serialized payload; filled by save/load.
  std::uint32_t checksum = 0;

  const ArchSpec &arch() const { return arch_by_id(arch_id); }

  const Tensor &tensor(const std::string &name) const {
    for (const auto &t : tensors)
      if (t.name == name)
        return t;
    throw ManifestError(name, "not present");
  }
};

/// Checks names, order and dims against the manifest.
inline void validate(const ModelWeights &w) {
  const auto m = manifest(arch_by_id(w.arch_id));
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (i >= w.tensors.size())
      throw ManifestError(m[i].name, "missing");
    const auto &t = w.tensors[i];
    if (t.name != m[i].name)
      throw ManifestError(m[i].name, "found '" + t.name + "' in its place");
    if (t.dims != m[i].dims)
      throw ManifestError(m[i].name, "dims do not match the manifest");
    if (t.values.size() != m[i].size())
      throw ManifestError(m[i].name, "value count does not match dims");
  }
  if (w.tensors.size() > m.size())
    throw ManifestError(w.tensors[m.size()].name, "not in the manifest");
}

/// Kaiming-uniform fan-in weights from the portable PRNG.
///
/// Tensors are filled in manifest order from one SplitMix64(seed, INIT)
/// stream, each value v = bound * (2u - 1) with u = uniform01(), computed in
/// double and rounded to float. bound = sqrt(6 / fan_in) for conv and affine
/// weights, 1 / sqrt(fan_in) for their biases. Batch norm starts at the
/// identity (gamma 1, beta 0, mean 0, var 1) and draws nothing.
inline ModelWeights init_weights(std::uint64_t seed,
                                 const ArchSpec &arch = pbcnn_v1()) {
  SplitMix64 rng(seed, stream::init);
  ModelWeights w;
  w.arch_id = arch.id;
  for (const auto &spec : manifest(arch)) {
    Tensor t{spec.name, spec.dims, std::vector<float>(spec.size())};
    const auto &n = spec.name;
    auto fill_uniform = [&](double bound) {
      for (auto &v : t.values)
        v = static_cast<float>(bound * (2.0 * rng.uniform01() - 1.0));
    };
    if (n.ends_with("bn.weight") || n.ends_with("bn.running_var")) {
      std::fill(t.values.begin(), t.values.end(), 1.0f);
    } else if (n.ends_with("bn.bias") || n.ends_with("bn.running_mean")) {
      // zeros
    } else if (n.ends_with(".weight")) {
      std::size_t fan_in = 1;
      for (std::size_t d = 1; d < spec.dims.size(); ++d)
        fan_in *= spec.dims[d];
      fill_uniform(std::sqrt(6.0 / static_cast<double>(fan_in)));
    } else {
      // Bias: fan_in of the paired weight tensor.
      const auto &weight = manifest(arch);
      std::size_t fan_in = 1;
      const auto stem = n.substr(0, n.size() - 4) + "weight";
      for (const auto &ws : weight)
        if (ws.name == stem) {
          fan_in = ws.size() / ws.dims[0];
          break;
        }
      fill_uniform(1.0 / std::sqrt(static_cast<double>(fan_in)));
    }
    w.tensors.push_back(std::move(t));
  }
  return w;
}

// ---------------------------------------------------------------------------
// PBW1 weight file, little-endian:
//
//   "PBW1" | u32 version (1) | u16 len, arch_id | u32 tensor count |
//   per tensor: u16 len, name | u8 ndim | u32 dims[ndim] | f32 values |
//   u32 CRC-32 (IEEE, zlib) of every preceding byte.

inline constexpr std::uint32_t kPbwVersion = 1;

inline std::uint32_t crc32_of(std::span<const unsigned char> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  constexpr std::size_t chunk = 1u << 30;
  for (std::size_t off = 0; off < bytes.size(); off += chunk) {
    const auto n = std::min(chunk, bytes.size() - off);
    crc = crc32(crc, bytes.data() + off, static_cast<uInt>(n));
  }
  return static_cast<std::uint32_t>(crc);
}

inline std::string encode_pbw1(const ModelWeights &w) {
  validate(w);
  std::string out = "PBW1";
  detail::put_u32le(out, kPbwVersion);
  detail::put_u16le(out, static_cast<std::uint16_t>(w.arch_id.size()));
  out += w.arch_id;
  detail::put_u32le(out, static_cast<std::uint32_t>(w.tensors.size()));
  for (const auto &t : w.tensors) {
    detail::put_u16le(out, static_cast<std::uint16_t>(t.name.size()));
    out += t.name;
    out.push_back(static_cast<char>(t.dims.size()));
    for (auto d : t.dims)
      detail::put_u32le(out, d);
    for (float v : t.values) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      detail::put_u32le(out, bits);
    }
  }
  const auto crc = crc32_of(
      {reinterpret_cast<const unsigned char *>(out.data()), out.size()});
  detail::put_u32le(out, crc);
  return out;
}

inline ModelWeights decode_pbw1(const std::string &bytes) {
  const auto *p = reinterpret_cast<const unsigned char *>(bytes.data());
  const std::size_t n = bytes.size();
  if (n < 4 || std::memcmp(p, "PBW1", 4) != 0)
    throw BadMagicError("weights: bad magic (expected PBW1)");
  if (n < 8)
    throw ChecksumError("weights: file too short to hold a checksum");
  const std::size_t payload = n - 4;
  const auto stored = detail::read_u32le(p + payload);
  const auto actual = crc32_of({p, payload});
  if (stored != actual)
    throw ChecksumError("weights: CRC-32 mismatch (file truncated or corrupt)");

  std::size_t pos = 4;
  auto need = [&](std::size_t k) {
    if (pos + k > payload)
      throw FormatError("weights: record overruns payload");
  };
  auto u8 = [&] { need(1); return p[pos++]; };
  auto u16 = [&] { need(2); auto v = detail::read_u16le(p + pos); pos += 2; return v; };
  auto u32 = [&] { need(4); auto v = detail::read_u32le(p + pos); pos += 4; return v; };
  auto str = [&](std::size_t len) {
    need(len);
    std::string s(bytes.data() + pos, len);
    pos += len;
    return s;
  };

  const auto version = u32();
  if (version != kPbwVersion)
    throw FormatError("weights: unsupported version " + std::to_string(version));
  ModelWeights w;
  w.arch_id = str(u16());
  const auto count = u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    Tensor t;
    t.name = str(u16());
    const auto ndim = u8();
    std::size_t size = 1;
    for (unsigned d = 0; d < ndim; ++d) {
      t.dims.push_back(u32());
      size *= t.dims.back();
    }
    need(4 * size);
    t.values.resize(size);
    for (auto &v : t.values) {
      const auto bits = detail::read_u32le(p + pos);
      pos += 4;
      std::memcpy(&v, &bits, 4);
      if (!std::isfinite(v))
        throw FormatError("weights: non-finite value in '" + t.name + "'");
    }
    w.tensors.push_back(std::move(t));
  }
  if (pos != payload)
    throw FormatError("weights: trailing bytes after last tensor");
  validate(w);
  w.checksum = stored;
  return w;
}

inline void save_weights(const ModelWeights &w, const std::filesystem::path &path) {
  const auto bytes = encode_pbw1(w);
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw FormatError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline ModelWeights load_weights(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw FormatError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  return decode_pbw1(bytes);
}

} // namespace preblock
