#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <toml.hpp>

#include "preblock/ablation.hpp"
#include "preblock/calibration.hpp"
#include "preblock/corpus_labels.hpp"
#include "preblock/error.hpp"
#include "preblock/splitter.hpp"

namespace preblock {

struct RunPaths {
  std::optional<std::filesystem::path> metadata;
  std::optional<std::filesystem::path> audio_root;
  std::optional<std::filesystem::path> cache_dir;
  std::optional<std::filesystem::path> weights;
  std::optional<std::filesystem::path> labels;
  std::optional<std::filesystem::path> split;
  std::optional<std::filesystem::path> calibration;
  std::optional<std::filesystem::path> out_dir;
};

struct RunParams {
  std::int64_t gap_limit_samples = kDefaultGapLimitSamples;
  int threshold = 2;
  std::uint64_t seed = kDefaultSeed;
  std::size_t bootstrap_resamples = 2000;
  std::size_t ece_bins = kDefaultEceBins;
  std::vector<std::size_t> mask_sweep = default_mask_sweep();
  unsigned threads = 1;
};

struct RunConfig {
  RunPaths paths;
  RunParams params;
};

namespace detail {

template <typename T>
std::optional<T> toml_get(const toml::table &t, std::string_view section,
                          std::string_view key) {
  const auto node = t[section][key];
  if (!node)
    return std::nullopt;
  if (auto v = node.value<T>())
    return v;
  throw FormatError("config: [" + std::string(section) + "] " + std::string(key) +
                    " has the wrong type");
}

inline void reject_unknown(const toml::table &t) {
  static const std::set<std::string, std::less<>> paths = {
      "metadata", "audio_root", "cache_dir", "weights",
      "labels",   "split",      "calibration", "out_dir"};
  static const std::set<std::string, std::less<>> params = {
      "gap_limit_samples", "threshold", "seed", "bootstrap_resamples",
      "ece_bins",          "mask_sweep", "threads"};
  for (const auto &[section, node] : t) {
    const auto *allowed = section == "paths"    ? &paths
                          : section == "params" ? &params
                                                : nullptr;
    if (!allowed || !node.is_table())
      throw FormatError("config: unknown section '" + std::string(section.str()) +
                        "' (expected [paths] or [params])");
    for (const auto &[key, value] : *node.as_table())
      if (!allowed->count(key.str()))
        throw FormatError("config: unknown key '" + std::string(key.str()) +
                          "' in [" + std::string(section.str()) + "]");
  }
}

} // namespace detail

/// Parses a TOML run config with optional [paths] and [params] tables.
/// Relative paths resolve against base_dir. Missing keys keep defaults.
inline RunConfig parse_config(std::string_view text,
                              const std::filesystem::path &base_dir = {}) {
  toml::table t;
  try {
    t = toml::parse(text);
  } catch (const toml::parse_error &e) {
    std::ostringstream msg;
    msg << "config: " << e.description() << " at line " << e.source().begin.line;
    throw FormatError(msg.str());
  }
  detail::reject_unknown(t);
  RunConfig c;
  auto path = [&](std::string_view key, std::optional<std::filesystem::path> &out) {
    if (auto v = detail::toml_get<std::string>(t, "paths", key)) {
      std::filesystem::path p(*v);
      out = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    }
  };
  path("metadata", c.paths.metadata);
  path("audio_root", c.paths.audio_root);
  path("cache_dir", c.paths.cache_dir);
  path("weights", c.paths.weights);
  path("labels", c.paths.labels);
  path("split", c.paths.split);
  path("calibration", c.paths.calibration);
  path("out_dir", c.paths.out_dir);

  auto non_negative = [](std::int64_t v, std::string_view key) {
    if (v < 0)
      throw FormatError("config: [params] " + std::string(key) + " must be >= 0");
    return v;
  };
  auto &p = c.params;
  if (auto v = detail::toml_get<std::int64_t>(t, "params", "gap_limit_samples"))
    p.gap_limit_samples = non_negative(*v, "gap_limit_samples");
  if (auto v = detail::toml_get<std::int64_t>(t, "params", "threshold")) {
    if (*v < 1 || *v > 3)
      throw FormatError("config: [params] threshold must be in 1..3");
    p.threshold = static_cast<int>(*v);
  }
  if (auto v = detail::toml_get<std::int64_t>(t, "params", "seed"))
    p.seed = static_cast<std::uint64_t>(non_negative(*v, "seed"));
  if (auto v = detail::toml_get<std::int64_t>(t, "params", "bootstrap_resamples"))
    p.bootstrap_resamples = static_cast<std::size_t>(non_negative(*v, "bootstrap_resamples"));
  if (auto v = detail::toml_get<std::int64_t>(t, "params", "ece_bins"))
    p.ece_bins = static_cast<std::size_t>(non_negative(*v, "ece_bins"));
  if (auto v = detail::toml_get<std::int64_t>(t, "params", "threads"))
    p.threads = static_cast<unsigned>(non_negative(*v, "threads"));
  if (const auto *arr = t["params"]["mask_sweep"].as_array()) {
    p.mask_sweep.clear();
    for (const auto &e : *arr) {
      const auto v = e.value<std::int64_t>();
      if (!v)
        throw FormatError("config: [params] mask_sweep must hold integers");
      p.mask_sweep.push_back(static_cast<std::size_t>(non_negative(*v, "mask_sweep")));
    }
  } else if (t["params"]["mask_sweep"]) {
    throw FormatError("config: [params] mask_sweep must be an array");
  }
  return c;
}

inline RunConfig load_config(const std::filesystem::path &file) {
  std::ifstream in(file, std::ios::binary);
  if (!in)
    throw ContractError("config: cannot open " + file.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), file.parent_path());
}

} // namespace preblock
