#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <iterator>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "preblock/csv.hpp"
#include "preblock/error.hpp"
#include "preblock/quantile.hpp"

namespace preblock {

inline constexpr int kSampleRate = 16000;

enum class Disfluency : int { prolongation, block, soundrep, wordrep, interjection };

inline constexpr std::array<Disfluency, 5> kDisfluencies = {
    Disfluency::prolongation, Disfluency::block, Disfluency::soundrep,
    Disfluency::wordrep, Disfluency::interjection};

/// Short name used in target names and JSON keys.
inline std::string_view short_name(Disfluency t) {
  switch (t) {
  case Disfluency::prolongation: return "prolong";
  case Disfluency::block: return "block";
  case Disfluency::soundrep: return "soundrep";
  case Disfluency::wordrep: return "wordrep";
  case Disfluency::interjection: return "interject";
  }
  return "?";
}

template <typename T> using PerType = std::array<T, kDisfluencies.size()>;

inline std::size_t index_of(Disfluency t) { return static_cast<std::size_t>(t); }

struct ClipRecord {
  std::string show;
  std::string episode;
  std::int64_t clip_id = 0;
  std::int64_t start_sample = 0;
  std::int64_t stop_sample = 0;
  PerType<int> counts{};

  friend bool operator==(const ClipRecord &, const ClipRecord &) = default;
};

/// "<show>_<episode>_<clip_id>", the SEP-28k clip file stem.
inline std::string clip_key(const ClipRecord &c) {
  return c.show + "_" + c.episode + "_" + std::to_string(c.clip_id);
}

using TypeFlags = PerType<bool>;

struct LabeledClip {
  ClipRecord clip;
  TypeFlags flags{};
  bool y_event = false;
  std::optional<bool> y_preblock;
  PerType<std::optional<bool>> y_preblock_per_type{};
  bool valid_preblock = false;
  std::optional<std::int64_t> gap_samples;

  friend bool operator==(const LabeledClip &, const LabeledClip &) = default;
};

struct GapPercentiles {
  double median = 0, p90 = 0, p99 = 0;
};

struct CorpusStats {
  std::size_t clips = 0;
  std::size_t candidate_pairs = 0;
  std::size_t retained_pairs = 0;
  std::optional<GapPercentiles> gap_seconds;
  /// Keys: "event", "preblock", "preblock_<type>". Absent when the
  /// population is empty.
  std::map<std::string, std::optional<double>> positive_rates;
};

enum class OffsetUnit { samples, milliseconds };

/// Column names for parse_clip_table. Defaults follow SEP-28k_labels.csv.
struct ClipSchema {
  std::string show = "Show";
  std::string episode = "EpId";
  std::string clip_id = "ClipId";
  std::string start = "Start";
  std::string stop = "Stop";
  PerType<std::string> type_columns = {"Prolongation", "Block", "SoundRep",
                                       "WordRep", "Interjection"};
  OffsetUnit offset_unit = OffsetUnit::samples;
  int annotators = 3;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t'))
    s.remove_suffix(1);
  return s;
}

inline std::int64_t parse_int(std::string_view text, std::size_t row,
                              const std::string &column) {
  const auto s = trim(text);
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw RowError(row, "column '" + column + "' is not an integer: '" +
                            std::string(text) + "'");
  return v;
}

} // namespace detail

/// Reads a clip metadata table. Extra columns are ignored; row order is kept.
inline std::vector<ClipRecord> parse_clip_table(std::istream &in,
                                                const ClipSchema &schema = {}) {
  csv::Reader reader(in);
  std::vector<std::string> header;
  if (!reader.next(header))
    throw FormatError("clip table has no header row");
  for (auto &h : header)
    h = std::string(detail::trim(h));

  auto column = [&](const std::string &name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw SchemaError(name);
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto c_show = column(schema.show);
  const auto c_episode = column(schema.episode);
  const auto c_clip = column(schema.clip_id);
  const auto c_start = column(schema.start);
  const auto c_stop = column(schema.stop);
  PerType<std::size_t> c_types{};
  for (auto t : kDisfluencies)
    c_types[index_of(t)] = column(schema.type_columns[index_of(t)]);

  const std::int64_t unit_scale =
      schema.offset_unit == OffsetUnit::milliseconds ? kSampleRate / 1000 : 1;

  std::vector<ClipRecord> out;
  std::set<std::tuple<std::string, std::string, std::int64_t>> seen;
  std::vector<std::string> fields;
  for (std::size_t row = 0; reader.next(fields); ++row) {
    if (fields.size() == 1 && fields[0].empty()) // blank line
      continue;
    if (fields.size() != header.size())
      throw RowError(row, "expected " + std::to_string(header.size()) +
                              " fields, found " + std::to_string(fields.size()));
    ClipRecord rec;
    rec.show = std::string(detail::trim(fields[c_show]));
    rec.episode = std::string(detail::trim(fields[c_episode]));
    rec.clip_id = detail::parse_int(fields[c_clip], row, schema.clip_id);
    rec.start_sample =
        detail::parse_int(fields[c_start], row, schema.start) * unit_scale;
    rec.stop_sample =
        detail::parse_int(fields[c_stop], row, schema.stop) * unit_scale;
    if (rec.start_sample < 0)
      throw RowError(row, "negative start offset");
    if (rec.stop_sample <= rec.start_sample)
      throw RowError(row, "stop offset must exceed start offset");
    for (auto t : kDisfluencies) {
      const auto &name = schema.type_columns[index_of(t)];
      const auto v = detail::parse_int(fields[c_types[index_of(t)]], row, name);
      if (v < 0 || v > schema.annotators)
        throw RowError(row, "count in column '" + name + "' outside 0.." +
                                std::to_string(schema.annotators));
      rec.counts[index_of(t)] = static_cast<int>(v);
    }
    if (!seen.emplace(rec.show, rec.episode, rec.clip_id).second)
      throw IntegrityError("duplicate clip (" + rec.show + ", " + rec.episode +
                           ", " + std::to_string(rec.clip_id) + ") at row " +
                           std::to_string(row));
    out.push_back(std::move(rec));
  }
  return out;
}

/// flag[t] = counts[t] >= threshold.
inline TypeFlags binarize(const PerType<int> &counts, int threshold) {
  if (threshold < 1)
    throw ContractError("binarize threshold must be >= 1");
  TypeFlags flags{};
  for (std::size_t i = 0; i < counts.size(); ++i)
    flags[i] = counts[i] >= threshold;
  return flags;
}

/// Event = Block or SoundRep or Prolongation (fillers and word repetitions
/// excluded).
inline bool is_event(const TypeFlags &flags) {
  return flags[index_of(Disfluency::block)] ||
         flags[index_of(Disfluency::soundrep)] ||
         flags[index_of(Disfluency::prolongation)];
}

inline constexpr std::int64_t kDefaultGapLimitSamples = 5 * kSampleRate;

/// Labels one episode. Input must share (show, episode) and be sorted by
/// strictly ascending clip_id.
inline std::vector<LabeledClip>
derive_labels(std::span<const ClipRecord> episode_clips,
              std::int64_t gap_limit_samples, int threshold = 2) {
  std::vector<LabeledClip> out;
  out.reserve(episode_clips.size());
  for (std::size_t i = 0; i < episode_clips.size(); ++i) {
    const auto &c = episode_clips[i];
    if (i > 0) {
      const auto &prev = episode_clips[i - 1];
      if (c.show != prev.show || c.episode != prev.episode)
        throw ContractError("derive_labels: clips from more than one episode");
      if (c.clip_id == prev.clip_id)
        throw IntegrityError("derive_labels: duplicate clip_id " +
                             std::to_string(c.clip_id) + " in " + c.show + "/" +
                             c.episode);
      if (c.clip_id < prev.clip_id)
        throw ContractError("derive_labels: clips not sorted by clip_id in " +
                            c.show + "/" + c.episode);
    }
    LabeledClip lc;
    lc.clip = c;
    lc.flags = binarize(c.counts, threshold);
    lc.y_event = is_event(lc.flags);
    out.push_back(std::move(lc));
  }
  for (std::size_t i = 0; i + 1 < out.size(); ++i) {
    auto &cur = out[i];
    const auto &next = out[i + 1];
    const auto gap = std::max<std::int64_t>(
        0, next.clip.start_sample - cur.clip.stop_sample);
    cur.gap_samples = gap;
    cur.y_preblock = next.y_event;
    for (auto t : kDisfluencies)
      cur.y_preblock_per_type[index_of(t)] = next.flags[index_of(t)];
    cur.valid_preblock = gap <= gap_limit_samples;
  }
  return out;
}

/// Groups records by (show, episode), sorts each episode by clip_id and
/// labels it. Output is in canonical (show, episode, clip_id) order, so any
/// permutation of the input yields the same result.
inline std::vector<LabeledClip>
derive_corpus_labels(std::vector<ClipRecord> records,
                     std::int64_t gap_limit_samples, int threshold = 2) {
  std::sort(records.begin(), records.end(), [](const auto &a, const auto &b) {
    return std::tie(a.show, a.episode, a.clip_id) <
           std::tie(b.show, b.episode, b.clip_id);
  });
  std::vector<LabeledClip> out;
  out.reserve(records.size());
  std::size_t begin = 0;
  while (begin < records.size()) {
    std::size_t end = begin + 1;
    while (end < records.size() && records[end].show == records[begin].show &&
           records[end].episode == records[begin].episode)
      ++end;
    auto labeled = derive_labels(
        std::span<const ClipRecord>(records).subspan(begin, end - begin),
        gap_limit_samples, threshold);
    std::move(labeled.begin(), labeled.end(), std::back_inserter(out));
    begin = end;
  }
  return out;
}

/// Target names in report order.
inline std::vector<std::string> preblock_targets() {
  std::vector<std::string> names{"preblock"};
  for (auto t : {Disfluency::block, Disfluency::soundrep,
                 Disfluency::prolongation, Disfluency::wordrep,
                 Disfluency::interjection})
    names.push_back("preblock_" + std::string(short_name(t)));
  return names;
}

/// Label of a preblock target ("preblock" or "preblock_<type>") for a clip.
inline std::optional<bool> preblock_label(const LabeledClip &c,
                                          std::string_view target) {
  if (target == "preblock")
    return c.y_preblock;
  for (auto t : kDisfluencies)
    if (target == "preblock_" + std::string(short_name(t)))
      return c.y_preblock_per_type[index_of(t)];
  throw ContractError("unknown target '" + std::string(target) + "'");
}

inline CorpusStats corpus_stats(std::span<const LabeledClip> labeled) {
  CorpusStats s;
  s.clips = labeled.size();
  std::vector<double> gaps;
  std::size_t events = 0;
  std::map<std::string, std::size_t> positives;
  const auto targets = preblock_targets();
  for (const auto &c : labeled) {
    events += c.y_event;
    if (c.gap_samples) {
      ++s.candidate_pairs;
      gaps.push_back(static_cast<double>(*c.gap_samples) / kSampleRate);
    }
    if (c.valid_preblock) {
      ++s.retained_pairs;
      for (const auto &t : targets)
        positives[t] += preblock_label(c, t).value_or(false);
    }
  }
  auto rate = [](std::size_t num, std::size_t den) -> std::optional<double> {
    if (den == 0)
      return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  s.positive_rates["event"] = rate(events, s.clips);
  for (const auto &t : targets)
    s.positive_rates[t] = rate(positives[t], s.retained_pairs);
  if (!gaps.empty()) {
    std::sort(gaps.begin(), gaps.end());
    s.gap_seconds = GapPercentiles{quantile_sorted(gaps, 0.5),
                                   quantile_sorted(gaps, 0.9),
                                   quantile_sorted(gaps, 0.99)};
  }
  return s;
}

// ---------------------------------------------------------------------------
// Serialization: one JSON object per LabeledClip (JSON lines), and a stats
// document. Field names are stable; readers in other languages rely on them.

inline nlohmann::json to_json(const LabeledClip &c) {
  using nlohmann::json;
  json counts = json::object(), flags = json::object(),
       per_type = json::object();
  for (auto t : kDisfluencies) {
    const auto name = std::string(short_name(t));
    counts[name] = c.clip.counts[index_of(t)];
    flags[name] = c.flags[index_of(t)];
    const auto &y = c.y_preblock_per_type[index_of(t)];
    per_type[name] = y ? json(*y) : json(nullptr);
  }
  return json{{"clip_key", clip_key(c.clip)},
              {"show", c.clip.show},
              {"episode", c.clip.episode},
              {"clip_id", c.clip.clip_id},
              {"start_sample", c.clip.start_sample},
              {"stop_sample", c.clip.stop_sample},
              {"counts", counts},
              {"flags", flags},
              {"y_event", c.y_event},
              {"y_preblock", c.y_preblock ? json(*c.y_preblock) : json(nullptr)},
              {"y_preblock_type", per_type},
              {"valid_preblock", c.valid_preblock},
              {"gap_samples",
               c.gap_samples ? json(*c.gap_samples) : json(nullptr)}};
}

inline LabeledClip labeled_clip_from_json(const nlohmann::json &j) {
  try {
    LabeledClip c;
    c.clip.show = j.at("show").get<std::string>();
    c.clip.episode = j.at("episode").get<std::string>();
    c.clip.clip_id = j.at("clip_id").get<std::int64_t>();
    c.clip.start_sample = j.at("start_sample").get<std::int64_t>();
    c.clip.stop_sample = j.at("stop_sample").get<std::int64_t>();
    for (auto t : kDisfluencies) {
      const auto name = std::string(short_name(t));
      c.clip.counts[index_of(t)] = j.at("counts").at(name).get<int>();
      c.flags[index_of(t)] = j.at("flags").at(name).get<bool>();
      const auto &y = j.at("y_preblock_type").at(name);
      if (!y.is_null())
        c.y_preblock_per_type[index_of(t)] = y.get<bool>();
    }
    c.y_event = j.at("y_event").get<bool>();
    if (!j.at("y_preblock").is_null())
      c.y_preblock = j.at("y_preblock").get<bool>();
    c.valid_preblock = j.at("valid_preblock").get<bool>();
    if (!j.at("gap_samples").is_null())
      c.gap_samples = j.at("gap_samples").get<std::int64_t>();
    return c;
  } catch (const nlohmann::json::exception &e) {
    throw FormatError(std::string("label record: ") + e.what());
  }
}

inline void write_labels_jsonl(std::ostream &out,
                               std::span<const LabeledClip> labeled) {
  for (const auto &c : labeled)
    out << to_json(c).dump() << '\n';
}

inline std::vector<LabeledClip> read_labels_jsonl(std::istream &in) {
  std::vector<LabeledClip> out;
  std::string line;
  for (std::size_t n = 0; std::getline(in, line); ++n) {
    if (line.empty())
      continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error &e) {
      throw RowError(n, std::string("invalid JSON: ") + e.what());
    }
    out.push_back(labeled_clip_from_json(j));
  }
  return out;
}

inline nlohmann::json to_json(const CorpusStats &s) {
  using nlohmann::json;
  json rates = json::object();
  for (const auto &[k, v] : s.positive_rates)
    rates[k] = v ? json(*v) : json(nullptr);
  json gaps = nullptr;
  if (s.gap_seconds)
    gaps = json{{"median", s.gap_seconds->median},
                {"p90", s.gap_seconds->p90},
                {"p99", s.gap_seconds->p99}};
  return json{{"clips", s.clips},
              {"candidate_pairs", s.candidate_pairs},
              {"retained_pairs", s.retained_pairs},
              {"gap_seconds", gaps},
              {"positive_rates", rates}};
}

} // namespace preblock
