#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "preblock/corpus_labels.hpp"
#include "preblock/error.hpp"
#include "preblock/quantile.hpp"
#include "preblock/rng.hpp"

namespace preblock {

enum class Split : int { train, val, test };

inline constexpr std::array<Split, 3> kSplits = {Split::train, Split::val,
                                                 Split::test};

inline std::string_view split_name(Split s) {
  switch (s) {
  case Split::train: return "train";
  case Split::val: return "val";
  case Split::test: return "test";
  }
  return "?";
}

inline Split parse_split(std::string_view name) {
  for (auto s : kSplits)
    if (split_name(s) == name)
      return s;
  throw FormatError("unknown split '" + std::string(name) + "'");
}

using GroupKey = std::pair<std::string, std::string>; // (show, episode)

struct EpisodeGroup {
  GroupKey key;
  std::size_t clip_count = 0;
  double event_rate = 0.0;
};

using SplitFractions = std::array<double, 3>;
inline constexpr SplitFractions kDefaultFractions = {0.70, 0.15, 0.15};
inline constexpr std::uint64_t kDefaultSeed = 42;

struct SplitAssignment {
  std::map<GroupKey, Split> groups;
  std::uint64_t seed = kDefaultSeed;
  SplitFractions fractions = kDefaultFractions;

  Split at(const GroupKey &key) const {
    const auto it = groups.find(key);
    if (it == groups.end())
      throw IntegrityError("group (" + key.first + ", " + key.second +
                           ") has no split assignment");
    return it->second;
  }
};

inline std::vector<EpisodeGroup>
episode_groups(std::span<const LabeledClip> labeled) {
  std::map<GroupKey, std::pair<std::size_t, std::size_t>> tally;
  for (const auto &c : labeled) {
    auto &[n, events] = tally[{c.clip.show, c.clip.episode}];
    ++n;
    events += c.y_event;
  }
  std::vector<EpisodeGroup> out;
  out.reserve(tally.size());
  for (const auto &[key, t] : tally)
    out.push_back({key, t.first,
                   static_cast<double>(t.second) / static_cast<double>(t.first)});
  return out;
}

namespace detail {

// Fractions are compared as integers in millionths so the rounding does not
// depend on floating-point remainders.
inline constexpr std::int64_t kFractionScale = 1'000'000;

/// Largest-remainder allocation of m items; remainder ties go to the earlier
/// split (train, then val, then test).
inline std::array<std::size_t, 3> allocate(std::size_t m,
                                           const SplitFractions &fractions) {
  std::array<std::int64_t, 3> weight{};
  for (std::size_t i = 0; i < 3; ++i)
    weight[i] = std::llround(fractions[i] * kFractionScale);
  const std::int64_t total = weight[0] + weight[1] + weight[2];
  std::array<std::size_t, 3> count{};
  std::array<std::int64_t, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto quota = static_cast<std::int64_t>(m) * weight[i];
    count[i] = static_cast<std::size_t>(quota / total);
    remainder[i] = quota % total;
    assigned += count[i];
  }
  std::array<std::size_t, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    return remainder[a] > remainder[b];
  });
  for (std::size_t k = 0; assigned < m; ++k, ++assigned)
    ++count[order[k % 3]];
  return count;
}

} // namespace detail

/// Event-rate quartile index of each group. Edges are type-7 quantiles of
/// the group rates; a rate equal to an edge goes to the lower quartile.
inline std::vector<int> rate_quartiles(std::span<const EpisodeGroup> groups) {
  std::vector<double> rates;
  rates.reserve(groups.size());
  for (const auto &g : groups)
    rates.push_back(g.event_rate);
  std::sort(rates.begin(), rates.end());
  const std::array<double, 3> edges = {quantile_sorted(rates, 0.25),
                                       quantile_sorted(rates, 0.50),
                                       quantile_sorted(rates, 0.75)};
  std::vector<int> q;
  q.reserve(groups.size());
  for (const auto &g : groups) {
    int bucket = 0;
    while (bucket < 3 && g.event_rate > edges[bucket])
      ++bucket;
    q.push_back(bucket);
  }
  return q;
}

/// Episode-grouped split stratified by per-episode event-rate quartile.
/// Within each quartile the groups are put in key order, shuffled with the
/// quartile's PRNG stream, and the first n_train go to train, the next n_val
/// to val, the rest to test.
inline SplitAssignment assign_splits(std::vector<EpisodeGroup> groups,
                                     const SplitFractions &fractions,
                                     std::uint64_t seed) {
  if (groups.empty())
    throw ContractError("assign_splits: no groups");
  double sum = 0;
  for (double f : fractions) {
    if (!(f > 0.0))
      throw ContractError("assign_splits: fractions must be positive");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw ContractError("assign_splits: fractions must sum to 1");

  std::sort(groups.begin(), groups.end(),
            [](const auto &a, const auto &b) { return a.key < b.key; });
  for (std::size_t i = 1; i < groups.size(); ++i)
    if (groups[i].key == groups[i - 1].key)
      throw IntegrityError("assign_splits: duplicate group (" +
                           groups[i].key.first + ", " + groups[i].key.second +
                           ")");

  const auto quartile = rate_quartiles(groups);
  SplitAssignment out;
  out.seed = seed;
  out.fractions = fractions;
  for (int q = 0; q < 4; ++q) {
    std::vector<const GroupKey *> members;
    for (std::size_t i = 0; i < groups.size(); ++i)
      if (quartile[i] == q)
        members.push_back(&groups[i].key);
    SplitMix64 rng(seed, stream::split | static_cast<std::uint64_t>(q));
    shuffle(std::span(members), rng);
    const auto count = detail::allocate(members.size(), fractions);
    std::size_t pos = 0;
    for (std::size_t s = 0; s < 3; ++s)
      for (std::size_t k = 0; k < count[s]; ++k)
        out.groups[*members[pos++]] = kSplits[s];
  }
  return out;
}

struct SplitSummary {
  std::size_t groups = 0;
  std::size_t clips = 0;
  std::size_t valid_preblock_clips = 0;
  double event_rate = 0.0;
};

struct SplitReport {
  std::array<SplitSummary, 3> splits{};
};

/// Per-split tallies. Every clip's group must be assigned.
inline SplitReport verify_split(const SplitAssignment &assignment,
                                std::span<const LabeledClip> labeled) {
  SplitReport r;
  std::array<std::size_t, 3> events{};
  std::map<GroupKey, Split> used;
  for (const auto &c : labeled) {
    const GroupKey key{c.clip.show, c.clip.episode};
    const auto s = assignment.at(key);
    const auto i = static_cast<std::size_t>(s);
    used.emplace(key, s);
    ++r.splits[i].clips;
    r.splits[i].valid_preblock_clips += c.valid_preblock;
    events[i] += c.y_event;
  }
  for (const auto &[key, s] : used)
    ++r.splits[static_cast<std::size_t>(s)].groups;
  for (std::size_t i = 0; i < 3; ++i)
    r.splits[i].event_rate =
        r.splits[i].clips ? static_cast<double>(events[i]) /
                                static_cast<double>(r.splits[i].clips)
                          : 0.0;
  return r;
}

// Split document: {"seed", "fractions", "assignments": [{show, episode,
// split}, ...]} with assignments in key order.

inline nlohmann::json to_json(const SplitAssignment &a) {
  using nlohmann::json;
  json rows = json::array();
  for (const auto &[key, s] : a.groups)
    rows.push_back(
        {{"show", key.first}, {"episode", key.second}, {"split", split_name(s)}});
  return json{{"seed", a.seed},
              {"fractions", {a.fractions[0], a.fractions[1], a.fractions[2]}},
              {"assignments", rows}};
}

inline SplitAssignment split_from_json(const nlohmann::json &j) {
  SplitAssignment a;
  try {
    a.seed = j.at("seed").get<std::uint64_t>();
    const auto &f = j.at("fractions");
    if (f.size() != 3)
      throw FormatError("split document: fractions must have 3 entries");
    for (std::size_t i = 0; i < 3; ++i)
      a.fractions[i] = f.at(i).get<double>();
    for (const auto &row : j.at("assignments")) {
      GroupKey key{row.at("show").get<std::string>(),
                   row.at("episode").get<std::string>()};
      const auto s = parse_split(row.at("split").get<std::string>());
      const auto [it, fresh] = a.groups.emplace(key, s);
      if (!fresh)
        throw IntegrityError("split document: group (" + key.first + ", " +
                             key.second + ") assigned more than once");
    }
  } catch (const nlohmann::json::exception &e) {
    throw FormatError(std::string("split document: ") + e.what());
  }
  return a;
}

inline nlohmann::json to_json(const SplitReport &r) {
  nlohmann::json j = nlohmann::json::object();
  for (auto s : kSplits) {
    const auto &x = r.splits[static_cast<std::size_t>(s)];
    j[std::string(split_name(s))] = {{"groups", x.groups},
                                     {"clips", x.clips},
                                     {"valid_preblock_clips",
                                      x.valid_preblock_clips},
                                     {"event_rate", x.event_rate}};
  }
  return j;
}

} // namespace preblock
