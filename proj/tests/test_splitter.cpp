#include <gtest/gtest.h>

#include <set>

#include "oracles.hpp"
#include "preblock/fixtures.hpp"
#include "preblock/splitter.hpp"

using namespace preblock;

namespace {

std::vector<EpisodeGroup> random_groups(std::size_t n, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<EpisodeGroup> g;
  for (std::size_t i = 0; i < n; ++i) {
    const auto clips = 1 + rng.below(60);
    const auto events = rng.below(clips + 1);
    g.push_back({{"show" + std::to_string(i % 7), "ep" + std::to_string(i)},
                 clips,
                 static_cast<double>(events) / static_cast<double>(clips)});
  }
  return g;
}

// Largest remainder in exact rational arithmetic over percent fractions.
std::array<std::size_t, 3> allocate_oracle(std::size_t m, std::array<int, 3> pct) {
  std::array<std::size_t, 3> c{};
  std::array<std::size_t, 3> rem{};
  std::size_t used = 0;
  for (int i = 0; i < 3; ++i) {
    c[i] = m * pct[i] / 100;
    rem[i] = m * pct[i] % 100;
    used += c[i];
  }
  while (used < m) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (rem[i] > rem[best])
        best = i;
    ++c[best];
    rem[best] = 0;
    ++used;
  }
  return c;
}

// Whole assignment recomputed from the documented procedure.
std::map<GroupKey, Split> assign_oracle(std::vector<EpisodeGroup> g, std::uint64_t seed) {
  std::sort(g.begin(), g.end(), [](auto &a, auto &b) { return a.key < b.key; });
  std::vector<double> rates;
  for (auto &x : g)
    rates.push_back(x.event_rate);
  const double e1 = oracle::type7(rates, 0.25), e2 = oracle::type7(rates, 0.5),
               e3 = oracle::type7(rates, 0.75);
  std::map<GroupKey, Split> out;
  for (int q = 0; q < 4; ++q) {
    std::vector<GroupKey> members;
    for (auto &x : g) {
      const int bucket = x.event_rate <= e1 ? 0 : x.event_rate <= e2 ? 1
                                              : x.event_rate <= e3   ? 2
                                                                     : 3;
      if (bucket == q)
        members.push_back(x.key);
    }
    oracle::Splitmix rng{seed ^ (0x53504C5400000000ULL | static_cast<std::uint64_t>(q))};
    for (std::size_t i = members.size(); i > 1; --i)
      std::swap(members[i - 1], members[rng.below(i)]);
    const auto n = allocate_oracle(members.size(), {70, 15, 15});
    std::size_t pos = 0;
    for (int s = 0; s < 3; ++s)
      for (std::size_t k = 0; k < n[s]; ++k)
        out[members[pos++]] = static_cast<Split>(s);
  }
  return out;
}

} // namespace

TEST(Allocate, LargestRemainderWithSplitOrderTies) {
  EXPECT_EQ(detail::allocate(65, kDefaultFractions), (std::array<std::size_t, 3>{45, 10, 10}));
  EXPECT_EQ(detail::allocate(64, kDefaultFractions), (std::array<std::size_t, 3>{45, 10, 9}));
  EXPECT_EQ(detail::allocate(1, kDefaultFractions), (std::array<std::size_t, 3>{1, 0, 0}));
  EXPECT_EQ(detail::allocate(2, kDefaultFractions), (std::array<std::size_t, 3>{2, 0, 0}));
  EXPECT_EQ(detail::allocate(0, kDefaultFractions), (std::array<std::size_t, 3>{0, 0, 0}));
}

TEST(Allocate, MatchesRationalOracle) {
  for (std::size_t m = 0; m < 500; ++m)
    ASSERT_EQ(detail::allocate(m, kDefaultFractions), allocate_oracle(m, {70, 15, 15})) << m;
}

TEST(RateQuartiles, EdgeValuesGoToLowerQuartile) {
  std::vector<EpisodeGroup> g;
  for (double r : {0.0, 0.25, 0.5, 0.75, 1.0})
    g.push_back({{"s", std::to_string(r)}, 4, r});
  // Type-7 edges of {0,.25,.5,.75,1} are exactly .25, .5, .75.
  EXPECT_EQ(rate_quartiles(g), (std::vector<int>{0, 0, 1, 2, 3}));
}

TEST(AssignSplits, MatchesIndependentReimplementation) {
  for (std::uint64_t seed : {1ULL, 42ULL, 9001ULL}) {
    const auto g = random_groups(137, seed);
    ASSERT_EQ(assign_splits(g, kDefaultFractions, seed).groups, assign_oracle(g, seed));
  }
}

TEST(AssignSplits, InputOrderDoesNotMatter) {
  auto g = random_groups(80, 5);
  const auto a = assign_splits(g, kDefaultFractions, 42);
  std::reverse(g.begin(), g.end());
  EXPECT_EQ(assign_splits(g, kDefaultFractions, 42).groups, a.groups);
}

TEST(AssignSplits, SeedChangesAssignment) {
  const auto g = random_groups(80, 5);
  EXPECT_NE(assign_splits(g, kDefaultFractions, 42).groups,
            assign_splits(g, kDefaultFractions, 43).groups);
}

TEST(AssignSplits, EveryGroupExactlyOnceAndStratified) {
  const auto g = random_groups(258, 2);
  const auto a = assign_splits(g, kDefaultFractions, 42);
  EXPECT_EQ(a.groups.size(), 258u);
  const auto q = rate_quartiles(g);
  std::array<std::array<std::size_t, 3>, 4> per{};
  std::array<std::size_t, 4> size{};
  for (std::size_t i = 0; i < g.size(); ++i) {
    ++per[q[i]][static_cast<std::size_t>(a.at(g[i].key))];
    ++size[q[i]];
  }
  for (int k = 0; k < 4; ++k)
    EXPECT_EQ(per[k], detail::allocate(size[k], kDefaultFractions));
}

TEST(AssignSplits, RejectsBadInput) {
  EXPECT_THROW(assign_splits({}, kDefaultFractions, 1), ContractError);
  auto g = random_groups(4, 1);
  EXPECT_THROW(assign_splits(g, {0.5, 0.5, 0.0}, 1), ContractError);
  EXPECT_THROW(assign_splits(g, {0.5, 0.3, 0.3}, 1), ContractError);
  g.push_back(g.front());
  EXPECT_THROW(assign_splits(g, kDefaultFractions, 1), IntegrityError);
}

TEST(EpisodeGroups, RatesFromLabels) {
  const auto labeled = derive_corpus_labels(fixtures::synthetic_corpus({}), 80000);
  const auto groups = episode_groups(labeled);
  EXPECT_EQ(groups.size(), 12u);
  std::size_t clips = 0;
  for (const auto &g : groups) {
    clips += g.clip_count;
    std::size_t n = 0, e = 0;
    for (const auto &c : labeled)
      if (c.clip.show == g.key.first && c.clip.episode == g.key.second) {
        ++n;
        e += c.y_event;
      }
    EXPECT_EQ(n, g.clip_count);
    EXPECT_DOUBLE_EQ(g.event_rate, static_cast<double>(e) / static_cast<double>(n));
  }
  EXPECT_EQ(clips, labeled.size());
}

TEST(VerifySplit, TalliesAndMissingGroup) {
  const auto labeled = derive_corpus_labels(fixtures::synthetic_corpus({}), 80000);
  auto a = assign_splits(episode_groups(labeled), kDefaultFractions, 42);
  const auto r = verify_split(a, labeled);
  std::size_t groups = 0, clips = 0, valid = 0;
  for (const auto &s : r.splits) {
    groups += s.groups;
    clips += s.clips;
    valid += s.valid_preblock_clips;
  }
  EXPECT_EQ(groups, 12u);
  EXPECT_EQ(clips, labeled.size());
  EXPECT_EQ(valid, corpus_stats(labeled).retained_pairs);
  a.groups.erase(a.groups.begin());
  EXPECT_THROW(verify_split(a, labeled), IntegrityError);
}

TEST(SplitJson, RoundTripAndDuplicateDetection) {
  const auto a = assign_splits(random_groups(30, 3), kDefaultFractions, 42);
  const auto j = to_json(a);
  const auto b = split_from_json(j);
  EXPECT_EQ(b.groups, a.groups);
  EXPECT_EQ(b.seed, 42u);
  EXPECT_EQ(to_json(b).dump(), j.dump());
  auto dup = j;
  auto row = dup["assignments"][0];
  row["split"] = "test";
  dup["assignments"].push_back(row);
  EXPECT_THROW(split_from_json(dup), IntegrityError);
  auto bad = j;
  bad["assignments"][0]["split"] = "holdout";
  EXPECT_THROW(split_from_json(bad), FormatError);
  EXPECT_THROW(split_from_json(nlohmann::json::object()), FormatError);
}
