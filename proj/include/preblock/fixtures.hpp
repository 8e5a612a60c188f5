#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include "preblock/corpus_labels.hpp"
#include "preblock/csv.hpp"
#include "preblock/features.hpp"
#include "preblock/rng.hpp"
#include "preblock/wav.hpp"

// Deterministic synthetic corpora for tests, demos and the acceptance suite
// when the real metadata table is unavailable.
namespace preblock::fixtures {

struct CorpusSpec {
  std::size_t shows = 3;
  std::size_t episodes_per_show = 4;
  std::size_t min_clips = 8;
  std::size_t max_clips = 24;
  /// Probability that the gap to the next clip is short (<= 3 s).
  double short_gap_probability = 0.55;
  std::uint64_t seed = 7;
};

/// Clip metadata with per-episode severity so event rates spread across
/// quartiles. Offsets are in samples; clips are 3 s long.
inline std::vector<ClipRecord> synthetic_corpus(const CorpusSpec &spec) {
  std::vector<ClipRecord> out;
  for (std::size_t s = 0; s < spec.shows; ++s) {
    const std::string show = "Show" + std::string(1, static_cast<char>('A' + s % 26)) +
                             (s >= 26 ? std::to_string(s / 26) : "");
    for (std::size_t e = 0; e < spec.episodes_per_show; ++e) {
      SplitMix64 rng(spec.seed, stream::fixture | (s << 16) | e);
      const auto clips =
          spec.min_clips + rng.below(spec.max_clips - spec.min_clips + 1);
      const double severity = 0.05 + 0.6 * rng.uniform01();
      std::int64_t cursor = static_cast<std::int64_t>(rng.below(10 * kSampleRate));
      for (std::size_t c = 0; c < clips; ++c) {
        ClipRecord r;
        r.show = show;
        r.episode = std::to_string(e);
        r.clip_id = static_cast<std::int64_t>(c);
        r.start_sample = cursor;
        r.stop_sample = cursor + static_cast<std::int64_t>(kClipSamples);
        for (auto &count : r.counts) {
          const double u = rng.uniform01();
          count = u < severity * 0.25 ? 3 : u < severity * 0.5 ? 2 : u < severity ? 1 : 0;
        }
        const bool short_gap = rng.uniform01() < spec.short_gap_probability;
        const auto gap = short_gap
                             ? static_cast<std::int64_t>(rng.below(3 * kSampleRate + 1))
                             : static_cast<std::int64_t>(6 * kSampleRate +
                                                         rng.below(200 * kSampleRate));
        cursor = r.stop_sample + gap;
        out.push_back(std::move(r));
      }
    }
  }
  return out;
}

/// Writes records in the SEP-28k_labels.csv column layout.
inline void write_sep28k_csv(std::ostream &out, const std::vector<ClipRecord> &records) {
  out << "Show,EpId,ClipId,Start,Stop,Unsure,PoorAudioQuality,Prolongation,Block,"
         "SoundRep,WordRep,DifficultToUnderstand,Interjection,NoStutteredWords,"
         "NaturalPause,Music,NoSpeech\n";
  for (const auto &r : records) {
    const auto &k = r.counts;
    out << csv::escape(r.show) << ',' << csv::escape(r.episode) << ',' << r.clip_id
        << ',' << r.start_sample << ',' << r.stop_sample << ",0,0,"
        << k[index_of(Disfluency::prolongation)] << ','
        << k[index_of(Disfluency::block)] << ','
        << k[index_of(Disfluency::soundrep)] << ','
        << k[index_of(Disfluency::wordrep)] << ",0,"
        << k[index_of(Disfluency::interjection)] << ",0,0,0,0\n";
  }
}

/// Noise plus a few harmonics, deterministic in (seed, index).
inline Waveform synthetic_waveform(std::uint64_t seed, std::uint64_t index,
                                   std::size_t samples = kClipSamples) {
  SplitMix64 rng(seed, stream::fixture ^ (0xA0D10ULL << 24) ^ index);
  Waveform w;
  w.samples.resize(samples);
  const double f0 = 90.0 + 160.0 * rng.uniform01();
  const double amp = 0.05 + 0.3 * rng.uniform01();
  for (std::size_t n = 0; n < samples; ++n) {
    const double t = static_cast<double>(n) / kSampleRate;
    double v = 0.0;
    for (int h = 1; h <= 4; ++h)
      v += std::sin(2.0 * std::numbers::pi * f0 * h * t) / h;
    v = amp * v * (0.6 + 0.4 * std::sin(2.0 * std::numbers::pi * 3.0 * t));
    v += 0.02 * (2.0 * rng.uniform01() - 1.0);
    w.samples[n] = static_cast<float>(std::clamp(v, -1.0, 1.0));
  }
  return w;
}

} // namespace preblock::fixtures
