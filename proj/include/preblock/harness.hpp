#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "preblock/calibration.hpp"
#include "preblock/error.hpp"
#include "preblock/features.hpp"
#include "preblock/model.hpp"
#include "preblock/quantile.hpp"
#include "preblock/rng.hpp"

namespace preblock {

/// Real-time allowance per decision at the 4 Hz rate.
inline constexpr double kBudgetMs = 250.0;

using Nanoseconds = std::int64_t;
using Clock = std::function<Nanoseconds()>;

inline Nanoseconds monotonic_now() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

struct LatencyStats {
  double mean_ms = 0, median_ms = 0, p95_ms = 0, std_ms = 0;
  std::size_t trials = 0;
  std::size_t warmup = 0;
  double budget_utilization = 0; // mean / 250 ms
  std::vector<Nanoseconds> trial_ns;
};

/// Statistics over a recorded trial list (warmup already excluded):
/// population std, type-7 median and P95.
inline LatencyStats latency_stats(std::vector<Nanoseconds> trial_ns,
                                  std::size_t warmup = 0) {
  if (trial_ns.empty())
    throw ContractError("latency_stats: no trials");
  LatencyStats s;
  s.trials = trial_ns.size();
  s.warmup = warmup;
  std::vector<double> ms;
  ms.reserve(trial_ns.size());
  for (auto ns : trial_ns)
    ms.push_back(static_cast<double>(ns) / 1e6);
  const double n = static_cast<double>(ms.size());
  double sum = 0;
  for (double v : ms)
    sum += v;
  s.mean_ms = sum / n;
  double sq = 0;
  for (double v : ms)
    sq += (v - s.mean_ms) * (v - s.mean_ms);
  s.std_ms = std::sqrt(sq / n);
  std::sort(ms.begin(), ms.end());
  s.median_ms = quantile_sorted(ms, 0.5);
  s.p95_ms = quantile_sorted(ms, 0.95);
  s.budget_utilization = s.mean_ms / kBudgetMs;
  s.trial_ns = std::move(trial_ns);
  return s;
}

struct StreamEvent {
  std::size_t window_index = 0;
  double window_start_s = 0;
  double p_preblock = 0; // calibrated when a calibration is supplied
  double latency_ms = 0;
};

struct StreamOptions {
  std::size_t window_samples = 3 * kFeatureSampleRate;
  std::size_t hop_samples = kFeatureSampleRate / 4;
};

/// 1 + floor((len - window) / hop) for len >= window.
inline std::size_t stream_window_count(std::size_t samples,
                                       const StreamOptions &opt = {}) {
  if (samples < opt.window_samples)
    throw ContractError("stream: waveform of " + std::to_string(samples) +
                        " samples is shorter than the " +
                        std::to_string(opt.window_samples) + "-sample window");
  return 1 + (samples - opt.window_samples) / opt.hop_samples;
}

struct StreamResult {
  std::vector<StreamEvent> events;
  LatencyStats latency;
};

/// Rolling-window scoring. Every window is featurized and scored from
/// scratch; its latency covers featurize + forward + calibrate.
inline StreamResult stream_simulate(const Waveform &wave, const CnnModel &model,
                                    const std::optional<CalibrationModel> &cal,
                                    const StreamOptions &opt = {},
                                    const Clock &clock = monotonic_now) {
  if (wave.sample_rate != kFeatureSampleRate)
    throw ContractError("stream: expected a 16 kHz waveform");
  if (opt.hop_samples == 0)
    throw ContractError("stream: hop must be positive");
  const std::size_t windows = stream_window_count(wave.samples.size(), opt);
  StreamResult r;
  std::vector<Nanoseconds> ns;
  Waveform window;
  window.sample_rate = wave.sample_rate;
  for (std::size_t w = 0; w < windows; ++w) {
    const auto first = wave.samples.begin() +
                       static_cast<std::ptrdiff_t>(w * opt.hop_samples);
    window.samples.assign(first, first + static_cast<std::ptrdiff_t>(opt.window_samples));
    const auto t0 = clock();
    const auto logits = model.forward(featurize(window));
    const double p = cal ? apply(*cal, logits.preblock_logit)
                         : sigmoid(logits.preblock_logit);
    const auto t1 = clock();
    ns.push_back(t1 - t0);
    r.events.push_back({w,
                        static_cast<double>(w * opt.hop_samples) / wave.sample_rate,
                        p, static_cast<double>(t1 - t0) / 1e6});
  }
  r.latency = latency_stats(std::move(ns));
  return r;
}

/// Deterministic normalized random spectrograms (standard-normal-like cells
/// from the FIXT stream; uniform sum of 4 draws, centred and scaled).
inline std::vector<FeatureTensor>
random_spectrograms(std::size_t count, std::uint64_t seed,
                    std::size_t rows = kMelBins, std::size_t cols = kClipFrames) {
  std::vector<FeatureTensor> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SplitMix64 rng(seed, stream::fixture | static_cast<std::uint64_t>(i));
    FeatureTensor f(rows, cols);
    for (auto &v : f.data) {
      double s = 0;
      for (int k = 0; k < 4; ++k)
        s += rng.uniform01();
      v = static_cast<float>((s - 2.0) * std::sqrt(3.0));
    }
    f.normalized = true;
    out.push_back(std::move(f));
  }
  return out;
}

/// Forward-pass timing: warmup calls are run and discarded, then one timed
/// forward per trial, cycling through the inputs.
inline LatencyStats latency_bench(const CnnModel &model, std::size_t trials,
                                  std::size_t warmup,
                                  std::span<const FeatureTensor> inputs,
                                  const Clock &clock = monotonic_now) {
  if (trials == 0)
    throw ContractError("latency_bench: trials must be >= 1");
  if (inputs.empty())
    throw ContractError("latency_bench: no inputs");
  volatile float sink = 0;
  for (std::size_t i = 0; i < warmup; ++i)
    sink = sink + model.forward(inputs[i % inputs.size()]).preblock_logit;
  std::vector<Nanoseconds> ns;
  ns.reserve(trials);
  for (std::size_t i = 0; i < trials; ++i) {
    const auto &x = inputs[i % inputs.size()];
    const auto t0 = clock();
    const auto logits = model.forward(x);
    const auto t1 = clock();
    sink = sink + logits.preblock_logit;
    ns.push_back(t1 - t0);
  }
  return latency_stats(std::move(ns), warmup);
}

// ---------------------------------------------------------------------------
// Parity between two logit dumps.

struct ParityEntry {
  std::string clip_key;
  double event_delta = 0;
  double preblock_delta = 0;
  double max_delta() const { return std::max(event_delta, preblock_delta); }
};

struct ParityReport {
  std::size_t clips = 0;
  double max_event = 0, max_preblock = 0;
  double mean_event = 0, mean_preblock = 0;
  double tolerance = 5e-2;
  bool pass = true;
  std::vector<ParityEntry> worst; // up to 5, largest first
};

inline constexpr double kParitySanityTolerance = 5e-2;

/// Per-head max and mean |delta| over matching clip keys; PASS iff both
/// maxima are <= tolerance.
inline ParityReport parity_check(std::span<const LogitRow> a,
                                 std::span<const LogitRow> b,
                                 double tolerance = kParitySanityTolerance) {
  std::map<std::string, HeadLogits> rhs;
  for (const auto &r : b)
    if (!rhs.emplace(r.clip_key, r.logits).second)
      throw IntegrityError("parity: duplicate clip key '" + r.clip_key + "'");
  std::map<std::string, HeadLogits> lhs;
  for (const auto &r : a)
    if (!lhs.emplace(r.clip_key, r.logits).second)
      throw IntegrityError("parity: duplicate clip key '" + r.clip_key + "'");

  std::vector<std::string> only_a, only_b;
  for (const auto &[k, v] : lhs)
    if (!rhs.count(k))
      only_a.push_back(k);
  for (const auto &[k, v] : rhs)
    if (!lhs.count(k))
      only_b.push_back(k);
  if (!only_a.empty() || !only_b.empty()) {
    std::string msg = "parity: clip keys differ;";
    for (std::size_t i = 0; i < only_a.size() && i < 5; ++i)
      msg += " only in first: " + only_a[i] + ";";
    for (std::size_t i = 0; i < only_b.size() && i < 5; ++i)
      msg += " only in second: " + only_b[i] + ";";
    throw IntegrityError(msg);
  }

  ParityReport r;
  r.tolerance = tolerance;
  std::vector<ParityEntry> entries;
  for (const auto &[k, x] : lhs) {
    const auto &y = rhs.at(k);
    ParityEntry e{k,
                  std::abs(static_cast<double>(x.event_logit) - y.event_logit),
                  std::abs(static_cast<double>(x.preblock_logit) - y.preblock_logit)};
    r.max_event = std::max(r.max_event, e.event_delta);
    r.max_preblock = std::max(r.max_preblock, e.preblock_delta);
    r.mean_event += e.event_delta;
    r.mean_preblock += e.preblock_delta;
    entries.push_back(std::move(e));
  }
  r.clips = entries.size();
  if (r.clips) {
    r.mean_event /= static_cast<double>(r.clips);
    r.mean_preblock /= static_cast<double>(r.clips);
  }
  // NaN deltas fail the check.
  r.pass = r.max_event <= tolerance && r.max_preblock <= tolerance;
  for (const auto &e : entries)
    if (!(e.max_delta() <= tolerance))
      r.pass = false;
  std::stable_sort(entries.begin(), entries.end(), [](const auto &x, const auto &y) {
    return x.max_delta() > y.max_delta();
  });
  entries.resize(std::min<std::size_t>(entries.size(), 5));
  r.worst = std::move(entries);
  return r;
}

// ---------------------------------------------------------------------------
// Serialization

/// Milliseconds rounded to 3 decimals for reports.
inline double round_ms(double ms) { return std::round(ms * 1000.0) / 1000.0; }

inline nlohmann::json to_json(const LatencyStats &s) {
  return {{"trials", s.trials},
          {"warmup", s.warmup},
          {"mean_ms", round_ms(s.mean_ms)},
          {"median_ms", round_ms(s.median_ms)},
          {"p95_ms", round_ms(s.p95_ms)},
          {"std_ms", round_ms(s.std_ms)},
          {"budget_ms", kBudgetMs},
          {"budget_utilization", s.budget_utilization}};
}

inline void write_trials_csv(std::ostream &out, std::span<const Nanoseconds> ns) {
  out << "trial,latency_ns\n";
  for (std::size_t i = 0; i < ns.size(); ++i)
    out << i << ',' << ns[i] << '\n';
}

inline nlohmann::json to_json(const StreamResult &r) {
  nlohmann::json events = nlohmann::json::array();
  for (const auto &e : r.events)
    events.push_back({{"window_index", e.window_index},
                      {"window_start_s", e.window_start_s},
                      {"p_preblock", e.p_preblock},
                      {"latency_ms", round_ms(e.latency_ms)}});
  return {{"windows", r.events.size()}, {"latency", to_json(r.latency)}, {"events", events}};
}

inline nlohmann::json to_json(const ParityReport &r) {
  nlohmann::json worst = nlohmann::json::array();
  for (const auto &e : r.worst)
    worst.push_back({{"clip_key", e.clip_key},
                     {"event_delta", e.event_delta},
                     {"preblock_delta", e.preblock_delta}});
  return {{"clips", r.clips},
          {"max_abs_delta", {{"event", r.max_event}, {"preblock", r.max_preblock}}},
          {"mean_abs_delta", {{"event", r.mean_event}, {"preblock", r.mean_preblock}}},
          {"tolerance", r.tolerance},
          {"pass", r.pass},
          {"worst", worst}};
}

} // namespace preblock
