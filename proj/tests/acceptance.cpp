// Acceptance suite: one PASS/FAIL line per criterion A1-A9.
//
// Usage: acceptance [A1 ... A9]   (no arguments runs all)
// Exit: 0 all PASS; 1 any FAIL; 77 when every FAIL is a criterion whose
// input data is unavailable (ctest reports it as skipped, not passed).
//
// A1 needs the public SEP-28k metadata table: set PREBLOCK_SEP28K_CSV.

#include <algorithm>
#include <chrono>
#include <cstring>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "preblock/fixtures.hpp"
#include "preblock/preblock.hpp"

using namespace preblock;

namespace {

struct Outcome {
  bool pass = true;
  bool unverifiable = false;
  std::string detail;

  void check(bool ok, const std::string &what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

// ---------------------------------------------------------------------------

struct ReferenceLabelStats {
  std::size_t candidates = 19332, retained = 10470;
  double median_gap_s = 2.26;
  std::map<std::string, double> rates{{"preblock", 0.299},        {"preblock_block", 0.131},
                                      {"preblock_soundrep", 0.096}, {"preblock_prolong", 0.106},
                                      {"preblock_wordrep", 0.129},  {"preblock_interject", 0.238}};
};

/// Every check of the criterion for one binarization threshold.
Outcome label_checks(const std::vector<ClipRecord> &records, int threshold) {
  const ReferenceLabelStats ref;
  Outcome o;
  const auto labeled = derive_corpus_labels(records, kDefaultGapLimitSamples, threshold);
  const auto s = corpus_stats(labeled);
  o.check(s.candidate_pairs == ref.candidates,
          "candidates " + std::to_string(s.candidate_pairs) + " != 19332");
  o.check(s.retained_pairs == ref.retained,
          "retained " + std::to_string(s.retained_pairs) + " != 10470");
  o.check(s.gap_seconds && std::abs(s.gap_seconds->median - ref.median_gap_s) <= 0.02,
          "median gap " + (s.gap_seconds ? num(s.gap_seconds->median) : "NA"));
  for (const auto &[target, want] : ref.rates) {
    const auto got = s.positive_rates.at(target);
    // +1e-9 absorbs the decimal rounding of the reference rates.
    o.check(got && std::abs(*got - want) <= 0.002 + 1e-9,
            target + " rate " + (got ? num(*got) : "NA") + " vs " + num(want));
  }
  if (o.pass)
    o.detail = "candidates " + std::to_string(s.candidate_pairs) + ", retained " +
               std::to_string(s.retained_pairs) + ", preblock rate " +
               num(*s.positive_rates.at("preblock")) + ", median gap " +
               num(s.gap_seconds->median) + " s";
  return o;
}

Outcome a1_label_reproduction() {
  Outcome o;
  const char *env = std::getenv("PREBLOCK_SEP28K_CSV");
  if (!env || !std::ifstream(env)) {
    o.pass = false;
    o.unverifiable = true;
    o.detail = "not verifiable: SEP-28k metadata CSV unavailable (set PREBLOCK_SEP28K_CSV)";
    return o;
  }
  const auto t0 = std::chrono::steady_clock::now();
  std::ifstream in(env, std::ios::binary);
  const auto records = parse_clip_table(in);
  o = label_checks(records, 2);
  const double elapsed = seconds_since(t0);
  o.check(elapsed < 30.0, "runtime " + num(elapsed) + " s");
  if (!o.pass) {
    for (int t : {1, 3})
      if (label_checks(records, t).pass)
        o.detail += "; threshold " + std::to_string(t) + " reproduces every count";
  } else {
    o.detail += ", " + num(elapsed, 3) + " s";
  }
  return o;
}

// ---------------------------------------------------------------------------

/// 6 shows x 43 episodes = 258 episode groups.
std::vector<LabeledClip> split_corpus() {
  fixtures::CorpusSpec spec;
  spec.shows = 6;
  spec.episodes_per_show = 43;
  spec.seed = 11;
  return derive_corpus_labels(fixtures::synthetic_corpus(spec), kDefaultGapLimitSamples, 2);
}

Outcome a2_split_integrity() {
  Outcome o;
  std::vector<LabeledClip> labeled;
  const char *env = std::getenv("PREBLOCK_SEP28K_CSV");
  const bool real = env && std::ifstream(env);
  if (real) {
    std::ifstream in(env, std::ios::binary);
    labeled = derive_corpus_labels(parse_clip_table(in), kDefaultGapLimitSamples, 2);
  } else {
    labeled = split_corpus();
  }
  const auto groups = episode_groups(labeled);
  o.check(groups.size() == 258, std::to_string(groups.size()) + " groups != 258");
  const auto a = assign_splits(groups, kDefaultFractions, kDefaultSeed);
  const auto b = assign_splits(groups, kDefaultFractions, kDefaultSeed);
  o.check(to_json(a).dump() == to_json(b).dump(), "two runs differ");
  // Input order must not matter either.
  auto reversed = groups;
  std::reverse(reversed.begin(), reversed.end());
  o.check(assign_splits(reversed, kDefaultFractions, kDefaultSeed).groups == a.groups,
          "assignment depends on input order");
  const auto r = verify_split(a, labeled);
  const std::array<std::size_t, 3> want{182, 40, 36};
  std::string counts;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto got = r.splits[i].groups;
    counts += (i ? "/" : "") + std::to_string(got);
    o.check(got + 3 >= want[i] && got <= want[i] + 3,
            std::string(split_name(kSplits[i])) + " groups " + std::to_string(got));
  }
  // Leakage: a clip's split is a function of its group alone.
  std::map<GroupKey, std::set<Split>> seen;
  for (const auto &c : labeled)
    seen[{c.clip.show, c.clip.episode}].insert(a.at({c.clip.show, c.clip.episode}));
  std::size_t leaked = 0;
  for (const auto &[k, s] : seen)
    leaked += s.size() > 1;
  o.check(leaked == 0, std::to_string(leaked) + " leaked groups");
  o.check(a.groups.size() == groups.size(), "unassigned groups");
  if (o.pass)
    o.detail = std::string(real ? "SEP-28k" : "synthetic 258-group corpus") +
               ", groups " + counts + ", zero leakage, two runs identical";
  return o;
}

// ---------------------------------------------------------------------------

Outcome a3_feature_shape() {
  Outcome o;
  SplitMix64 rng(3);
  for (int i = 0; i < 500; ++i) {
    const std::size_t len = 1 + rng.below(5 * kFeatureSampleRate);
    Waveform w;
    w.samples.resize(len);
    for (auto &s : w.samples)
      s = static_cast<float>(rng.uniform01() - 0.5);
    const auto f = featurize(w);
    if (f.rows != kMelBins || f.cols != 1 + len / kHopLength) {
      o.check(false, "length " + std::to_string(len) + " gave " + std::to_string(f.rows) +
                         "x" + std::to_string(f.cols));
      break;
    }
  }
  const auto clip = featurize(fixtures::synthetic_waveform(1, 0));
  o.check(clip.rows == 128 && clip.cols == 94, "3 s clip shape");
  Waveform silence;
  silence.samples.assign(kClipSamples, 0.0f);
  const auto s = log_mel(silence);
  const float want = static_cast<float>(std::log(kLogEpsilon));
  bool constant = s.rows == 128 && s.cols == 94;
  for (float v : s.data)
    constant = constant && v == want;
  o.check(constant, "silence is not the constant log(1e-6) matrix");
  if (o.pass)
    o.detail = "500 random lengths obey T = 1 + floor(len/512); 3 s -> 128x94; silence constant";
  return o;
}

// ---------------------------------------------------------------------------

Outcome a4_auc_oracle() {
  Outcome o;
  SplitMix64 rng(4);
  double worst = 0;
  bool invariant = true;
  int instances = 0;
  while (instances < 200) {
    const std::size_t n = 2 + rng.below(49);
    std::vector<double> s(n);
    std::vector<bool> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(10)) / 4.0; // ties common
      y[i] = rng.uniform01() < 0.4;
    }
    const auto pos = std::count(y.begin(), y.end(), true);
    if (pos == 0 || pos == static_cast<std::ptrdiff_t>(n))
      continue;
    ++instances;
    const double a = auc(s, y);
    worst = std::max(worst, std::abs(a - oracle::auc_pairs(s, y)));
    std::vector<double> t1(n), t2(n), t3(n);
    for (std::size_t i = 0; i < n; ++i) {
      t1[i] = 3.0 * s[i] + 1.0;
      t2[i] = std::exp(s[i]);
      t3[i] = sigmoid(2.0 * s[i] - 1.0);
    }
    invariant = invariant && auc(t1, y) == a && auc(t2, y) == a && auc(t3, y) == a;
  }
  o.check(worst <= 1e-12, "max |AUC - oracle| = " + num(worst));
  o.check(invariant, "monotone transform changed an AUC");
  if (o.pass)
    o.detail = "200 instances, max |AUC - pair oracle| = " + num(worst) +
               ", monotone transforms exact";
  return o;
}

// ---------------------------------------------------------------------------

ScoredSet planted_set(std::size_t n, double shift, SplitMix64 &rng) {
  ScoredSet s;
  for (std::size_t i = 0; i < n; ++i) {
    const bool y = rng.uniform01() < 0.35;
    s.add(rng.uniform01() + (y ? shift : 0.0), y);
  }
  return s;
}

Outcome a5_bootstrap() {
  Outcome o;
  SplitMix64 rng(5);
  const auto set = planted_set(300, 0.2, rng);
  BootstrapOptions opt;
  opt.seed = 17;
  const auto serial = bootstrap_aucs(set, opt);
  o.check(serial == bootstrap_aucs(set, opt), "two serial runs differ");
  for (unsigned threads : {2u, 4u, 7u}) {
    opt.threads = threads;
    o.check(bootstrap_aucs(set, opt) == serial,
            std::to_string(threads) + " threads differ from serial");
  }
  opt.threads = 1;

  int inside = 0;
  for (int i = 0; i < 100; ++i) {
    const auto s = planted_set(200, 0.15, rng);
    BootstrapOptions b;
    b.seed = static_cast<std::uint64_t>(i);
    const auto ci = bootstrap_ci(s, b);
    const double a = auc(s);
    inside += a >= ci.lo && a <= ci.hi;
  }
  o.check(inside >= 99, "point inside CI in " + std::to_string(inside) + "/100");

  const auto big = planted_set(1000, 0.1, rng);
  const auto t0 = std::chrono::steady_clock::now();
  BootstrapOptions timed;
  timed.resamples = 2000;
  (void)bootstrap_ci(big, timed);
  const double elapsed = seconds_since(t0);
  o.check(elapsed < 2.0, "B=2000 on n=1000 took " + num(elapsed) + " s");
  if (o.pass)
    o.detail = "deterministic, serial == 2/4/7 threads, point inside CI " +
               std::to_string(inside) + "/100, B=2000 n=1000 in " + num(elapsed, 3) + " s";
  return o;
}

// ---------------------------------------------------------------------------

Outcome a6_calibration() {
  Outcome o;
  SplitMix64 rng(6);
  std::vector<double> x(100000);
  std::vector<bool> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = 6.0 * rng.uniform01() - 3.0;
    y[i] = rng.uniform01() < sigmoid(2.0 * x[i] - 1.0);
  }
  const auto platt = fit_platt(x, y);
  o.check(std::abs(platt.platt.a - 2.0) <= 0.1 && std::abs(platt.platt.b + 1.0) <= 0.1,
          "Platt (A,B) = (" + num(platt.platt.a) + ", " + num(platt.platt.b) + ")");
  std::vector<double> calibrated(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    calibrated[i] = apply(platt, x[i]);
  o.check(auc(calibrated, y) == auc(x, y), "Platt changed the AUC");

  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(8);
    std::vector<double> lx(n), ly(n);
    for (std::size_t i = 0; i < n; ++i) {
      lx[i] = static_cast<double>(rng.below(6));
      ly[i] = rng.uniform01() < 0.5 ? 1.0 : 0.0;
    }
    const auto m = fit_isotonic_targets(lx, ly);
    std::vector<double> ux = lx;
    std::sort(ux.begin(), ux.end());
    ux.erase(std::unique(ux.begin(), ux.end()), ux.end());
    std::vector<double> mean(ux.size(), 0), weight(ux.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(
          std::lower_bound(ux.begin(), ux.end(), lx[i]) - ux.begin());
      mean[k] += ly[i];
      weight[k] += 1;
    }
    for (std::size_t k = 0; k < ux.size(); ++k)
      mean[k] /= weight[k];
    const auto fit = oracle::isotonic_exhaustive(mean, weight);
    for (std::size_t k = 0; k < ux.size(); ++k)
      worst = std::max(worst, std::abs(apply(m, ux[k]) - fit[k]));
  }
  o.check(worst <= 1e-12, "PAVA vs exhaustive max diff " + num(worst));

  // Per-bin-perfect predictions: each bin holds one probability equal to its
  // empirical rate.
  std::vector<double> p;
  std::vector<bool> labels;
  for (int k = 0; k <= 4; ++k)
    for (int j = 0; j < 4; ++j) {
      p.push_back(k / 4.0);
      labels.push_back(j < k);
    }
  const double ece = ece_brier(p, labels).ece;
  o.check(ece == 0.0, "per-bin-perfect ECE = " + num(ece));
  if (o.pass)
    o.detail = "Platt (" + num(platt.platt.a) + ", " + num(platt.platt.b) +
               "), AUC preserved, PAVA == exhaustive on 1000 draws, ECE 0";
  return o;
}

// ---------------------------------------------------------------------------

Outcome a7_tail_mask() {
  Outcome o;
  const CnnModel model(init_weights(42));
  const auto x = random_spectrograms(3, 7);
  for (const auto &f : x) {
    const auto same = mask_tail(f, 0);
    o.check(same == f, "N=0 changed the input");
    const auto a = model.forward(f), b = model.forward(same);
    o.check(std::memcmp(&a, &b, sizeof a) == 0, "N=0 logits not bit-exact");
    for (std::size_t n : default_mask_sweep()) {
      const auto m = mask_tail(f, n);
      for (std::size_t r = 0; r < m.rows; ++r)
        for (std::size_t c = 0; c < m.cols; ++c) {
          const float v = m.data[r * m.cols + c];
          const float orig = f.data[r * f.cols + c];
          if (c >= m.cols - n ? v != 0.0f : v != orig) {
            o.check(false, "mask " + std::to_string(n) + " wrong at column " +
                               std::to_string(c));
            return o;
          }
        }
      o.check(mask_tail(m, n) == m, "mask " + std::to_string(n) + " not idempotent");
    }
  }
  if (o.pass)
    o.detail = "N=0 identity with bit-exact logits; masked columns 0.0; idempotent for N in {0,4,8,16,32}";
  return o;
}

// ---------------------------------------------------------------------------

Outcome a8_streaming() {
  Outcome o;
  const std::size_t samples = 582400; // 36.4 s
  o.check(stream_window_count(samples) == 134, "36.4 s window count");
  const CnnModel model(init_weights(42));
  const auto wave = fixtures::synthetic_waveform(8, 0, samples);
  const auto a = stream_simulate(wave, model, std::nullopt);
  const auto b = stream_simulate(wave, model, std::nullopt);
  o.check(a.events.size() == 134, std::to_string(a.events.size()) + " windows");
  bool same = a.events.size() == b.events.size();
  for (std::size_t i = 0; same && i < a.events.size(); ++i)
    same = a.events[i].p_preblock == b.events[i].p_preblock;
  o.check(same, "probability sequences differ between runs");

  // Injected latency list: 4, 6, 8, 10, 12 ms per window.
  std::vector<Nanoseconds> script{4'000'000, 6'000'000, 8'000'000, 10'000'000, 12'000'000};
  std::size_t reads = 0;
  Nanoseconds now = 0;
  const Clock clock = [&] {
    // Even reads start a window, odd reads end it.
    now += reads % 2 ? script[(reads / 2) % script.size()] : 1;
    ++reads;
    return now;
  };
  const auto short_wave = fixtures::synthetic_waveform(8, 1, 48000 + 4 * 4000);
  const auto r = stream_simulate(short_wave, model, std::nullopt, {}, clock);
  o.check(r.events.size() == 5, "injected run window count");
  o.check(r.latency.mean_ms == 8.0, "injected mean " + num(r.latency.mean_ms));
  o.check(r.latency.budget_utilization == 8.0 / 250.0,
          "utilization " + num(r.latency.budget_utilization));
  if (o.pass)
    o.detail = "134 windows, identical probabilities across runs, utilization " +
               num(r.latency.budget_utilization) + " = 8 ms / 250 ms; measured mean " +
               num(a.latency.mean_ms, 3) + " ms per window";
  return o;
}

// ---------------------------------------------------------------------------

std::vector<double> widen(const std::vector<float> &v) { return {v.begin(), v.end()}; }

std::vector<float> random_floats(std::size_t n, SplitMix64 &rng, double lo = -1, double hi = 1) {
  std::vector<float> v(n);
  for (auto &x : v)
    x = static_cast<float>(lo + (hi - lo) * rng.uniform01());
  return v;
}

Outcome a9_forward_oracle() {
  Outcome o;
  SplitMix64 rng(9);
  double worst = 0;
  auto track = [&](const std::vector<float> &got, const std::vector<double> &want) {
    for (std::size_t i = 0; i < want.size(); ++i)
      worst = std::max(worst, std::abs(static_cast<double>(got[i]) - want[i]));
  };
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t c_in = 1 + rng.below(3), c_out = 1 + rng.below(6);
    const std::size_t h = 1 + rng.below(7), w = 1 + rng.below(9);
    layers::Activation in(c_in, h, w);
    in.data = random_floats(in.data.size(), rng);
    const auto weight = random_floats(c_out * c_in * 9, rng, -0.5, 0.5);
    const auto bias = random_floats(c_out, rng);
    track(layers::conv3x3(in, weight, bias).data,
          oracle::conv3x3(widen(in.data), static_cast<int>(c_in), static_cast<int>(h),
                          static_cast<int>(w), widen(weight), widen(bias)));

    layers::Activation x(c_out, h + 1, w + 1);
    x.data = random_floats(x.data.size(), rng);
    const auto g = random_floats(c_out, rng), be = random_floats(c_out, rng),
               mu = random_floats(c_out, rng), var = random_floats(c_out, rng, 0.1, 3);
    auto ref = widen(x.data);
    layers::batch_norm(x, g, be, mu, var);
    oracle::batch_norm(ref, static_cast<int>(c_out), static_cast<int>(x.plane()), widen(g),
                       widen(be), widen(mu), widen(var));
    track(x.data, ref);
    track(layers::max_pool2x2(x).data,
          oracle::max_pool(widen(x.data), static_cast<int>(c_out), static_cast<int>(h + 1),
                           static_cast<int>(w + 1)));
    const auto v = random_floats(1 + rng.below(16), rng);
    const std::size_t n_out = 1 + rng.below(5);
    const auto aw = random_floats(n_out * v.size(), rng), ab = random_floats(n_out, rng);
    track(layers::affine(v, aw, ab), oracle::affine(widen(v), widen(aw), widen(ab)));
  }
  o.check(worst <= 1e-6, "layer max |diff| = " + num(worst));

  const auto weights = init_weights(42);
  const CnnModel model(weights);
  const auto x = random_spectrograms(2, 9);
  for (const auto &f : x) {
    const auto a = model.forward(f), b = model.forward(f);
    o.check(std::memcmp(&a, &b, sizeof a) == 0, "pbcnn-v1 forward not deterministic");
  }
  const auto bytes = encode_pbw1(weights);
  const auto back = decode_pbw1(bytes);
  o.check(encode_pbw1(back) == bytes, "PBW1 re-export differs");
  o.check(back.tensors.size() == weights.tensors.size(), "PBW1 tensor count");
  if (o.pass)
    o.detail = "layer oracles max |diff| " + num(worst) +
               ", pbcnn-v1 forward deterministic, PBW1 re-export byte-identical (" +
               std::to_string(bytes.size()) + " bytes)";
  return o;
}

} // namespace

int main(int argc, char **argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"A1", a1_label_reproduction}, {"A2", a2_split_integrity}, {"A3", a3_feature_shape},
      {"A4", a4_auc_oracle},         {"A5", a5_bootstrap},       {"A6", a6_calibration},
      {"A7", a7_tail_mask},          {"A8", a8_streaming},       {"A9", a9_forward_oracle}};
  std::set<std::string> only(argv + 1, argv + argc);
  for (const auto &id : only)
    if (std::none_of(criteria.begin(), criteria.end(), [&](auto &c) { return c.first == id; })) {
      std::cerr << "unknown criterion " << id << '\n';
      return 2;
    }
  bool any_fail = false, all_fails_unverifiable = true;
  for (const auto &[id, run] : criteria) {
    if (!only.empty() && !only.count(id))
      continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception &e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::cout << id << ' ' << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << std::endl;
    if (!o.pass) {
      any_fail = true;
      all_fails_unverifiable = all_fails_unverifiable && o.unverifiable;
    }
  }
  if (!any_fail)
    return 0;
  return all_fails_unverifiable ? 77 : 1;
}
