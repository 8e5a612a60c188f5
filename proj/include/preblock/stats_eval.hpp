#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "preblock/corpus_labels.hpp"
#include "preblock/csv.hpp"
#include "preblock/error.hpp"
#include "preblock/model.hpp"
#include "preblock/quantile.hpp"
#include "preblock/rng.hpp"

namespace preblock {

struct ScoredSet {
  std::vector<double> scores;
  std::vector<bool> labels;

  void add(double score, bool label) {
    scores.push_back(score);
    labels.push_back(label);
  }
  std::size_t size() const { return scores.size(); }
  std::size_t positives() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  }
};

/// Mann-Whitney AUC with midranks: ties between a positive and a negative
/// count one half.
inline double auc(std::span<const double> scores, const std::vector<bool> &labels) {
  if (scores.size() != labels.size())
    throw ContractError("auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](auto a, auto b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]])
      ++j;
    // ranks i+1 .. j share the midrank
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]]) {
        rank_sum += midrank;
        ++n_pos;
      }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw UndefinedAucError("auc: undefined without both classes (" +
                            std::to_string(n_pos) + " positive, " +
                            std::to_string(n_neg) + " negative)");
  const double p = static_cast<double>(n_pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(n_neg));
}

inline double auc(const ScoredSet &s) { return auc(s.scores, s.labels); }

struct BootstrapOptions {
  std::size_t resamples = 2000;
  double level = 0.95;
  std::uint64_t seed = 42;
  unsigned threads = 1;
};

struct ConfidenceInterval {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t redraws = 0;
};

/// AUC of every bootstrap resample, in resample order.
///
/// Resample b draws n indices i.i.d. with SplitMix64(seed, BOOT | b). A draw
/// holding a single class is discarded and redrawn from the same stream; more
/// than 10 B redraws in total is a DegenerateDataError. Each resample owns its
/// stream, so the result does not depend on the thread count.
inline std::vector<double> bootstrap_aucs(const ScoredSet &set,
                                          const BootstrapOptions &opt,
                                          std::size_t *redraws_out = nullptr) {
  const std::size_t n = set.size();
  if (set.labels.size() != n)
    throw ContractError("bootstrap: scores and labels differ in length");
  (void)auc(set); // both classes required

  // Tie groups in ascending score order, computed once.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](auto a, auto b) { return set.scores[a] < set.scores[b]; });
  std::vector<std::size_t> group_end; // exclusive end in `order`
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && set.scores[order[j]] == set.scores[order[i]])
      ++j;
    group_end.push_back(j);
    i = j;
  }

  const std::size_t B = opt.resamples;
  const std::size_t cap = 10 * B;
  std::vector<double> aucs(B);
  std::vector<std::size_t> redraws(B, 0);

  auto run = [&](std::size_t first, std::size_t last) {
    std::vector<std::uint32_t> count(n);
    for (std::size_t b = first; b < last; ++b) {
      SplitMix64 rng(opt.seed, stream::bootstrap | static_cast<std::uint64_t>(b));
      for (;;) {
        std::fill(count.begin(), count.end(), 0u);
        std::size_t pos = 0;
        for (std::size_t k = 0; k < n; ++k) {
          const auto i = static_cast<std::size_t>(rng.below(n));
          ++count[i];
          pos += set.labels[i];
        }
        if (pos > 0 && pos < n)
          break;
        if (++redraws[b] > cap)
          break;
      }
      if (redraws[b] > cap)
        return;
      // Midrank AUC from multiplicities: each positive beats the negatives
      // below its tie group and ties half of those inside it.
      double u = 0.0, neg_below = 0.0, n_pos = 0.0;
      std::size_t start = 0;
      for (const std::size_t end : group_end) {
        double pg = 0.0, ng = 0.0;
        for (std::size_t k = start; k < end; ++k) {
          const auto i = order[k];
          (set.labels[i] ? pg : ng) += count[i];
        }
        u += pg * (neg_below + 0.5 * ng);
        neg_below += ng;
        n_pos += pg;
        start = end;
      }
      aucs[b] = u / (n_pos * neg_below);
    }
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(opt.threads,
                                                           static_cast<unsigned>(B)));
  if (threads == 1) {
    run(0, B);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (B + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t first = t * chunk, last = std::min(B, first + chunk);
      if (first < last)
        pool.emplace_back(run, first, last);
    }
  }
  const std::size_t total = std::accumulate(redraws.begin(), redraws.end(), std::size_t{0});
  if (total > cap)
    throw DegenerateDataError("bootstrap: more than " + std::to_string(cap) +
                              " single-class resamples redrawn");
  if (redraws_out)
    *redraws_out = total;
  return aucs;
}

/// Percentile bootstrap CI of the AUC; bounds are type-7 quantiles of the
/// resample AUCs at (1 - level)/2 and (1 + level)/2.
inline ConfidenceInterval bootstrap_ci(const ScoredSet &set,
                                       const BootstrapOptions &opt = {}) {
  if (opt.resamples == 0)
    throw ContractError("bootstrap: need at least one resample");
  if (!(opt.level > 0.0 && opt.level < 1.0))
    throw ContractError("bootstrap: level must be in (0, 1)");
  ConfidenceInterval ci;
  auto aucs = bootstrap_aucs(set, opt, &ci.redraws);
  std::sort(aucs.begin(), aucs.end());
  ci.lo = quantile_sorted(aucs, (1.0 - opt.level) / 2.0);
  ci.hi = quantile_sorted(aucs, (1.0 + opt.level) / 2.0);
  return ci;
}

// ---------------------------------------------------------------------------
// Reports

struct EvalRow {
  std::string target;
  std::string stratum;
  std::size_t n = 0;
  std::size_t positives = 0;
  std::optional<double> auc;
  std::optional<double> ci_lo;
  std::optional<double> ci_hi;

  std::optional<double> positive_rate() const {
    if (n == 0)
      return std::nullopt;
    return static_cast<double>(positives) / static_cast<double>(n);
  }
  /// Lower CI bound above chance.
  bool ci_significant() const { return ci_lo && *ci_lo > 0.5; }
  /// Percentile intervals can exclude their own point estimate; flagged.
  bool point_outside_ci() const {
    return auc && ci_lo && (*auc < *ci_lo || *auc > *ci_hi);
  }
};

struct ThresholdReport {
  double tau = 0.5;
  double tpr = 0.0;
  double fpr = 0.0;
  /// Per target: fraction of its positives scored >= tau.
  std::map<std::string, std::optional<double>> catch_rates;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::size_t resamples = 0;
  double level = 0.95;
  std::uint64_t seed = 0;
  std::optional<ThresholdReport> threshold;

  const EvalRow *find(const std::string &target,
                      const std::string &stratum = "all") const {
    for (const auto &r : rows)
      if (r.target == target && r.stratum == stratum)
        return &r;
    return nullptr;
  }
};

/// Scores one row. min_per_class is the smallest class count for which the
/// AUC is reported.
inline EvalRow score_row(std::string target, std::string stratum,
                         const ScoredSet &set, const BootstrapOptions &opt,
                         std::size_t min_per_class = 1) {
  EvalRow r;
  r.target = std::move(target);
  r.stratum = std::move(stratum);
  r.n = set.size();
  r.positives = set.positives();
  if (r.positives < min_per_class || r.n - r.positives < min_per_class)
    return r;
  r.auc = auc(set);
  try {
    const auto ci = bootstrap_ci(set, opt);
    r.ci_lo = ci.lo;
    r.ci_hi = ci.hi;
  } catch (const DegenerateDataError &) {
    // point estimate only
  }
  return r;
}

using ClipFilter = std::function<bool(const LabeledClip &)>;

enum class ScoreSource { raw, calibrated };

struct EvalOptions {
  BootstrapOptions bootstrap;
  ScoreSource scores = ScoreSource::raw;
};

namespace detail {

struct Joined {
  const PredictionRecord *pred;
  const LabeledClip *clip;
};

inline std::vector<Joined> join(std::span<const PredictionRecord> predictions,
                                std::span<const LabeledClip> labeled,
                                const ClipFilter &filter) {
  std::unordered_map<std::string, const LabeledClip *> by_key;
  by_key.reserve(labeled.size());
  for (const auto &c : labeled)
    by_key.emplace(clip_key(c.clip), &c);
  std::vector<Joined> out;
  std::vector<std::string> missing;
  for (const auto &p : predictions) {
    const auto it = by_key.find(p.clip_key);
    if (it == by_key.end()) {
      missing.push_back(p.clip_key);
      continue;
    }
    if (!filter || filter(*it->second))
      out.push_back({&p, it->second});
  }
  if (!missing.empty()) {
    std::string msg = std::to_string(missing.size()) +
                      " prediction(s) without a labeled clip:";
    for (std::size_t i = 0; i < missing.size() && i < 10; ++i)
      msg += " " + missing[i];
    if (missing.size() > 10)
      msg += " ...";
    throw IntegrityError(msg);
  }
  return out;
}

inline double event_score(const PredictionRecord &p, ScoreSource s) {
  if (s == ScoreSource::calibrated) {
    if (!p.p_cal_event)
      throw ContractError("calibrated scores requested for " + p.clip_key +
                          " but the event head is uncalibrated");
    return *p.p_cal_event;
  }
  return p.p_raw_event;
}

inline double preblock_score(const PredictionRecord &p, ScoreSource s) {
  if (s == ScoreSource::calibrated) {
    if (!p.p_cal_preblock)
      throw ContractError("calibrated scores requested for " + p.clip_key +
                          " but the preblock head is uncalibrated");
    return *p.p_cal_preblock;
  }
  return p.p_raw_preblock;
}

} // namespace detail

/// Preblock-head scored sets per preblock target, over valid_preblock clips.
inline std::map<std::string, ScoredSet>
preblock_sets(std::span<const PredictionRecord> predictions,
              std::span<const LabeledClip> labeled, const ClipFilter &filter,
              ScoreSource source = ScoreSource::raw) {
  std::map<std::string, ScoredSet> sets;
  const auto targets = preblock_targets();
  for (const auto &j : detail::join(predictions, labeled, filter)) {
    if (!j.clip->valid_preblock)
      continue;
    const double s = detail::preblock_score(*j.pred, source);
    for (const auto &t : targets)
      sets[t].add(s, preblock_label(*j.clip, t).value());
  }
  return sets;
}

/// Aggregate preblock, the five per-type preblock targets, and event
/// detection, each with a bootstrap CI. Preblock rows use valid_preblock
/// clips only; the event row uses every selected clip.
inline EvalReport stratified_eval(std::span<const PredictionRecord> predictions,
                                  std::span<const LabeledClip> labeled,
                                  const ClipFilter &filter = {},
                                  const EvalOptions &opt = {}) {
  EvalReport report;
  report.resamples = opt.bootstrap.resamples;
  report.level = opt.bootstrap.level;
  report.seed = opt.bootstrap.seed;
  auto sets = preblock_sets(predictions, labeled, filter, opt.scores);
  for (const auto &t : preblock_targets())
    report.rows.push_back(score_row(t, "all", sets[t], opt.bootstrap));
  ScoredSet events;
  for (const auto &j : detail::join(predictions, labeled, filter))
    events.add(detail::event_score(*j.pred, opt.scores), j.clip->y_event);
  report.rows.push_back(score_row("event", "all", events, opt.bootstrap));
  return report;
}

/// Aggregate preblock AUC per show. Shows with fewer than two positives or
/// two negatives get a row without an AUC.
inline EvalReport subgroup_eval(std::span<const PredictionRecord> predictions,
                                std::span<const LabeledClip> labeled,
                                const ClipFilter &filter = {},
                                const EvalOptions &opt = {}) {
  EvalReport report;
  report.resamples = opt.bootstrap.resamples;
  report.level = opt.bootstrap.level;
  report.seed = opt.bootstrap.seed;
  std::map<std::string, ScoredSet> by_show;
  for (const auto &j : detail::join(predictions, labeled, filter))
    if (j.clip->valid_preblock)
      by_show[j.clip->clip.show].add(detail::preblock_score(*j.pred, opt.scores),
                                     j.clip->y_preblock.value());
  for (const auto &[show, set] : by_show)
    report.rows.push_back(score_row("preblock", show, set, opt.bootstrap, 2));
  return report;
}

/// Youden threshold: the observed score maximizing TPR - FPR under the rule
/// "positive iff score >= tau"; ties go to the lowest tau.
inline ThresholdReport youden(const ScoredSet &set) {
  (void)auc(set); // both classes required
  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](auto a, auto b) { return set.scores[a] < set.scores[b]; });
  const double P = static_cast<double>(set.positives());
  const double N = static_cast<double>(set.size()) - P;
  // Walking up from the lowest cutpoint, counts at or above tau shrink.
  double tp = P, fp = N;
  ThresholdReport best;
  double best_j = -2.0;
  for (std::size_t i = 0; i < order.size();) {
    const double tau = set.scores[order[i]];
    const double j = tp / P - fp / N;
    if (j > best_j) {
      best_j = j;
      best.tau = tau;
      best.tpr = tp / P;
      best.fpr = fp / N;
    }
    for (; i < order.size() && set.scores[order[i]] == tau; ++i)
      (set.labels[order[i]] ? tp : fp) -= 1.0;
  }
  return best;
}

/// Fraction of each set's positives scored at or above tau.
inline std::map<std::string, std::optional<double>>
catch_rates(double tau, const std::map<std::string, ScoredSet> &sets) {
  std::map<std::string, std::optional<double>> out;
  for (const auto &[name, set] : sets) {
    std::size_t pos = 0, caught = 0;
    for (std::size_t i = 0; i < set.size(); ++i)
      if (set.labels[i]) {
        ++pos;
        caught += set.scores[i] >= tau;
      }
    out[name] = pos ? std::optional<double>(static_cast<double>(caught) /
                                            static_cast<double>(pos))
                    : std::nullopt;
  }
  return out;
}

/// Youden tau fitted on the aggregate preblock target of the fit selection,
/// then TPR/FPR and per-target catch rates measured on the apply selection.
inline ThresholdReport
threshold_report(std::span<const PredictionRecord> predictions,
                 std::span<const LabeledClip> labeled, const ClipFilter &fit,
                 const ClipFilter &apply_to, ScoreSource source = ScoreSource::raw) {
  const auto fit_sets = preblock_sets(predictions, labeled, fit, source);
  const auto it = fit_sets.find("preblock");
  if (it == fit_sets.end())
    throw UndefinedAucError("threshold: no valid_preblock clips in the fit selection");
  auto report = youden(it->second);
  const auto sets = preblock_sets(predictions, labeled, apply_to, source);
  report.catch_rates = catch_rates(report.tau, sets);
  if (const auto agg = sets.find("preblock"); agg != sets.end()) {
    const auto &s = agg->second;
    const double P = static_cast<double>(s.positives());
    const double N = static_cast<double>(s.size()) - P;
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s.scores[i] >= report.tau)
        (s.labels[i] ? tp : fp) += 1.0;
    report.tpr = P > 0 ? tp / P : 0.0;
    report.fpr = N > 0 ? fp / N : 0.0;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const EvalRow &r) {
  using nlohmann::json;
  auto opt = [](const std::optional<double> &v) { return v ? json(*v) : json(nullptr); };
  return json{{"target", r.target},
              {"stratum", r.stratum},
              {"n", r.n},
              {"positives", r.positives},
              {"positive_rate", opt(r.positive_rate())},
              {"auc", opt(r.auc)},
              {"ci_lo", opt(r.ci_lo)},
              {"ci_hi", opt(r.ci_hi)},
              {"ci_significant", r.ci_significant()},
              {"point_outside_ci", r.point_outside_ci()}};
}

inline nlohmann::json to_json(const ThresholdReport &t) {
  using nlohmann::json;
  json rates = json::object();
  for (const auto &[k, v] : t.catch_rates)
    rates[k] = v ? json(*v) : json(nullptr);
  return json{{"tau", t.tau}, {"tpr", t.tpr}, {"fpr", t.fpr}, {"catch_rates", rates}};
}

inline nlohmann::json to_json(const EvalReport &r) {
  using nlohmann::json;
  json rows = json::array();
  for (const auto &row : r.rows)
    rows.push_back(to_json(row));
  json j{{"resamples", r.resamples}, {"level", r.level}, {"seed", r.seed}, {"rows", rows}};
  if (r.threshold)
    j["threshold"] = to_json(*r.threshold);
  return j;
}

inline void write_eval_csv(std::ostream &out, const EvalReport &r) {
  out << "target,stratum,n,positives,positive_rate,auc,ci_lo,ci_hi,ci_significant\n";
  auto opt = [&](const std::optional<double> &v) {
    if (v)
      out << *v;
  };
  for (const auto &row : r.rows) {
    out << csv::escape(row.target) << ',' << csv::escape(row.stratum) << ','
        << row.n << ',' << row.positives << ',';
    opt(row.positive_rate());
    out << ',';
    opt(row.auc);
    out << ',';
    opt(row.ci_lo);
    out << ',';
    opt(row.ci_hi);
    out << ',' << (row.ci_significant() ? "true" : "false") << '\n';
  }
}

} // namespace preblock
