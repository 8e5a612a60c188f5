#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "preblock/error.hpp"

namespace preblock {

inline double sigmoid(double logit) { return 1.0 / (1.0 + std::exp(-logit)); }

/// log(1 + e^z) without overflow.
inline double softplus(double z) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

struct PlattParams {
  double a = 1.0;
  double b = 0.0;
};

struct IsotonicStep {
  double logit_upper; // right-closed upper edge of the interval
  double p;
};

struct CalibrationModel {
  enum class Kind { platt, isotonic };
  Kind kind = Kind::platt;
  PlattParams platt;
  std::vector<IsotonicStep> steps; // ascending logit_upper, non-decreasing p

  static CalibrationModel make_platt(double a, double b) {
    CalibrationModel m;
    m.kind = Kind::platt;
    m.platt = {a, b};
    return m;
  }
};

/// Calibrated probability for a logit. Isotonic steps are right-closed:
/// a logit in (upper[k-1], upper[k]] maps to p[k]; values outside the fitted
/// range clamp to the end steps.
inline double apply(const CalibrationModel &m, double logit) {
  if (m.kind == CalibrationModel::Kind::platt)
    return sigmoid(m.platt.a * logit + m.platt.b);
  if (m.steps.empty())
    throw ContractError("isotonic calibration has no steps");
  const auto it = std::lower_bound(
      m.steps.begin(), m.steps.end(), logit,
      [](const IsotonicStep &s, double x) { return s.logit_upper < x; });
  return it == m.steps.end() ? m.steps.back().p : it->p;
}

namespace detail {

inline void require_both_classes(std::span<const double> logits,
                                 const std::vector<bool> &labels) {
  if (logits.size() != labels.size())
    throw ContractError("calibration: logits and labels differ in length");
  const auto pos = std::count(labels.begin(), labels.end(), true);
  if (pos == 0 || pos == static_cast<std::ptrdiff_t>(labels.size()))
    throw ContractError("calibration: both classes are required");
}

inline double platt_log_likelihood(std::span<const double> logits,
                                   const std::vector<bool> &labels, double a,
                                   double b) {
  double ll = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = a * logits[i] + b;
    ll += (labels[i] ? z : 0.0) - softplus(z);
  }
  return ll;
}

} // namespace detail

/// Maximum-likelihood Platt scaling p = sigmoid(A l + B), unregularized.
/// Newton-Raphson with step halving; stops when max |step| < 1e-8 or after
/// 100 iterations.
inline CalibrationModel fit_platt(std::span<const double> logits,
                                  const std::vector<bool> &labels) {
  detail::require_both_classes(logits, labels);

  // With a separating threshold the likelihood has no maximum (A diverges).
  double min_pos = INFINITY, max_pos = -INFINITY, min_neg = INFINITY,
         max_neg = -INFINITY;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    auto &lo = labels[i] ? min_pos : min_neg;
    auto &hi = labels[i] ? max_pos : max_neg;
    lo = std::min(lo, logits[i]);
    hi = std::max(hi, logits[i]);
  }
  if (max_neg < min_pos || max_pos < min_neg)
    throw NonConvergenceError(
        "fit_platt: classes are perfectly separated by the logit; A diverges "
        "(max negative " + std::to_string(max_neg) + ", min positive " +
        std::to_string(min_pos) + ")");

  double a = 1.0, b = 0.0;
  double ll = detail::platt_log_likelihood(logits, labels, a, b);
  for (int iter = 0; iter < 100; ++iter) {
    double ga = 0, gb = 0, haa = 0, hab = 0, hbb = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      const double l = logits[i];
      const double p = sigmoid(a * l + b);
      const double r = (labels[i] ? 1.0 : 0.0) - p;
      const double w = p * (1.0 - p);
      ga += r * l;
      gb += r;
      haa += w * l * l;
      hab += w * l;
      hbb += w;
    }
    const double det = haa * hbb - hab * hab;
    if (!(det > 0.0) || !std::isfinite(det))
      throw NonConvergenceError("fit_platt: singular Hessian (A = " +
                                std::to_string(a) + ", B = " +
                                std::to_string(b) + ")");
    // Newton direction: (-H)^{-1} g.
    double da = (hbb * ga - hab * gb) / det;
    double db = (haa * gb - hab * ga) / det;
    double next_ll = detail::platt_log_likelihood(logits, labels, a + da, b + db);
    for (int halving = 0; halving < 50 && next_ll < ll; ++halving) {
      da *= 0.5;
      db *= 0.5;
      next_ll = detail::platt_log_likelihood(logits, labels, a + da, b + db);
    }
    a += da;
    b += db;
    ll = next_ll;
    if (std::max(std::abs(da), std::abs(db)) < 1e-8)
      return CalibrationModel::make_platt(a, b);
  }
  throw NonConvergenceError("fit_platt: no convergence in 100 iterations (A = " +
                            std::to_string(a) + ", B = " + std::to_string(b) + ")");
}

/// Weighted pool-adjacent-violators over values already in x order.
/// Returns (end index, pooled mean) per block; a block is merged with its
/// predecessor only when the predecessor's mean is strictly greater.
inline std::vector<std::pair<std::size_t, double>>
pool_adjacent_violators(std::span<const double> values,
                        std::span<const double> weights) {
  struct Block {
    double sum, weight;
    std::size_t end;
    double mean() const { return sum / weight; }
  };
  std::vector<Block> stack;
  for (std::size_t i = 0; i < values.size(); ++i) {
    stack.push_back({values[i] * weights[i], weights[i], i + 1});
    while (stack.size() > 1 &&
           stack[stack.size() - 2].mean() > stack.back().mean()) {
      const auto top = stack.back();
      stack.pop_back();
      stack.back().sum += top.sum;
      stack.back().weight += top.weight;
      stack.back().end = top.end;
    }
  }
  std::vector<std::pair<std::size_t, double>> out;
  out.reserve(stack.size());
  for (const auto &b : stack)
    out.emplace_back(b.end, b.mean());
  return out;
}

/// Isotonic regression of targets on logits. Tied logits are pooled first;
/// targets may be fractional.
inline CalibrationModel fit_isotonic_targets(std::span<const double> logits,
                                             std::span<const double> targets) {
  if (logits.size() != targets.size() || logits.empty())
    throw ContractError("fit_isotonic: need equal-length, non-empty inputs");
  std::vector<std::size_t> order(logits.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](auto i, auto j) { return logits[i] < logits[j]; });
  std::vector<double> upper, mean, weight;
  for (std::size_t k = 0; k < order.size();) {
    const double x = logits[order[k]];
    double sum = 0.0, n = 0.0;
    for (; k < order.size() && logits[order[k]] == x; ++k) {
      sum += targets[order[k]];
      n += 1.0;
    }
    upper.push_back(x);
    mean.push_back(sum / n);
    weight.push_back(n);
  }
  CalibrationModel m;
  m.kind = CalibrationModel::Kind::isotonic;
  for (const auto &[end, p] : pool_adjacent_violators(mean, weight))
    m.steps.push_back({upper[end - 1], std::clamp(p, 0.0, 1.0)});
  return m;
}

inline CalibrationModel fit_isotonic(std::span<const double> logits,
                                     const std::vector<bool> &labels) {
  detail::require_both_classes(logits, labels);
  std::vector<double> targets(labels.begin(), labels.end());
  return fit_isotonic_targets(logits, targets);
}

// ---------------------------------------------------------------------------
// Reliability table, ECE and Brier.

struct ReliabilityBin {
  double lo = 0, hi = 0;
  std::size_t count = 0;
  std::optional<double> mean_predicted;
  std::optional<double> empirical_rate;
};

struct ReliabilityTable {
  std::vector<ReliabilityBin> bins;
  double ece = 0.0;
  double brier = 0.0;
  std::size_t n = 0;
};

inline constexpr std::size_t kDefaultEceBins = 15;

/// Equal-width bins [k/B, (k+1)/B), last bin closed at 1.
/// ECE = sum_k (n_k / n) |rate_k - mean_p_k|; Brier = mean (p - y)^2.
inline ReliabilityTable ece_brier(std::span<const double> probs,
                                  const std::vector<bool> &labels,
                                  std::size_t n_bins = kDefaultEceBins) {
  if (probs.size() != labels.size())
    throw ContractError("ece_brier: probs and labels differ in length");
  if (n_bins == 0)
    throw ContractError("ece_brier: need at least one bin");
  std::vector<double> psum(n_bins, 0.0), ysum(n_bins, 0.0);
  ReliabilityTable t;
  t.n = probs.size();
  t.bins.resize(n_bins);
  double sq = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = probs[i];
    if (!(p >= 0.0 && p <= 1.0))
      throw ContractError("ece_brier: probability outside [0, 1]");
    const auto k = std::min(static_cast<std::size_t>(p * static_cast<double>(n_bins)),
                            n_bins - 1);
    ++t.bins[k].count;
    psum[k] += p;
    ysum[k] += labels[i] ? 1.0 : 0.0;
    sq += (p - (labels[i] ? 1.0 : 0.0)) * (p - (labels[i] ? 1.0 : 0.0));
  }
  for (std::size_t k = 0; k < n_bins; ++k) {
    auto &b = t.bins[k];
    b.lo = static_cast<double>(k) / static_cast<double>(n_bins);
    b.hi = static_cast<double>(k + 1) / static_cast<double>(n_bins);
    if (b.count == 0)
      continue;
    const auto c = static_cast<double>(b.count);
    b.mean_predicted = psum[k] / c;
    b.empirical_rate = ysum[k] / c;
    t.ece += c / static_cast<double>(t.n) *
             std::abs(*b.empirical_rate - *b.mean_predicted);
  }
  t.brier = t.n ? sq / static_cast<double>(t.n) : 0.0;
  return t;
}

/// CSV: bin_lo,bin_hi,count,mean_predicted,empirical_rate (empty bins blank).
inline void write_reliability_csv(std::ostream &out, const ReliabilityTable &t) {
  out << "bin_lo,bin_hi,count,mean_predicted,empirical_rate\n";
  for (const auto &b : t.bins) {
    out << b.lo << ',' << b.hi << ',' << b.count << ',';
    if (b.mean_predicted)
      out << *b.mean_predicted;
    out << ',';
    if (b.empirical_rate)
      out << *b.empirical_rate;
    out << '\n';
  }
}

inline nlohmann::json to_json(const ReliabilityTable &t) {
  using nlohmann::json;
  json bins = json::array();
  for (const auto &b : t.bins)
    bins.push_back({{"lo", b.lo},
                    {"hi", b.hi},
                    {"count", b.count},
                    {"mean_predicted",
                     b.mean_predicted ? json(*b.mean_predicted) : json(nullptr)},
                    {"empirical_rate",
                     b.empirical_rate ? json(*b.empirical_rate) : json(nullptr)}});
  return json{{"n", t.n}, {"ece", t.ece}, {"brier", t.brier}, {"bins", bins}};
}

// Calibration document: {"kind": "platt", "A", "B"} or
// {"kind": "isotonic", "breakpoints": [[logit_upper, p], ...]}.

inline nlohmann::json to_json(const CalibrationModel &m) {
  using nlohmann::json;
  if (m.kind == CalibrationModel::Kind::platt)
    return json{{"kind", "platt"}, {"A", m.platt.a}, {"B", m.platt.b}};
  json bp = json::array();
  for (const auto &s : m.steps)
    bp.push_back({s.logit_upper, s.p});
  return json{{"kind", "isotonic"}, {"breakpoints", bp}};
}

inline CalibrationModel calibration_from_json(const nlohmann::json &j) {
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "platt")
      return CalibrationModel::make_platt(j.at("A").get<double>(),
                                          j.at("B").get<double>());
    if (kind != "isotonic")
      throw FormatError("calibration: unknown kind '" + kind + "'");
    CalibrationModel m;
    m.kind = CalibrationModel::Kind::isotonic;
    for (const auto &bp : j.at("breakpoints")) {
      const IsotonicStep s{bp.at(0).get<double>(), bp.at(1).get<double>()};
      if (!m.steps.empty() && (s.logit_upper <= m.steps.back().logit_upper ||
                               s.p < m.steps.back().p))
        throw FormatError("calibration: breakpoints must ascend");
      if (s.p < 0.0 || s.p > 1.0)
        throw FormatError("calibration: probability outside [0, 1]");
      m.steps.push_back(s);
    }
    if (m.steps.empty())
      throw FormatError("calibration: isotonic model without breakpoints");
    return m;
  } catch (const nlohmann::json::exception &e) {
    throw FormatError(std::string("calibration document: ") + e.what());
  }
}

} // namespace preblock
