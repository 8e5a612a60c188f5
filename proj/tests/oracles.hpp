#pragma once

// Independent reference implementations used as test oracles. They share no
// code with the library beyond plain data types and are written for
// obviousness, not speed.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <vector>

namespace oracle {

/// splitmix64 step written out from its published constants.
struct Splitmix {
  std::uint64_t s;
  std::uint64_t next() {
    s += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = s;
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
  }
  double uniform() { return std::ldexp(static_cast<double>(next() >> 11), -53); }
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = (std::numeric_limits<std::uint64_t>::max() - n + 1) % n;
    std::uint64_t r;
    do
      r = next();
    while (r < limit);
    return r % n;
  }
};

/// Pair-count AUC: wins + ties / 2 over every positive-negative pair.
inline double auc_pairs(const std::vector<double> &s, const std::vector<bool> &y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] && !y[j]) {
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return wins / pairs;
}

/// Type-7 quantile, sorting a copy.
inline double type7(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1) * p;
  const double lo = std::floor(h);
  const auto i = static_cast<std::size_t>(lo);
  if (i + 1 >= v.size())
    return v.back();
  return v[i] + (h - lo) * (v[i + 1] - v[i]);
}

/// Zero-padded 3x3 cross-correlation, direct nested loops in double.
/// Layouts: in[c][y][x], w[o][c][ky][kx].
inline std::vector<double> conv3x3(const std::vector<double> &in, int c_in, int h,
                                   int w, const std::vector<double> &weight,
                                   const std::vector<double> &bias) {
  const int c_out = static_cast<int>(bias.size());
  std::vector<double> out(static_cast<std::size_t>(c_out * h * w));
  for (int o = 0; o < c_out; ++o)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = bias[o];
        for (int c = 0; c < c_in; ++c)
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const int yy = y + dy, xx = x + dx;
              if (yy < 0 || yy >= h || xx < 0 || xx >= w)
                continue;
              acc += weight[((o * c_in + c) * 3 + dy + 1) * 3 + dx + 1] *
                     in[(c * h + yy) * w + xx];
            }
        out[(o * h + y) * w + x] = acc;
      }
  return out;
}

inline void batch_norm(std::vector<double> &x, int c, int plane,
                       const std::vector<double> &g, const std::vector<double> &b,
                       const std::vector<double> &m, const std::vector<double> &v,
                       double eps = 1e-5) {
  for (int k = 0; k < c; ++k)
    for (int i = 0; i < plane; ++i) {
      double &t = x[k * plane + i];
      t = (t - m[k]) / std::sqrt(v[k] + eps) * g[k] + b[k];
    }
}

inline std::vector<double> max_pool(const std::vector<double> &x, int c, int h, int w) {
  const int oh = h / 2, ow = w / 2;
  std::vector<double> out(static_cast<std::size_t>(c * oh * ow));
  for (int k = 0; k < c; ++k)
    for (int y = 0; y < oh; ++y)
      for (int z = 0; z < ow; ++z) {
        double m = -std::numeric_limits<double>::infinity();
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx)
            m = std::max(m, x[(k * h + 2 * y + dy) * w + 2 * z + dx]);
        out[(k * oh + y) * ow + z] = m;
      }
  return out;
}

inline std::vector<double> affine(const std::vector<double> &x,
                                  const std::vector<double> &w,
                                  const std::vector<double> &b) {
  std::vector<double> y(b.size());
  for (std::size_t o = 0; o < b.size(); ++o) {
    y[o] = b[o];
    for (std::size_t i = 0; i < x.size(); ++i)
      y[o] += w[o * x.size() + i] * x[i];
  }
  return y;
}

/// Direct DFT power spectrum of one real frame, bins 0..n/2.
inline std::vector<double> dft_power(const std::vector<double> &frame) {
  const std::size_t n = frame.size();
  std::vector<double> p(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0;
    for (std::size_t t = 0; t < n; ++t)
      acc += frame[t] * std::polar(1.0, -2.0 * std::numbers::pi *
                                            static_cast<double>(k * t % n) /
                                            static_cast<double>(n));
    p[k] = std::norm(acc);
  }
  return p;
}

/// Weight of an HTK-mel triangular filter at frequency f (Hz).
inline double mel_weight(std::size_t band, double f, std::size_t bands = 128,
                         double fmax = 8000.0) {
  auto mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
  auto hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
  const double step = mel(fmax) / static_cast<double>(bands + 1);
  const double lo = hz(step * static_cast<double>(band));
  const double mid = hz(step * static_cast<double>(band + 1));
  const double hi = hz(step * static_cast<double>(band + 2));
  if (f <= lo || f >= hi)
    return 0.0;
  return f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
}

/// Least-squares non-decreasing fit by exhaustive search over partitions of
/// the (already pooled, weighted) points into consecutive segments. The
/// optimum is constant on segments at their weighted means, so the best
/// monotone partition is the global minimizer. Returns fitted value per point.
inline std::vector<double> isotonic_exhaustive(const std::vector<double> &v,
                                               const std::vector<double> &w) {
  const std::size_t n = v.size();
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> best_fit;
  for (std::uint32_t cuts = 0; cuts < (1u << (n - 1)); ++cuts) {
    std::vector<double> fit(n);
    double prev = -std::numeric_limits<double>::infinity();
    bool monotone = true;
    std::size_t start = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool end = i + 1 == n || (cuts >> i & 1u);
      if (!end)
        continue;
      double sw = 0, sv = 0;
      for (std::size_t k = start; k <= i; ++k) {
        sw += w[k];
        sv += w[k] * v[k];
      }
      const double mean = sv / sw;
      if (mean < prev)
        monotone = false;
      prev = mean;
      for (std::size_t k = start; k <= i; ++k)
        fit[k] = mean;
      start = i + 1;
    }
    if (!monotone)
      continue;
    double sse = 0;
    for (std::size_t k = 0; k < n; ++k)
      sse += w[k] * (v[k] - fit[k]) * (v[k] - fit[k]);
    if (sse < best - 1e-15) {
      best = sse;
      best_fit = fit;
    }
  }
  return best_fit;
}

/// Youden cutpoint by trying every observed score; first maximum wins when
/// candidates are visited in ascending order.
struct Cut {
  double tau, tpr, fpr;
};
inline Cut youden_exhaustive(const std::vector<double> &s, const std::vector<bool> &y) {
  std::vector<double> taus = s;
  std::sort(taus.begin(), taus.end());
  taus.erase(std::unique(taus.begin(), taus.end()), taus.end());
  Cut best{0, 0, 0};
  double best_j = -2;
  for (double t : taus) {
    double tp = 0, fp = 0, p = 0, n = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      (y[i] ? p : n) += 1;
      if (s[i] >= t)
        (y[i] ? tp : fp) += 1;
    }
    const double j = tp / p - fp / n;
    if (j > best_j) {
      best_j = j;
      best = {t, tp / p, fp / n};
    }
  }
  return best;
}

} // namespace oracle
