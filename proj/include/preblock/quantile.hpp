#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "preblock/error.hpp"

namespace preblock {

/// Type-7 (linear interpolation) quantile of an ascending-sorted sample.
/// h = (n - 1) p, result = x[floor h] + (h - floor h) (x[floor h + 1] - x[floor h]).
inline double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty())
    throw ContractError("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0))
    throw ContractError("quantile probability outside [0, 1]");
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size())
    return sorted.back();
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

inline double quantile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  return quantile_sorted(values, p);
}

} // namespace preblock
