#ifndef MIST_STATS_HPP
#define MIST_STATS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "mist/errors.hpp"

namespace mist::stats {

// Percentile with linear interpolation between closest ranks:
// rank = p/100 * (n-1), value = x[lo] + frac * (x[lo+1] - x[lo]).
// This single definition is used everywhere a percentile is needed.
inline double percentile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty())
    throw Error(ErrorCode::InvalidArgument, "percentile of empty sample");
  if (sorted.size() == 1) return sorted[0];
  const double rank = p / 100.0 * static_cast<double>(sorted.size() - 1);
  const double clamped = std::clamp(rank, 0.0, double(sorted.size() - 1));
  const std::size_t lo = static_cast<std::size_t>(std::floor(clamped));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = clamped - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline double percentile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  return percentile_sorted(values, p);
}

inline double mean(const std::vector<double>& values) {
  if (values.empty())
    throw Error(ErrorCode::InvalidArgument, "mean of empty sample");
  double acc = 0.0;
  for (double v : values) acc += v;
  return acc / static_cast<double>(values.size());
}

// Population (ddof = 0) standard deviation.
inline double stddev_population(const std::vector<double>& values) {
  const double m = mean(values);
  double acc = 0.0;
  for (double v : values) acc += (v - m) * (v - m);
  return std::sqrt(acc / static_cast<double>(values.size()));
}

// Sample (ddof = 1) standard deviation; 0 for a single observation.
inline double stddev_sample(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  const double m = mean(values);
  double acc = 0.0;
  for (double v : values) acc += (v - m) * (v - m);
  return std::sqrt(acc / static_cast<double>(values.size() - 1));
}

inline double median(std::vector<double> values) {
  return percentile(std::move(values), 50.0);
}

}  // namespace mist::stats

#endif
