#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace edm {

using Attributes = std::map<std::string, std::string>;

/// An ordered timeseries of benchmark results.
///
/// `timestamps` are seconds since the Unix epoch. `attributes` is either
/// empty or holds one map per point (commit hash, build id, ...).
struct Series {
  std::vector<double> values;
  std::vector<double> timestamps;
  std::vector<Attributes> attributes;

  std::size_t size() const noexcept { return values.size(); }
  bool empty() const noexcept { return values.empty(); }

  std::span<const double> view() const noexcept { return values; }

  /// Builds a series with timestamps 0, 1, 2, ...
  static Series from_values(std::vector<double> v) {
    Series s;
    s.timestamps.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) s.timestamps[i] = static_cast<double>(i);
    s.values = std::move(v);
    return s;
  }

  /// Copy of the points in [begin, end).
  Series slice(std::size_t begin, std::size_t end) const {
    Series out;
    out.values.assign(values.begin() + begin, values.begin() + end);
    out.timestamps.assign(timestamps.begin() + begin, timestamps.begin() + end);
    if (!attributes.empty())
      out.attributes.assign(attributes.begin() + begin, attributes.begin() + end);
    return out;
  }

  bool operator==(const Series&) const = default;
};

/// Throws std::invalid_argument when the series breaks its invariants.
inline void validate(const Series& s) {
  if (s.values.size() != s.timestamps.size())
    throw std::invalid_argument("series: values and timestamps differ in length");
  if (!s.attributes.empty() && s.attributes.size() != s.values.size())
    throw std::invalid_argument("series: attributes must be empty or one per point");
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    if (!std::isfinite(s.values[i]))
      throw std::invalid_argument("series: non-finite value at index " + std::to_string(i));
    if (i > 0 && s.timestamps[i] < s.timestamps[i - 1])
      throw std::invalid_argument("series: timestamps decrease at index " + std::to_string(i));
  }
}

inline double mean(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("mean of an empty segment");
  long double sum = 0;
  for (double x : xs) sum += x;
  return static_cast<double>(sum / static_cast<long double>(xs.size()));
}

/// Unbiased sample variance; zero for fewer than two points.
inline double sample_variance(std::span<const double> xs, double mu) {
  if (xs.size() < 2) return 0.0;
  long double acc = 0;
  for (double x : xs) {
    const long double d = static_cast<long double>(x) - mu;
    acc += d * d;
  }
  return static_cast<double>(acc / static_cast<long double>(xs.size() - 1));
}

}  // namespace edm
