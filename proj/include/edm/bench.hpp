#pragma once

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "edm/detector.hpp"
#include "edm/state.hpp"

namespace edm {

enum class BenchVariant { naive, shifted, classic_t, windowed, incremental };

inline constexpr BenchVariant kAllVariants[] = {BenchVariant::naive, BenchVariant::shifted, BenchVariant::classic_t,
                                                BenchVariant::windowed, BenchVariant::incremental};

inline const char* to_string(BenchVariant v) {
  switch (v) {
    case BenchVariant::naive: return "naive";
    case BenchVariant::shifted: return "shifted";
    case BenchVariant::classic_t: return "classic_t";
    case BenchVariant::windowed: return "windowed";
    case BenchVariant::incremental: return "incremental";
  }
  return "?";
}

inline BenchVariant variant_from_string(const std::string& s) {
  for (auto v : kAllVariants)
    if (s == to_string(v)) return v;
  throw std::invalid_argument("unknown variant '" + s + "'");
}

struct BenchReport {
  BenchVariant variant{};
  std::string dataset;
  double p_threshold = 0.0;
  std::size_t change_points_found = 0;
  double median_ms = 0.0;
  double min_ms = 0.0;
  double max_ms = 0.0;
  std::size_t runs = 0;
};

inline double median(std::vector<double> xs) {
  if (xs.empty()) throw std::invalid_argument("median of nothing");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

/// Wall time of `fn` in milliseconds: `warmups` untimed calls, then `runs`
/// timed ones.
inline std::vector<double> time_runs(const std::function<void()>& fn, std::size_t runs, std::size_t warmups = 2) {
  using clock = std::chrono::steady_clock;
  for (std::size_t i = 0; i < warmups; ++i) fn();
  std::vector<double> ms;
  ms.reserve(runs);
  for (std::size_t i = 0; i < runs; ++i) {
    const auto start = clock::now();
    fn();
    ms.push_back(std::chrono::duration<double, std::milli>(clock::now() - start).count());
  }
  return ms;
}

/// Times one detection variant on `series`.
///
/// naive/shifted: bisection with permutation tests (config.permutations),
/// differing only in the q-hat kernel. classic_t: bisection with Welch's
/// test. windowed: weak-set generation plus filtering. incremental: the
/// weak set of the first T-1 points is computed once, untimed; each run
/// appends the last point and refilters.
inline BenchReport run_bench(const Series& series, const std::string& dataset, BenchVariant variant,
                             const DetectionConfig& config, std::size_t runs, std::size_t warmups = 2) {
  if (runs < 1) throw std::invalid_argument("runs must be >= 1");
  config.validate();
  BenchReport report;
  report.variant = variant;
  report.dataset = dataset;
  report.p_threshold = config.p_threshold;
  report.runs = runs;

  std::size_t found = 0;
  std::function<void()> fn;
  DetectionConfig c = config;
  AnalyzedSeries base;
  Series last;
  switch (variant) {
    case BenchVariant::naive:
    case BenchVariant::shifted:
      c.method = Method::monte_carlo;
      c.kernel = variant == BenchVariant::naive ? QhatKernel::naive : QhatKernel::shifted;
      fn = [&] { found = e_divisive_classic(series, c).size(); };
      break;
    case BenchVariant::classic_t:
      c.method = Method::welch_t;
      fn = [&] { found = e_divisive_classic(series, c).size(); };
      break;
    case BenchVariant::windowed:
      fn = [&] { found = detect(series, c).size(); };
      break;
    case BenchVariant::incremental:
      if (series.size() < 2) throw std::invalid_argument("incremental bench needs at least 2 points");
      base = analyze_full(series.slice(0, series.size() - 1), c);
      last = series.slice(series.size() - 1, series.size());
      fn = [&] { found = refilter(append_points(base, last, c), c.p_threshold, c.min_magnitude).size(); };
      break;
  }
  const auto ms = time_runs(fn, runs, warmups);
  report.change_points_found = found;
  report.median_ms = std::max(median(ms), 1e-6);
  report.min_ms = *std::min_element(ms.begin(), ms.end());
  report.max_ms = *std::max_element(ms.begin(), ms.end());
  return report;
}

}  // namespace edm
