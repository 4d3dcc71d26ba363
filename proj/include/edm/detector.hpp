#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "edm/divergence.hpp"
#include "edm/series.hpp"
#include "edm/stats.hpp"

namespace edm {

/// Every tunable of the detector.
///
/// `p_threshold` and `min_magnitude` are the user-facing filter. `p_weak` is
/// the lenient threshold used inside windows to build the weak change point
/// superset; any filter with p_threshold <= p_weak can be answered from that
/// superset without recomputing q-hat.
struct DetectionConfig {
  Method method = Method::welch_t;
  double p_threshold = 0.001;
  double min_magnitude = 0.0;
  std::size_t window = 50;
  std::size_t permutations = 100;
  std::uint64_t seed = 0;
  std::size_t min_segment = 3;
  /// Cap on tested segments per bisection; 0 means 10 * (T / min_segment).
  std::size_t max_iterations = 0;
  double p_weak = 0.5;
  QhatKernel kernel = QhatKernel::shifted;

  std::size_t stride() const noexcept { return window / 2; }

  void validate() const {
    if (!(p_threshold > 0.0 && p_threshold < 1.0))
      throw std::invalid_argument("p_threshold must lie in (0, 1)");
    if (!(p_weak > 0.0 && p_weak < 1.0)) throw std::invalid_argument("p_weak must lie in (0, 1)");
    if (!(min_magnitude >= 0.0)) throw std::invalid_argument("min_magnitude must be >= 0");
    if (window < 4) throw std::invalid_argument("window must be >= 4");
    if (permutations < 1) throw std::invalid_argument("permutations must be >= 1");
    if (min_segment < 2) throw std::invalid_argument("min_segment must be >= 2");
  }

  bool operator==(const DetectionConfig&) const = default;
};

struct ChangePoint {
  /// First point of the new regime.
  std::size_t index = 0;
  double time = 0.0;
  double p_value = 1.0;
  /// q-hat (monte_carlo) or t (welch_t).
  double statistic = 0.0;
  double mean_before = 0.0;
  double mean_after = 0.0;
  double magnitude = 0.0;

  bool operator==(const ChangePoint&) const = default;
};

/// Infinite magnitudes (zero mean before the change) always pass.
inline bool passes_magnitude(double magnitude, double min_magnitude) {
  if (min_magnitude <= 0.0 || std::isinf(magnitude)) return true;
  return std::fabs(magnitude) >= min_magnitude;
}

/// Thrown when bisection exceeds DetectionConfig::max_iterations.
class IterationLimitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed of the permutation stream for one segment. Depends only on the segment
// bounds so results do not depend on traversal order.
inline std::uint64_t segment_seed(std::uint64_t seed, std::size_t begin, std::size_t end) {
  return splitmix64(splitmix64(seed ^ splitmix64(begin)) ^ end);
}

inline ChangePoint describe(const Series& s, std::size_t index, const SampleSummary& left,
                            const SampleSummary& right, const SignificanceResult& sig) {
  ChangePoint cp;
  cp.index = index;
  cp.time = s.timestamps[index];
  cp.p_value = sig.p_value;
  cp.statistic = sig.statistic;
  cp.mean_before = left.mean;
  cp.mean_after = right.mean;
  cp.magnitude = relative_change(left.mean, right.mean);
  return cp;
}

// Welch-scored change point at `index` between [begin, index) and [index, end).
inline ChangePoint welch_change_point(const Series& s, std::size_t begin, std::size_t index,
                                      std::size_t end) {
  const auto xs = s.view();
  const auto left = summarize(xs.subspan(begin, index - begin));
  const auto right = summarize(xs.subspan(index, end - index));
  return describe(s, index, left, right, welch_t_test(left, right));
}

}  // namespace detail

namespace detail {

// Iterative bisection. `scan(begin, end)` returns q-hat for every split of
// [begin, end), taus relative to `begin`.
template <class Scan>
std::vector<ChangePoint> bisect(const Series& series, const DetectionConfig& config, Scan&& scan) {
  std::vector<ChangePoint> found;
  const std::size_t size = series.size();
  const std::size_t min_seg = config.min_segment;
  if (size < 2 * min_seg) return found;
  const std::size_t cap =
      config.max_iterations > 0 ? config.max_iterations : 10 * (size / min_seg) + 1;

  const auto xs = series.view();
  std::vector<std::pair<std::size_t, std::size_t>> pending{{0, size}};
  std::size_t iterations = 0;
  while (!pending.empty()) {
    const auto [begin, end] = pending.back();
    pending.pop_back();
    if (end - begin < 2 * min_seg) continue;
    if (++iterations > cap)
      throw IterationLimitError("e-divisive exceeded " + std::to_string(cap) + " iterations");

    const auto stats = scan(begin, end);
    const SplitStatistic best = best_split(stats, end - begin, min_seg);
    if (best.tau == 0) continue;
    const std::size_t index = begin + best.tau;

    const auto left = summarize(xs.subspan(begin, best.tau));
    const auto right = summarize(xs.subspan(index, end - index));
    const SignificanceResult sig =
        config.method == Method::welch_t
            ? welch_t_test(left, right)
            : permutation_test(xs.subspan(begin, end - begin), best.qhat, config.permutations,
                               segment_seed(config.seed, begin, end), min_seg, config.kernel);
    if (!(sig.p_value < config.p_threshold)) continue;
    ChangePoint cp = describe(series, index, left, right, sig);
    if (!passes_magnitude(cp.magnitude, config.min_magnitude)) continue;

    found.push_back(cp);
    pending.emplace_back(index, end);
    pending.emplace_back(begin, index);
  }
  std::sort(found.begin(), found.end(),
            [](const ChangePoint& a, const ChangePoint& b) { return a.index < b.index; });
  return found;
}

}  // namespace detail

/// Classic E-divisive: repeatedly split at the best q-hat while the split is
/// significant, recursing into both halves. Output is sorted by index.
inline std::vector<ChangePoint> e_divisive_classic(const Series& series, const DetectionConfig& config) {
  config.validate();
  const auto xs = series.view();
  return detail::bisect(series, config, [&](std::size_t begin, std::size_t end) {
    return qhat_all(xs.subspan(begin, end - begin), config.kernel);
  });
}

struct Window {
  std::size_t begin = 0;
  std::size_t end = 0;

  bool operator==(const Window&) const = default;
};

/// Windows of a series of length `size`: full windows [k*s, k*s + W) on a
/// grid anchored at 0 with stride s = floor(W/2), then the trailing window
/// [max(0, size - W), size). The trailing window is omitted when it coincides
/// with the last grid window.
inline std::vector<Window> detection_windows(std::size_t size, std::size_t window) {
  std::vector<Window> out;
  if (size < 2) return out;
  const std::size_t stride = std::max<std::size_t>(window / 2, 1);
  for (std::size_t begin = 0; begin + window <= size; begin += stride) out.push_back({begin, begin + window});
  const Window tail{size > window ? size - window : 0, size};
  if (out.empty() || out.back() != tail) out.push_back(tail);
  return out;
}

/// Candidates found by classic detection inside one window, in whole-series
/// indices, using the lenient generation thresholds.
inline std::vector<std::size_t> window_candidates(const Series& series, Window w,
                                                  const DetectionConfig& config) {
  DetectionConfig lenient = config;
  lenient.p_threshold = config.p_weak;
  lenient.min_magnitude = 0.0;
  lenient.max_iterations = 0;
  Series local;
  local.values.assign(series.values.begin() + w.begin, series.values.begin() + w.end);
  local.timestamps.assign(series.timestamps.begin() + w.begin, series.timestamps.begin() + w.end);
  const DistanceTable table(local.values);
  std::vector<std::size_t> out;
  for (const auto& cp : detail::bisect(local, lenient, [&](std::size_t begin, std::size_t end) {
         return table.qhat_all(begin, end);
       }))
    out.push_back(w.begin + cp.index);
  return out;
}

/// Annotates a weak candidate from the half-window on each side of it.
///
/// The context never reaches past index + W/2, so an annotation is final once
/// the series extends that far.
inline ChangePoint annotate_weak(const Series& series, std::size_t index, const DetectionConfig& config) {
  const std::size_t half = std::max<std::size_t>(config.window / 2, 1);
  const std::size_t begin = index > half ? index - half : 0;
  const std::size_t end = std::min(series.size(), index + half);
  return detail::welch_change_point(series, begin, index, end);
}

/// The weak change point superset: union of per-window candidates.
inline std::vector<ChangePoint> windowed_weak_detect(const Series& series, const DetectionConfig& config) {
  config.validate();
  std::set<std::size_t> indices;
  for (const Window& w : detection_windows(series.size(), config.window))
    for (std::size_t idx : window_candidates(series, w, config)) indices.insert(idx);
  std::vector<ChangePoint> out;
  out.reserve(indices.size());
  for (std::size_t idx : indices) out.push_back(annotate_weak(series, idx, config));
  return out;
}

/// Filters weak candidates down to change points passing `p_threshold` and
/// `min_magnitude`.
///
/// Each candidate is tested (Welch) between the segments bounded by its
/// neighbors. First, while two candidates (or a candidate and a series end)
/// are closer than `min_segment`, the worst candidate adjacent to such a
/// short segment is dropped. Then, while any candidate fails the thresholds,
/// the worst failing one is dropped. "Worst" is highest p, then smaller
/// |magnitude|, then larger index. Each drop rescores only the two
/// neighbors. The spacing phase does not depend on the thresholds, so with
/// min_magnitude = 0 a stricter p yields a subset of a laxer one.
inline std::vector<ChangePoint> merge_filter(const Series& series, std::span<const ChangePoint> weak,
                                             double p_threshold, double min_magnitude,
                                             std::size_t min_segment = 3) {
  const std::size_t size = series.size();
  std::vector<std::size_t> idx;
  idx.reserve(weak.size());
  for (const auto& cp : weak) {
    if (cp.index == 0 || cp.index >= size)
      throw std::invalid_argument("merge_filter: index " + std::to_string(cp.index) + " out of range");
    if (!idx.empty() && cp.index <= idx.back())
      throw std::invalid_argument("merge_filter: weak indices must be strictly increasing");
    idx.push_back(cp.index);
  }

  struct Scored {
    ChangePoint cp;
    bool too_close = false;
    bool fails = false;
  };
  auto score = [&](std::size_t k) {
    const std::size_t begin = k == 0 ? 0 : idx[k - 1];
    const std::size_t end = k + 1 == idx.size() ? size : idx[k + 1];
    const std::size_t at = idx[k];
    Scored s;
    s.cp = detail::welch_change_point(series, begin, at, end);
    s.too_close = at - begin < min_segment || end - at < min_segment;
    s.fails = !(s.cp.p_value < p_threshold) || !passes_magnitude(s.cp.magnitude, min_magnitude);
    return s;
  };
  auto worse = [](const ChangePoint& a, const ChangePoint& b) {
    if (a.p_value != b.p_value) return a.p_value > b.p_value;
    const double ma = std::fabs(a.magnitude), mb = std::fabs(b.magnitude);
    if (ma != mb) return ma < mb;
    return a.index > b.index;
  };

  std::vector<Scored> scored;
  scored.reserve(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) scored.push_back(score(k));

  auto eliminate = [&](auto&& eligible) {
    for (;;) {
      std::size_t worst = scored.size();
      for (std::size_t k = 0; k < scored.size(); ++k)
        if (eligible(scored[k]) && (worst == scored.size() || worse(scored[k].cp, scored[worst].cp)))
          worst = k;
      if (worst == scored.size()) return;
      idx.erase(idx.begin() + static_cast<std::ptrdiff_t>(worst));
      scored.erase(scored.begin() + static_cast<std::ptrdiff_t>(worst));
      if (worst > 0) scored[worst - 1] = score(worst - 1);
      if (worst < scored.size()) scored[worst] = score(worst);
    }
  };
  eliminate([](const Scored& s) { return s.too_close; });
  eliminate([](const Scored& s) { return s.fails; });

  std::vector<ChangePoint> out;
  out.reserve(scored.size());
  for (auto& s : scored) out.push_back(s.cp);
  return out;
}

/// Windowed weak detection followed by merge_filter at the user thresholds.
inline std::vector<ChangePoint> detect(const Series& series, const DetectionConfig& config) {
  const auto weak = windowed_weak_detect(series, config);
  return merge_filter(series, weak, config.p_threshold, config.min_magnitude, config.min_segment);
}

}  // namespace edm
