#pragma once

// E-divisive divergence kernels with alpha = 1 (absolute differences).
//
// For a split at tau with n = tau points on the left and m = T - tau on the
// right:
//
//   qhat(tau) = n*m/(n+m) * ( 2/(n*m) * cross
//                           - 2/(n*(n-1)) * within_left
//                           - 2/(m*(m-1)) * within_right )
//
// where `cross` sums |x_i - x_j| over pairs on opposite sides and the within
// terms sum over unordered pairs on one side. A side with fewer than two
// points contributes zero.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "edm/series.hpp"
#include "edm/stats.hpp"

namespace edm {

struct SplitStatistic {
  std::size_t tau = 0;
  double qhat = 0.0;

  bool operator==(const SplitStatistic&) const = default;
};

enum class QhatKernel { naive, shifted };

namespace detail {

inline void check_tau(std::size_t size, std::size_t tau) {
  if (tau < 1 || tau >= size)
    throw std::out_of_range("split index " + std::to_string(tau) + " outside [1, " +
                            std::to_string(size) + ")");
}

inline double combine_qhat(std::size_t n, std::size_t m, long double cross, long double within_left,
                           long double within_right) {
  const long double ln = static_cast<long double>(n);
  const long double lm = static_cast<long double>(m);
  long double bracket = 2.0L * cross / (ln * lm);
  if (n >= 2) bracket -= 2.0L * within_left / (ln * (ln - 1.0L));
  if (m >= 2) bracket -= 2.0L * within_right / (lm * (lm - 1.0L));
  const double q = static_cast<double>(ln * lm / (ln + lm) * bracket);
  // Cancellation can leave a tiny negative residue.
  return q < 0.0 ? 0.0 : q;
}

// Sum of |x[k] - x[j]| for j in [begin, end).
inline double row_sum(std::span<const double> xs, std::size_t k, std::size_t begin, std::size_t end) {
  const double xk = xs[k];
  double s = 0.0;
  for (std::size_t j = begin; j < end; ++j) s += std::fabs(xk - xs[j]);
  return s;
}

// Sum of |x_i - x_j| over unordered pairs in [begin, end).
inline long double within_sum(std::span<const double> xs, std::size_t begin, std::size_t end) {
  long double s = 0.0L;
  for (std::size_t i = begin; i < end; ++i) s += row_sum(xs, i, i + 1, end);
  return s;
}

// ">=" with slack for summation-order rounding: a permutation that merely
// reverses the series must still count as a tie.
inline bool at_least(double candidate, double observed) {
  return candidate >= observed - 1e-12 * std::max(1.0, std::fabs(observed));
}

// Unbiased integer in [0, bound) from a 64-bit engine, by rejection.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return r % bound;
}

}  // namespace detail

/// Sum of |x_i - x_j| for i < tau <= j.
inline double pairwise_diff_sum_cross(std::span<const double> xs, std::size_t tau) {
  detail::check_tau(xs.size(), tau);
  long double s = 0.0L;
  for (std::size_t i = 0; i < tau; ++i) s += detail::row_sum(xs, i, tau, xs.size());
  return static_cast<double>(s);
}

/// q-hat at one split, recomputed from scratch in O(T^2).
inline double qhat_naive(std::span<const double> xs, std::size_t tau) {
  detail::check_tau(xs.size(), tau);
  long double cross = 0.0L;
  for (std::size_t i = 0; i < tau; ++i) cross += detail::row_sum(xs, i, tau, xs.size());
  const long double left = detail::within_sum(xs, 0, tau);
  const long double right = detail::within_sum(xs, tau, xs.size());
  return detail::combine_qhat(tau, xs.size() - tau, cross, left, right);
}

/// q-hat for every split, each from scratch: O(T^3).
inline std::vector<SplitStatistic> qhat_all_naive(std::span<const double> xs) {
  std::vector<SplitStatistic> out;
  if (xs.size() < 2) return out;
  out.reserve(xs.size() - 1);
  for (std::size_t tau = 1; tau < xs.size(); ++tau) out.push_back({tau, qhat_naive(xs, tau)});
  return out;
}

/// q-hat for every split in O(T^2).
///
/// Moving the split from tau to tau+1 moves x[tau] from the right side to
/// the left: its row of differences against the left side leaves `cross`
/// and joins `within_left`, its row against the rest of the right side
/// leaves `within_right` and joins `cross`.
inline std::vector<SplitStatistic> qhat_all_shifted(std::span<const double> xs) {
  std::vector<SplitStatistic> out;
  const std::size_t size = xs.size();
  if (size < 2) return out;
  out.reserve(size - 1);

  long double cross = detail::row_sum(xs, 0, 1, size);
  long double within_left = 0.0L;
  long double within_right = detail::within_sum(xs, 1, size);
  out.push_back({1, detail::combine_qhat(1, size - 1, cross, within_left, within_right)});

  for (std::size_t tau = 1; tau + 1 < size; ++tau) {
    const long double to_left = detail::row_sum(xs, tau, 0, tau);
    const long double to_right = detail::row_sum(xs, tau, tau + 1, size);
    cross += to_right - to_left;
    within_left += to_left;
    within_right -= to_right;
    out.push_back({tau + 1, detail::combine_qhat(tau + 1, size - tau - 1, cross, within_left,
                                                 within_right)});
  }
  return out;
}

inline std::vector<SplitStatistic> qhat_all(std::span<const double> xs, QhatKernel kernel) {
  return kernel == QhatKernel::naive ? qhat_all_naive(xs) : qhat_all_shifted(xs);
}

/// Pairwise-difference table of a short series with 2D prefix sums.
///
/// Built once in O(n^2); afterwards q-hat at any split of any sub-segment
/// costs O(1), so rescanning the pieces of a bisection is linear in their
/// length. Used for the fixed-size detection windows.
class DistanceTable {
 public:
  explicit DistanceTable(std::span<const double> xs) : n_(xs.size()), prefix_((n_ + 1) * (n_ + 1), 0.0) {
    for (std::size_t i = 0; i < n_; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < n_; ++j) {
        row += std::fabs(xs[i] - xs[j]);
        at(i + 1, j + 1) = at(i, j + 1) + row;
      }
    }
  }

  std::size_t size() const noexcept { return n_; }

  /// Sum of |x_i - x_j| over i in [r0, r1), j in [c0, c1).
  double block(std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) const {
    return at(r1, c1) - at(r0, c1) - at(r1, c0) + at(r0, c0);
  }

  /// q-hat for every split of [begin, end); taus are relative to `begin`.
  std::vector<SplitStatistic> qhat_all(std::size_t begin, std::size_t end) const {
    std::vector<SplitStatistic> out;
    if (end - begin < 2) return out;
    out.reserve(end - begin - 1);
    for (std::size_t split = begin + 1; split < end; ++split) {
      const double cross = block(begin, split, split, end);
      const double left = block(begin, split, begin, split) / 2.0;
      const double right = block(split, end, split, end) / 2.0;
      out.push_back({split - begin, detail::combine_qhat(split - begin, end - split, cross, left, right)});
    }
    return out;
  }

 private:
  double& at(std::size_t i, std::size_t j) { return prefix_[i * (n_ + 1) + j]; }
  double at(std::size_t i, std::size_t j) const { return prefix_[i * (n_ + 1) + j]; }

  std::size_t n_;
  std::vector<double> prefix_;
};

/// Split with the largest q-hat among tau in [min_segment, T - min_segment].
/// Ties go to the smallest tau. Returns tau = 0 when no admissible split exists.
inline SplitStatistic best_split(std::span<const SplitStatistic> stats, std::size_t size,
                                 std::size_t min_segment = 1) {
  SplitStatistic best{0, -1.0};
  const std::size_t lo = std::max<std::size_t>(min_segment, 1);
  for (const auto& s : stats) {
    if (s.tau < lo || s.tau + lo > size) continue;
    if (s.qhat > best.qhat) best = s;
  }
  if (best.tau == 0) best.qhat = 0.0;
  return best;
}

inline SplitStatistic best_split(std::span<const double> xs, std::size_t min_segment = 1,
                                 QhatKernel kernel = QhatKernel::shifted) {
  const auto stats = qhat_all(xs, kernel);
  return best_split(stats, xs.size(), min_segment);
}

/// Monte Carlo significance of an observed max q-hat.
///
/// Each of `permutations` Fisher-Yates shuffles (mt19937_64 seeded with
/// `seed`) is rescanned; p is the fraction whose best q-hat is >= the
/// observed one, so p is always a multiple of 1/permutations.
inline SignificanceResult permutation_test(std::span<const double> xs, double observed_max_qhat,
                                           std::size_t permutations, std::uint64_t seed,
                                           std::size_t min_segment = 1,
                                           QhatKernel kernel = QhatKernel::shifted) {
  if (permutations == 0) throw std::invalid_argument("permutation_test: need at least one permutation");
  if (xs.size() < 2) throw std::invalid_argument("permutation_test: need at least two points");
  std::mt19937_64 rng(seed);
  std::vector<double> shuffled(xs.begin(), xs.end());
  std::size_t at_least_as_large = 0;
  for (std::size_t p = 0; p < permutations; ++p) {
    for (std::size_t i = shuffled.size() - 1; i > 0; --i)
      std::swap(shuffled[i], shuffled[detail::uniform_below(rng, i + 1)]);
    if (detail::at_least(best_split(shuffled, min_segment, kernel).qhat, observed_max_qhat))
      ++at_least_as_large;
  }
  return {static_cast<double>(at_least_as_large) / static_cast<double>(permutations),
          Method::monte_carlo, observed_max_qhat};
}

/// Exact permutation p-value over every distinct arrangement of the values.
/// Only practical for short series (the arrangement count grows factorially).
inline SignificanceResult permutation_test_exhaustive(std::span<const double> xs,
                                                      double observed_max_qhat,
                                                      std::size_t min_segment = 1) {
  if (xs.size() < 2) throw std::invalid_argument("permutation_test_exhaustive: need at least two points");
  if (xs.size() > 12) throw std::invalid_argument("permutation_test_exhaustive: series too long");
  std::vector<double> arrangement(xs.begin(), xs.end());
  std::sort(arrangement.begin(), arrangement.end());
  std::size_t total = 0;
  std::size_t at_least_as_large = 0;
  do {
    ++total;
    if (detail::at_least(best_split(arrangement, min_segment).qhat, observed_max_qhat))
      ++at_least_as_large;
  } while (std::next_permutation(arrangement.begin(), arrangement.end()));
  return {static_cast<double>(at_least_as_large) / static_cast<double>(total), Method::monte_carlo,
          observed_max_qhat};
}

}  // namespace edm
