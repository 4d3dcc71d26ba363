#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string_view>

#include "edm/series.hpp"

namespace edm {

enum class Method { monte_carlo, welch_t };

inline std::string_view to_string(Method m) {
  return m == Method::monte_carlo ? "monte_carlo" : "welch_t";
}

inline Method method_from_string(std::string_view s) {
  if (s == "monte_carlo" || s == "montecarlo") return Method::monte_carlo;
  if (s == "welch_t" || s == "t") return Method::welch_t;
  throw std::invalid_argument("unknown significance method: " + std::string(s));
}

struct SignificanceResult {
  double p_value = 1.0;
  Method method = Method::welch_t;
  /// Observed max q-hat for monte_carlo, the t value for welch_t.
  double statistic = 0.0;
};

namespace detail {

// Continued fraction for the incomplete beta function, modified Lentz.
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIterations = 20000;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  return h;
}

}  // namespace detail

/// Regularized incomplete beta function I_x(a, b) for a, b > 0, x in [0, 1].
inline double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw std::domain_error("incomplete_beta: a and b must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw std::domain_error("incomplete_beta: x outside [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                           b * std::log1p(-x);
  const double front = std::exp(log_front);
  // The fraction converges fast only on one side of the mean a/(a+b).
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

/// P(T <= t) for Student's t with `df` degrees of freedom (df > 0, may be fractional).
inline double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw std::domain_error("student_t_cdf: df must be positive");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double tail = 0.5 * incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
  return t > 0 ? 1.0 - tail : tail;
}

/// Two-sided P(|T| >= |t|).
inline double student_t_two_sided(double t, double df) {
  if (!(df > 0.0)) throw std::domain_error("student_t_two_sided: df must be positive");
  if (std::isinf(t)) return 0.0;
  return std::clamp(incomplete_beta(df / 2.0, 0.5, df / (df + t * t)), 0.0, 1.0);
}

/// Size, mean and unbiased variance of one sample.
struct SampleSummary {
  std::size_t n = 0;
  double mean = 0.0;
  double variance = 0.0;
};

inline SampleSummary summarize(std::span<const double> xs) {
  SampleSummary s;
  s.n = xs.size();
  s.mean = mean(xs);
  s.variance = sample_variance(xs, s.mean);
  return s;
}

/// Welch's unequal-variance two-sample t-test, two-sided.
///
/// Flat segments are common in CI data: when both sides have zero variance
/// the result is p = 1 for equal means and p = 0 otherwise.
inline SignificanceResult welch_t_test(const SampleSummary& left, const SampleSummary& right) {
  if (left.n == 0 || right.n == 0) throw std::invalid_argument("welch_t_test: empty segment");
  const double nl = static_cast<double>(left.n);
  const double nr = static_cast<double>(right.n);
  const double a = left.variance / nl;
  const double b = right.variance / nr;

  SignificanceResult r;
  r.method = Method::welch_t;
  if (a == 0.0 && b == 0.0) {
    if (left.mean == right.mean) {
      r.statistic = 0.0;
      r.p_value = 1.0;
    } else {
      r.statistic = std::copysign(std::numeric_limits<double>::infinity(), left.mean - right.mean);
      r.p_value = 0.0;
    }
    return r;
  }
  const double se2 = a + b;
  r.statistic = (left.mean - right.mean) / std::sqrt(se2);
  double denom = 0.0;
  if (a > 0.0) denom += a * a / (nl - 1.0);
  if (b > 0.0) denom += b * b / (nr - 1.0);
  const double df = se2 * se2 / denom;
  r.p_value = student_t_two_sided(r.statistic, df);
  return r;
}

inline SignificanceResult welch_t_test(std::span<const double> left, std::span<const double> right) {
  if (left.empty() || right.empty()) throw std::invalid_argument("welch_t_test: empty segment");
  return welch_t_test(summarize(left), summarize(right));
}

/// Relative change of means, mean_right / mean_left - 1.
///
/// A zero left mean yields a signed infinity (or 0 when both means are 0);
/// callers treat infinities as always passing a magnitude filter.
inline double relative_change(double mean_left, double mean_right) {
  if (mean_left == 0.0) {
    if (mean_right == 0.0) return 0.0;
    return std::copysign(std::numeric_limits<double>::infinity(), mean_right);
  }
  return mean_right / mean_left - 1.0;
}

inline double magnitude(std::span<const double> left, std::span<const double> right) {
  if (left.empty() || right.empty()) throw std::invalid_argument("magnitude: empty segment");
  return relative_change(mean(left), mean(right));
}

}  // namespace edm
