#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "edm/series.hpp"

namespace edm {

/// From `index` on, the mean is `level`.
struct StepSpec {
  std::size_t index = 0;
  double level = 0.0;
};

struct SyntheticSpec {
  std::size_t length = 0;
  double base_level = 0.0;
  std::vector<StepSpec> steps;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  double start_time = 1'700'000'000.0;
  double interval = 86'400.0;
};

/// Piecewise-constant means plus Gaussian noise, deterministic per seed.
inline Series gen_synthetic(const SyntheticSpec& spec) {
  if (spec.sigma < 0.0) throw std::invalid_argument("sigma must be >= 0");
  std::size_t previous = 0;
  for (const auto& step : spec.steps) {
    if (step.index == 0 || step.index >= spec.length)
      throw std::invalid_argument("step index " + std::to_string(step.index) + " outside (0, T)");
    if (step.index <= previous && previous != 0)
      throw std::invalid_argument("step indices must be strictly increasing");
    previous = step.index;
  }
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Series s;
  s.values.reserve(spec.length);
  s.timestamps.reserve(spec.length);
  double level = spec.base_level;
  auto next = spec.steps.begin();
  for (std::size_t i = 0; i < spec.length; ++i) {
    if (next != spec.steps.end() && next->index == i) level = (next++)->level;
    const double eps = noise(rng);
    s.values.push_back(spec.sigma > 0.0 ? level + spec.sigma * eps : level);
    s.timestamps.push_back(spec.start_time + spec.interval * static_cast<double>(i));
  }
  return s;
}

/// 365 daily points with a mix of lasting shifts, a short-lived regression
/// and subtle drifts. Stand-in for a year of nightly benchmark results.
inline SyntheticSpec demo_spec(std::uint64_t seed = 365) {
  SyntheticSpec spec;
  spec.length = 365;
  spec.base_level = 100.0;
  spec.sigma = 2.0;
  spec.seed = seed;
  spec.steps = {{40, 104.0},  {75, 101.0},  {101, 112.0}, {104, 101.0}, {150, 97.0},
                {190, 99.0},  {230, 106.0}, {260, 105.0}, {290, 95.0},  {330, 98.0}};
  return spec;
}

inline Series demo_series(std::uint64_t seed = 365) { return gen_synthetic(demo_spec(seed)); }

/// The demo pattern tiled (or truncated) to `length` points.
inline SyntheticSpec demo_spec_of_length(std::size_t length, std::uint64_t seed = 365) {
  const SyntheticSpec one = demo_spec(seed);
  SyntheticSpec spec = one;
  spec.length = length;
  spec.steps.clear();
  for (std::size_t base = 0; base < length; base += one.length) {
    if (base > 0) spec.steps.push_back({base, one.base_level});
    for (const auto& step : one.steps)
      if (base + step.index < length) spec.steps.push_back({base + step.index, step.level});
  }
  return spec;
}

}  // namespace edm
