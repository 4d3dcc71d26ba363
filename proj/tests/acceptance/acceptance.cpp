// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. Timing checks assume an optimized build.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "../oracles.hpp"
#include "edm/bench.hpp"
#include "edm/detector.hpp"
#include "edm/divergence.hpp"
#include "edm/state.hpp"
#include "edm/synthetic.hpp"

namespace {

using Clock = std::chrono::steady_clock;

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
  std::printf("%s  %-34s %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += std::log(xs[i]);
    my += std::log(ys[i]);
  }
  mx /= xs.size();
  my /= ys.size();
  double num = 0, den = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    num += (std::log(xs[i]) - mx) * (std::log(ys[i]) - my);
    den += (std::log(xs[i]) - mx) * (std::log(xs[i]) - mx);
  }
  return num / den;
}

edm::Series random_step_series(std::mt19937_64& rng, std::size_t length) {
  edm::SyntheticSpec spec;
  spec.length = length;
  spec.base_level = 100.0;
  spec.sigma = 0.5 + static_cast<double>(rng() % 40) / 10.0;
  spec.seed = rng();
  for (std::size_t i = 10 + rng() % 80; i + 5 < length; i += 10 + rng() % 150)
    spec.steps.push_back({i, 100.0 + static_cast<double>(rng() % 21) - 10.0});
  return edm::gen_synthetic(spec);
}

void qhat_oracle_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1000);
  double worst = 0.0;
  std::size_t compared = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto xs = oracle::random_series(rng, 2 + rng() % 127, trial % 2 == 1);
    const auto naive = edm::qhat_all_naive(xs);
    const auto shifted = edm::qhat_all_shifted(xs);
    if (naive.size() != shifted.size()) {
      worst = INFINITY;
      break;
    }
    for (std::size_t i = 0; i < naive.size(); ++i) {
      const double rel = std::fabs(naive[i].qhat - shifted[i].qhat) / std::max(1.0, std::fabs(naive[i].qhat));
      worst = std::max(worst, naive[i].tau == shifted[i].tau ? rel : INFINITY);
      ++compared;
    }
  }
  const double elapsed = seconds_since(t0);
  report(worst <= 1e-9 && elapsed < 30.0, "qhat oracle equivalence",
         fmt("1000 series, %zu splits, max rel err %.2e (tol 1e-9), %.2f s (limit 30 s)", compared, worst, elapsed));
}

void hand_derived_values() {
  const std::vector<double> step{1, 1, 1, 10, 10, 10};
  const std::vector<double> shorter{0, 0, 10, 10};
  const double q = edm::qhat_naive(step, 3);
  const auto all = edm::qhat_all_shifted(shorter);
  const auto all_naive = edm::qhat_all_naive(shorter);
  bool ok = std::fabs(q - 27.0) <= 1e-12 && std::fabs(oracle::qhat(step, 3) - 27.0) <= 1e-12 && all.size() == 3;
  const double expected[] = {5, 20, 5};
  for (std::size_t i = 0; ok && i < 3; ++i)
    ok = std::fabs(all[i].qhat - expected[i]) <= 1e-12 && std::fabs(all_naive[i].qhat - expected[i]) <= 1e-12;
  report(ok, "hand-derived qhat values",
         fmt("q([1,1,1,10,10,10],3)=%.15g; q([0,0,10,10])=[%.15g, %.15g, %.15g] (tol 1e-12)", q,
             all.size() > 0 ? all[0].qhat : NAN, all.size() > 1 ? all[1].qhat : NAN, all.size() > 2 ? all[2].qhat : NAN));
}

void exhaustive_permutation() {
  const std::vector<double> step{1, 1, 1, 10, 10, 10};
  const double observed = edm::best_split(step).qhat;
  const double exact = edm::permutation_test_exhaustive(step, observed).p_value;
  const double oracle_p = oracle::exhaustive_step_p(observed);
  const double mc = edm::permutation_test(step, observed, 10000, 20240601).p_value;
  report(exact == 0.1 && oracle_p == 0.1 && mc >= 0.08 && mc <= 0.12, "exhaustive permutation p",
         fmt("exhaustive p=%.17g, arrangement oracle p=%.17g (want 0.1); monte carlo m=10000 p=%.4f (want [0.08, 0.12])",
             exact, oracle_p, mc));
}

void incremental_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(603);
  const edm::DetectionConfig config;
  int mismatches = 0;
  std::size_t appends = 0, points = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto full = random_step_series(rng, 100 + rng() % 1901);
    std::size_t len = 20 + rng() % (full.size() / 2);
    auto state = edm::analyze_full(full.slice(0, len), config);
    while (len < full.size()) {
      const std::size_t batch = std::min<std::size_t>(full.size() - len, 1 + rng() % (rng() % 4 == 0 ? 60 : 5));
      state = edm::append_points(state, full.slice(len, len + batch), config);
      len += batch;
      ++appends;
    }
    const auto reference = edm::analyze_full(full, config);
    points += reference.weak_points.size();
    if (state.weak_points != reference.weak_points || state.series_hash != reference.series_hash) ++mismatches;
  }
  report(mismatches == 0, "incremental/full equivalence",
         fmt("50 series (T up to 2000), %zu appends, %zu weak points compared exactly, %d mismatching series, %.1f s",
             appends, points, mismatches, seconds_since(t0)));
}

void refilter_equivalence() {
  std::mt19937_64 rng(504);
  const edm::DetectionConfig gen;
  int mismatches = 0, checks = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = random_step_series(rng, 50 + rng() % 600);
    const auto state = edm::analyze_full(s, gen);
    for (double p : {0.001, 0.01, 0.1, 0.2})
      for (double g : {0.0, 0.05}) {
        edm::DetectionConfig user = gen;
        user.p_threshold = p;
        user.min_magnitude = g;
        ++checks;
        if (edm::refilter(state, p, g) != edm::detect(s, user)) ++mismatches;
      }
  }
  report(mismatches == 0, "refilter equivalence",
         fmt("50 series x p{0.001,0.01,0.1,0.2} x g{0,0.05}: %d/%d identical", checks - mismatches, checks));
}

void p_sweep_trend() {
  const auto state = edm::analyze_full(edm::demo_series(), {});
  std::vector<std::size_t> counts;
  for (double p : {0.001, 0.01, 0.1, 0.2}) counts.push_back(edm::refilter(state, p, 0.0).size());
  const bool ok = std::is_sorted(counts.begin(), counts.end());
  report(ok, "p sweep trend (365-point series)",
         fmt("counts at p=0.001/0.01/0.1/0.2: %zu / %zu / %zu / %zu (nondecreasing required)", counts[0], counts[1],
             counts[2], counts[3]));
}

void variant_ordering() {
  const auto series = edm::demo_series();
  edm::DetectionConfig c;
  c.p_threshold = 0.01;
  const std::size_t runs = 30;
  std::vector<edm::BenchReport> r;
  for (auto v : edm::kAllVariants) r.push_back(edm::run_bench(series, "demo-365", v, c, runs));
  std::vector<double> gaps;
  bool ok = true;
  for (std::size_t i = 0; i + 1 < r.size(); ++i) {
    gaps.push_back(r[i].median_ms / r[i + 1].median_ms);
    ok = ok && gaps.back() >= 1.5;
  }
  report(ok, "variant time ordering",
         fmt("median ms over %zu runs: naive %.1f > shifted %.2f > classic_t %.3f > windowed %.3f >= incremental "
             "%.3f; gaps %.1fx %.1fx %.2fx %.2fx (each >= 1.5x)",
             runs, r[0].median_ms, r[1].median_ms, r[2].median_ms, r[3].median_ms, r[4].median_ms, gaps[0], gaps[1],
             gaps[2], gaps[3]));
}

double median_ms(const std::function<void()>& fn, std::size_t runs) {
  return edm::median(edm::time_runs(fn, runs, 2));
}

void complexity_slopes() {
  const auto t0 = Clock::now();
  const std::vector<double> sizes{64, 128, 256, 512};
  std::vector<double> naive_ms, detect_ms;
  std::mt19937_64 rng(77);
  volatile double sink = 0;
  for (double t : sizes) {
    const auto xs = oracle::random_series(rng, static_cast<std::size_t>(t), false);
    naive_ms.push_back(median_ms([&] { sink = sink + edm::qhat_all_naive(xs).back().qhat; }, 5));
    const auto s = edm::gen_synthetic(edm::demo_spec_of_length(static_cast<std::size_t>(t)));
    detect_ms.push_back(median_ms([&] { sink = sink + static_cast<double>(edm::detect(s, {}).size()); }, 31));
  }
  const double naive_slope = loglog_slope(sizes, naive_ms);
  const double detect_slope = loglog_slope(sizes, detect_ms);

  auto append_ms = [&](std::size_t length) {
    const auto s = edm::gen_synthetic(edm::demo_spec_of_length(length));
    const auto base = edm::analyze_full(s.slice(0, length - 1), {});
    const auto last = s.slice(length - 1, length);
    return median_ms([&] { sink = sink + static_cast<double>(edm::append_points(base, last, {}).weak_points.size()); },
                     101);
  };
  const double a500 = append_ms(500), a2000 = append_ms(2000);
  const double elapsed = seconds_since(t0);
  report(naive_slope >= 2.5 && detect_slope <= 1.4 && a2000 <= 2.0 * a500 && elapsed < 300.0, "complexity slopes",
         fmt("naive qhat slope %.2f (>= 2.5); windowed detect slope %.2f (<= 1.4); append T=2000 %.4f ms vs T=500 "
             "%.4f ms = %.2fx (<= 2x); %.1f s (limit 300 s)",
             naive_slope, detect_slope, a2000, a500, a2000 / a500, elapsed));
}

void detection_accuracy() {
  auto spec = edm::demo_spec();
  spec.sigma = 0.0;
  std::vector<std::size_t> planted, found;
  for (const auto& st : spec.steps) planted.push_back(st.index);
  for (const auto& cp : edm::detect(edm::gen_synthetic(spec), {})) found.push_back(cp.index);
  const bool exact = planted == found;

  int hits = 0, only_one = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    edm::SyntheticSpec s;
    s.length = 100;
    s.sigma = 0.1;
    s.seed = seed;
    s.steps = {{50, 0.5}};
    edm::DetectionConfig c;
    c.p_threshold = 0.01;
    const auto cps = edm::detect(edm::gen_synthetic(s), c);
    const bool hit = std::any_of(cps.begin(), cps.end(), [](const auto& cp) {
      return cp.index >= 49 && cp.index <= 51;
    });
    hits += hit;
    only_one += hit && cps.size() == 1;
  }
  report(exact && hits >= 19, "detection accuracy",
         fmt("zero-noise planted steps %s (%zu/%zu); 5-sigma step at 50 found within +-1 in %d/20 seeds (>= 19), "
             "%d/20 with no other change point",
             exact ? "recovered exactly" : "NOT recovered", found.size(), planted.size(), hits, only_one));
}

void state_round_trip() {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / ("edm_acceptance_" + std::to_string(std::random_device{}()));
  auto series = edm::demo_series();
  series.values[0] = 0.1;
  series.values[1] = 1.0 / 3.0;
  series.values[2] = std::nextafter(100.0, 200.0);
  const auto state = edm::analyze_full(series, {});
  const auto path = dir / "demo.state.json";
  edm::save_state(state, path);
  const auto loaded = edm::load_state(path);
  bool bits = loaded.series.size() == state.series.size();
  for (std::size_t i = 0; bits && i < state.series.size(); ++i)
    bits = std::bit_cast<std::uint64_t>(loaded.series.values[i]) == std::bit_cast<std::uint64_t>(state.series.values[i]);
  const bool identical = loaded == state;

  edm::DetectionConfig changed;
  changed.window = 64;
  bool stale = false;
  try {
    edm::check_fresh(loaded, changed);
  } catch (const edm::StateError& e) {
    stale = e.code() == edm::StateErrc::stale;
  }
  fs::remove_all(dir);
  report(identical && bits && stale, "state round-trip",
         fmt("save/load identical: %s; value bits preserved: %s; stale detected on window change: %s",
             identical ? "yes" : "no", bits ? "yes" : "no", stale ? "yes" : "no"));
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  qhat_oracle_equivalence();
  hand_derived_values();
  exhaustive_permutation();
  incremental_equivalence();
  refilter_equivalence();
  p_sweep_trend();
  variant_ordering();
  complexity_slopes();
  detection_accuracy();
  state_round_trip();
  std::printf("%d of 10 criteria failed (%.1f s)\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
