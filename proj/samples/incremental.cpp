// Analyzes a series once, then feeds it new points one at a time the way a
// CI job would, re-thresholding the stored weak set after every append.

#include <iostream>

#include "edm/state.hpp"
#include "edm/synthetic.hpp"

int main() {
  const edm::DetectionConfig config;
  const auto full = edm::demo_series();

  auto state = edm::analyze_full(full.slice(0, 300), config);
  std::size_t reported = edm::refilter(state, 0.01, 0.0).size();
  std::cout << "first 300 points: " << reported << " change points, " << state.weak_points.size()
            << " weak points stored\n";

  for (std::size_t i = 300; i < full.size(); ++i) {
    state = edm::append_points(state, full.slice(i, i + 1), config);
    const auto cps = edm::refilter(state, 0.01, 0.0);
    if (cps.size() != reported)
      std::cout << "after point " << i << ": " << cps.size() << " change points\n";
    reported = cps.size();
  }

  // The incremental result is the same as analyzing everything at once.
  const bool same = edm::refilter(state, 0.01, 0.0) == edm::refilter(edm::analyze_full(full, config), 0.01, 0.0);
  std::cout << (same ? "matches full analysis\n" : "MISMATCH with full analysis\n");
  return same ? 0 : 1;
}
