// Reads a time,value CSV and prints the change points found at a p threshold.
//
//   sample_detect data/single_step.csv 0.01

#include <cstdlib>
#include <fstream>
#include <iostream>

#include "edm/detector.hpp"
#include "edm/ingest.hpp"

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: " << argv[0] << " FILE.csv [p]\n";
    return 2;
  }
  std::ifstream in(argv[1]);
  if (!in) {
    std::cerr << "cannot read " << argv[1] << "\n";
    return 2;
  }
  edm::DetectionConfig config;
  if (argc > 2) config.p_threshold = std::atof(argv[2]);

  for (const auto& [key, series] : edm::group_series(edm::parse_csv(in).records)) {
    const auto cps = edm::detect(series, config);
    std::cout << key.first << "/" << key.second << ": " << series.size() << " points, " << cps.size()
              << " change points\n";
    for (const auto& cp : cps)
      std::cout << "  change point at index " << cp.index << ": " << cp.mean_before << " -> " << cp.mean_after
                << " (p=" << cp.p_value << ")\n";
  }
}
