#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "edm/detector.hpp"

namespace edm {

inline std::string describe_change(const ChangePoint& cp) {
  char buf[128];
  if (std::isfinite(cp.magnitude))
    std::snprintf(buf, sizeof buf, "%+.2f%% (%.6g -> %.6g, p=%.3g)", 100.0 * cp.magnitude, cp.mean_before,
                  cp.mean_after, cp.p_value);
  else
    std::snprintf(buf, sizeof buf, "%.6g -> %.6g (p=%.3g)", cp.mean_before, cp.mean_after, cp.p_value);
  return buf;
}

/// Dashboard annotations: [{time: epoch ms, text, tags}], oldest first.
inline nlohmann::json export_annotations(std::vector<ChangePoint> cps, const std::string& test = {},
                                         const std::string& metric = {}) {
  std::stable_sort(cps.begin(), cps.end(), [](const auto& a, const auto& b) { return a.time < b.time; });
  auto out = nlohmann::json::array();
  for (const auto& cp : cps) {
    std::vector<std::string> tags{"change-point", cp.mean_after >= cp.mean_before ? "increase" : "decrease"};
    if (!test.empty()) tags.push_back(test);
    if (!metric.empty()) tags.push_back(metric);
    std::string text = describe_change(cp);
    if (!metric.empty()) text = metric + ": " + text;
    out.push_back({{"time", static_cast<std::int64_t>(std::llround(cp.time * 1000.0))},
                   {"text", text},
                   {"tags", tags}});
  }
  return out;
}

}  // namespace edm
