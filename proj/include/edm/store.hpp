#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <iterator>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "edm/ingest.hpp"
#include "edm/state.hpp"

namespace edm {

/// Test and metric names become path components, so they are restricted to
/// [A-Za-z0-9._-] and may not start with a dot.
inline bool valid_series_name(const std::string& name) {
  if (name.empty() || name.size() > 128 || name.front() == '.') return false;
  for (unsigned char c : name)
    if (!(std::isalnum(c) || c == '.' || c == '_' || c == '-')) return false;
  return true;
}

/// State files laid out as <root>/<test>/<metric>.state.json.
///
/// Saves go through save_state's rename, so a concurrent reader sees either
/// the old or the new file. Writers to one series serialize on
/// lock(test, metric); different series never contend.
class Store {
 public:
  static constexpr const char* kSuffix = ".state.json";

  explicit Store(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const noexcept { return root_; }

  std::filesystem::path path_for(const std::string& test, const std::string& metric) const {
    for (const auto* name : {&test, &metric})
      if (!valid_series_name(*name)) throw std::invalid_argument("invalid series name '" + *name + "'");
    return root_ / test / (metric + kSuffix);
  }

  bool exists(const std::string& test, const std::string& metric) const {
    return std::filesystem::exists(path_for(test, metric));
  }

  /// nullopt when the series has no state file; StateError when it has a bad one.
  std::optional<AnalyzedSeries> load(const std::string& test, const std::string& metric) const {
    const auto path = path_for(test, metric);
    if (!std::filesystem::exists(path)) return std::nullopt;
    return load_state(path);
  }

  void save(const std::string& test, const std::string& metric, const AnalyzedSeries& state) const {
    save_state(state, path_for(test, metric));
  }

  bool remove(const std::string& test, const std::string& metric) const {
    const auto path = path_for(test, metric);
    const bool removed = std::filesystem::remove(path);
    std::error_code ec;
    if (removed && std::filesystem::is_empty(path.parent_path(), ec)) std::filesystem::remove(path.parent_path(), ec);
    return removed;
  }

  std::vector<SeriesKey> list() const {
    std::vector<SeriesKey> out;
    std::error_code ec;
    if (!std::filesystem::is_directory(root_, ec)) return out;
    for (const auto& test_dir : std::filesystem::directory_iterator(root_)) {
      if (!test_dir.is_directory()) continue;
      for (const auto& f : std::filesystem::directory_iterator(test_dir.path())) {
        const std::string name = f.path().filename().string();
        const std::string suffix = kSuffix;
        if (name.size() > suffix.size() && name.ends_with(suffix))
          out.emplace_back(test_dir.path().filename().string(), name.substr(0, name.size() - suffix.size()));
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  std::unique_lock<std::mutex> lock(const std::string& test, const std::string& metric) {
    std::mutex* m = nullptr;
    {
      std::lock_guard<std::mutex> guard(locks_mutex_);
      auto& slot = locks_[{test, metric}];
      if (!slot) slot = std::make_unique<std::mutex>();
      m = slot.get();
    }
    return std::unique_lock<std::mutex>(*m);
  }

 private:
  std::filesystem::path root_;
  std::mutex locks_mutex_;
  std::map<SeriesKey, std::unique_ptr<std::mutex>> locks_;
};

struct ChangeDiff {
  std::vector<ChangePoint> added;
  std::vector<ChangePoint> removed;

  bool empty() const noexcept { return added.empty() && removed.empty(); }
};

/// Change points compared by index.
inline ChangeDiff diff_change_points(const std::vector<ChangePoint>& before, const std::vector<ChangePoint>& after) {
  ChangeDiff d;
  auto by_index = [](const ChangePoint& a, const ChangePoint& b) { return a.index < b.index; };
  std::set_difference(after.begin(), after.end(), before.begin(), before.end(), std::back_inserter(d.added), by_index);
  std::set_difference(before.begin(), before.end(), after.begin(), after.end(), std::back_inserter(d.removed),
                      by_index);
  return d;
}

struct AppendOutcome {
  AnalyzedSeries state;
  std::vector<ChangePoint> change_points;
  ChangeDiff diff;
  bool created = false;
};

/// Appends `points` to a stored series, or analyzes them from scratch when
/// the series has no state yet. The caller holds store.lock(test, metric).
inline AppendOutcome append_to_store(const Store& store, const std::string& test, const std::string& metric,
                                     const Series& points, const DetectionConfig& gen_config, double p_threshold,
                                     double min_magnitude) {
  AppendOutcome out;
  auto previous = store.load(test, metric);
  std::vector<ChangePoint> before;
  if (previous) {
    check_fresh(*previous, gen_config);
    before = refilter(*previous, p_threshold, min_magnitude);
    out.state = append_points(*previous, points, gen_config);
  } else {
    out.created = true;
    out.state = analyze_full(points, gen_config);
  }
  out.change_points = refilter(out.state, p_threshold, min_magnitude);
  out.diff = diff_change_points(before, out.change_points);
  store.save(test, metric, out.state);
  return out;
}

}  // namespace edm
