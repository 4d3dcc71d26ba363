#pragma once

// Persisted analysis state: the series, its weak change point superset and
// the generation config that produced it. Supports instant refiltering and
// O(W^2) appends.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "edm/detector.hpp"
#include "edm/series.hpp"

namespace edm {

inline constexpr int kStateFormatVersion = 1;
inline constexpr const char* kCodeVersionTag = "edm-1";

enum class StateErrc { unreadable, version_mismatch, corrupt, stale };

inline const char* to_string(StateErrc c) {
  switch (c) {
    case StateErrc::unreadable: return "unreadable";
    case StateErrc::version_mismatch: return "version_mismatch";
    case StateErrc::corrupt: return "corrupt";
    case StateErrc::stale: return "stale";
  }
  return "unknown";
}

class StateError : public std::runtime_error {
 public:
  StateError(StateErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  StateErrc code() const noexcept { return code_; }

 private:
  StateErrc code_;
};

/// Refilter asked for a p threshold the stored weak set cannot answer.
class RefilterRangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

struct AnalyzedSeries {
  Series series;
  std::vector<ChangePoint> weak_points;
  DetectionConfig gen_config;
  std::string fingerprint;
  std::size_t analyzed_len = 0;
  std::uint64_t series_hash = 0;

  bool operator==(const AnalyzedSeries&) const = default;
};

namespace detail {

class Fnv1a {
 public:
  Fnv1a() = default;
  explicit Fnv1a(std::uint64_t state) : h_(state) {}

  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  std::uint64_t value() const noexcept { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::uint64_t parse_hex64(const std::string& s) {
  std::size_t used = 0;
  const auto v = std::stoull(s, &used, 16);
  if (used != s.size()) throw std::invalid_argument("bad hex");
  return v;
}

}  // namespace detail

/// Hash of everything that determines the weak set for a given series.
inline std::string config_fingerprint(const DetectionConfig& c) {
  detail::Fnv1a h;
  h.str(kCodeVersionTag);
  h.u64(static_cast<std::uint64_t>(kStateFormatVersion));
  h.u64(c.window);
  h.u64(c.stride());
  h.f64(c.p_weak);
  h.u64(static_cast<std::uint64_t>(c.method));
  h.u64(c.permutations);
  h.u64(c.seed);
  h.u64(c.min_segment);
  h.u64(static_cast<std::uint64_t>(c.kernel));
  return detail::hex64(h.value());
}

/// Content hash of points [begin, end) (values and timestamps), continuing
/// from `seed`. Streaming, so an append extends the stored hash without
/// rereading history.
inline std::uint64_t series_content_hash(const Series& s, std::size_t begin, std::size_t end,
                                         std::uint64_t seed = detail::Fnv1a{}.value()) {
  detail::Fnv1a h(seed);
  for (std::size_t i = begin; i < end; ++i) {
    h.f64(s.values[i]);
    h.f64(s.timestamps[i]);
  }
  return h.value();
}

inline std::uint64_t series_content_hash(const Series& s, std::size_t len) {
  return series_content_hash(s, 0, len);
}

inline AnalyzedSeries analyze_full(Series series, const DetectionConfig& gen_config) {
  validate(series);
  gen_config.validate();
  AnalyzedSeries state;
  state.weak_points = windowed_weak_detect(series, gen_config);
  state.analyzed_len = series.size();
  state.series_hash = series_content_hash(series, state.analyzed_len);
  state.series = std::move(series);
  state.gen_config = gen_config;
  state.fingerprint = config_fingerprint(gen_config);
  return state;
}

/// Throws StateError(stale) unless `state` was produced under `gen_config`.
/// With `verify_history`, also rehashes the analyzed prefix (O(T)) to catch
/// edits to historical points.
inline void check_fresh(const AnalyzedSeries& state, const DetectionConfig& gen_config,
                        bool verify_history = false) {
  if (state.fingerprint != config_fingerprint(gen_config) ||
      state.fingerprint != config_fingerprint(state.gen_config))
    throw StateError(StateErrc::stale, "state was generated under a different configuration; re-analyze");
  if (state.analyzed_len > state.series.size())
    throw StateError(StateErrc::stale, "analyzed length exceeds the series; re-analyze");
  if (verify_history && state.series_hash != series_content_hash(state.series, state.analyzed_len))
    throw StateError(StateErrc::stale, "analyzed history was modified; re-analyze");
}

/// Extends an analyzed series and brings its weak set up to date.
///
/// Let T0 be the analyzed length and `boundary` the largest grid offset
/// <= T0 - W. Every window that differs between the old and new window sets
/// starts at or after `boundary`, so weak points below it are kept as-is and
/// only windows reaching past `boundary` are recomputed; their candidates at
/// or after `boundary` are spliced in. The result equals analyze_full on the
/// extended series.
inline AnalyzedSeries append_points(const AnalyzedSeries& state, const Series& new_points,
                                    const DetectionConfig& gen_config) {
  check_fresh(state, gen_config);
  validate(new_points);
  if (!new_points.empty() && !state.series.empty() &&
      new_points.timestamps.front() <= state.series.timestamps.back())
    throw std::invalid_argument("appended points must come after the last point of the series");

  AnalyzedSeries next;
  next.series = state.series;
  if (!new_points.empty()) {
    auto& s = next.series;
    const bool has_attrs = !s.attributes.empty() || !new_points.attributes.empty();
    if (has_attrs) {
      s.attributes.resize(s.values.size());
      if (new_points.attributes.empty())
        s.attributes.resize(s.values.size() + new_points.size());
      else
        s.attributes.insert(s.attributes.end(), new_points.attributes.begin(), new_points.attributes.end());
    }
    s.values.insert(s.values.end(), new_points.values.begin(), new_points.values.end());
    s.timestamps.insert(s.timestamps.end(), new_points.timestamps.begin(), new_points.timestamps.end());
  }
  next.gen_config = state.gen_config;
  next.fingerprint = state.fingerprint;
  next.analyzed_len = next.series.size();
  next.series_hash =
      series_content_hash(next.series, state.analyzed_len, next.analyzed_len, state.series_hash);
  if (next.analyzed_len == state.analyzed_len) {
    next.weak_points = state.weak_points;
    return next;
  }

  const std::size_t window = gen_config.window;
  const std::size_t stride = std::max<std::size_t>(gen_config.stride(), 1);
  const std::size_t old_len = state.analyzed_len;
  const std::size_t boundary = old_len > window ? (old_len - window) / stride * stride : 0;

  for (const auto& cp : state.weak_points) {
    if (cp.index >= boundary) break;
    next.weak_points.push_back(cp);
  }
  std::set<std::size_t> fresh;
  for (const Window& w : detection_windows(next.series.size(), window)) {
    if (w.end <= boundary) continue;
    for (std::size_t idx : window_candidates(next.series, w, gen_config))
      if (idx >= boundary) fresh.insert(idx);
  }
  for (std::size_t idx : fresh) next.weak_points.push_back(annotate_weak(next.series, idx, gen_config));
  return next;
}

/// Change points at user thresholds, answered from the stored weak set.
inline std::vector<ChangePoint> refilter(const AnalyzedSeries& state, double p_threshold,
                                         double min_magnitude) {
  if (p_threshold > state.gen_config.p_weak)
    throw RefilterRangeError("p threshold exceeds the weak-set generation threshold " +
                             std::to_string(state.gen_config.p_weak) + "; re-analyze with a larger p_weak");
  if (!(p_threshold > 0.0)) throw std::invalid_argument("p threshold must be positive");
  if (state.analyzed_len == state.series.size())
    return merge_filter(state.series, state.weak_points, p_threshold, min_magnitude,
                        state.gen_config.min_segment);
  return merge_filter(state.series.slice(0, state.analyzed_len), state.weak_points, p_threshold,
                      min_magnitude, state.gen_config.min_segment);
}

// ---- serialization -------------------------------------------------------

namespace detail {

// JSON has no infinities; they are written as strings.
inline nlohmann::json real_to_json(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline double real_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw std::invalid_argument("bad real: " + s);
  }
  return j.get<double>();
}

}  // namespace detail

inline nlohmann::json to_json(const ChangePoint& cp) {
  return {{"index", cp.index},
          {"time", cp.time},
          {"p_value", detail::real_to_json(cp.p_value)},
          {"statistic", detail::real_to_json(cp.statistic)},
          {"mean_before", detail::real_to_json(cp.mean_before)},
          {"mean_after", detail::real_to_json(cp.mean_after)},
          {"magnitude", detail::real_to_json(cp.magnitude)}};
}

inline ChangePoint change_point_from_json(const nlohmann::json& j) {
  ChangePoint cp;
  cp.index = j.at("index").get<std::size_t>();
  cp.time = detail::real_from_json(j.at("time"));
  cp.p_value = detail::real_from_json(j.at("p_value"));
  cp.statistic = detail::real_from_json(j.at("statistic"));
  cp.mean_before = detail::real_from_json(j.at("mean_before"));
  cp.mean_after = detail::real_from_json(j.at("mean_after"));
  cp.magnitude = detail::real_from_json(j.at("magnitude"));
  return cp;
}

inline nlohmann::json to_json(const DetectionConfig& c) {
  return {{"method", std::string(to_string(c.method))},
          {"p_threshold", c.p_threshold},
          {"min_magnitude", c.min_magnitude},
          {"window", c.window},
          {"stride", c.stride()},
          {"permutations", c.permutations},
          {"seed", c.seed},
          {"min_segment", c.min_segment},
          {"max_iterations", c.max_iterations},
          {"p_weak", c.p_weak},
          {"kernel", c.kernel == QhatKernel::naive ? "naive" : "shifted"}};
}

inline DetectionConfig config_from_json(const nlohmann::json& j) {
  DetectionConfig c;
  c.method = method_from_string(j.at("method").get<std::string>());
  c.p_threshold = j.at("p_threshold").get<double>();
  c.min_magnitude = j.at("min_magnitude").get<double>();
  c.window = j.at("window").get<std::size_t>();
  c.permutations = j.at("permutations").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.min_segment = j.at("min_segment").get<std::size_t>();
  c.max_iterations = j.at("max_iterations").get<std::size_t>();
  c.p_weak = j.at("p_weak").get<double>();
  const auto kernel = j.at("kernel").get<std::string>();
  if (kernel != "naive" && kernel != "shifted") throw std::invalid_argument("unknown kernel " + kernel);
  c.kernel = kernel == "naive" ? QhatKernel::naive : QhatKernel::shifted;
  if (j.at("stride").get<std::size_t>() != c.stride()) throw std::invalid_argument("stride mismatch");
  return c;
}

inline nlohmann::json to_json(const AnalyzedSeries& s) {
  nlohmann::json attrs = nlohmann::json::array();
  for (const auto& a : s.series.attributes) attrs.push_back(a);
  nlohmann::json weak = nlohmann::json::array();
  for (const auto& cp : s.weak_points) weak.push_back(to_json(cp));
  return {{"format", "edm-state"},
          {"version", kStateFormatVersion},
          {"code_version", kCodeVersionTag},
          {"gen_config", to_json(s.gen_config)},
          {"fingerprint", s.fingerprint},
          {"analyzed_len", s.analyzed_len},
          {"series_hash", detail::hex64(s.series_hash)},
          {"series", {{"timestamps", s.series.timestamps}, {"values", s.series.values}, {"attributes", attrs}}},
          {"weak_points", weak}};
}

/// Parses a state document. Throws StateError with a code per failure mode;
/// nothing is returned unless the whole document is consistent.
inline AnalyzedSeries state_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != "edm-state")
    throw StateError(StateErrc::corrupt, "not an edm state document");
  const auto version = j.find("version");
  if (version == j.end() || !version->is_number_integer() || version->get<int>() != kStateFormatVersion)
    throw StateError(StateErrc::version_mismatch,
                     "unsupported state format version " + (version == j.end() ? std::string("<missing>") : version->dump()));
  AnalyzedSeries s;
  try {
    s.gen_config = config_from_json(j.at("gen_config"));
    s.fingerprint = j.at("fingerprint").get<std::string>();
    s.analyzed_len = j.at("analyzed_len").get<std::size_t>();
    s.series_hash = detail::parse_hex64(j.at("series_hash").get<std::string>());
    const auto& series = j.at("series");
    s.series.timestamps = series.at("timestamps").get<std::vector<double>>();
    s.series.values = series.at("values").get<std::vector<double>>();
    for (const auto& a : series.at("attributes")) s.series.attributes.push_back(a.get<Attributes>());
    for (const auto& cp : j.at("weak_points")) s.weak_points.push_back(change_point_from_json(cp));
    validate(s.series);
  } catch (const StateError&) {
    throw;
  } catch (const std::exception& e) {
    throw StateError(StateErrc::corrupt, std::string("malformed state: ") + e.what());
  }
  if (s.fingerprint != config_fingerprint(s.gen_config))
    throw StateError(StateErrc::corrupt, "fingerprint does not match stored generation config");
  if (s.analyzed_len > s.series.size() || s.series_hash != series_content_hash(s.series, s.analyzed_len))
    throw StateError(StateErrc::corrupt, "series content does not match its hash");
  for (std::size_t i = 0; i < s.weak_points.size(); ++i) {
    const auto idx = s.weak_points[i].index;
    if (idx == 0 || idx >= s.analyzed_len || (i > 0 && idx <= s.weak_points[i - 1].index))
      throw StateError(StateErrc::corrupt, "weak points out of order or out of range");
  }
  return s;
}

/// Writes through a temporary file and renames, so readers never observe a
/// partially written state.
inline void save_state(const AnalyzedSeries& state, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StateError(StateErrc::unreadable, "cannot write " + tmp.string());
    out << to_json(state).dump(1) << '\n';
    if (!out) throw StateError(StateErrc::unreadable, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline AnalyzedSeries load_state(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StateError(StateErrc::unreadable, "cannot read " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw StateError(StateErrc::corrupt, path.string() + ": " + e.what());
  }
  return state_from_json(j);
}

}  // namespace edm
