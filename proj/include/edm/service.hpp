#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "edm/ingest.hpp"
#include "edm/state.hpp"
#include "edm/store.hpp"
#include "edm/synthetic.hpp"

namespace edm {

enum class ApiErrc { bad_request, not_found, stale_state, out_of_range };

inline int http_status(ApiErrc c) {
  switch (c) {
    case ApiErrc::bad_request: return 400;
    case ApiErrc::not_found: return 404;
    case ApiErrc::stale_state: return 409;
    case ApiErrc::out_of_range: return 422;
  }
  return 500;
}

inline const char* to_string(ApiErrc c) {
  switch (c) {
    case ApiErrc::bad_request: return "bad_request";
    case ApiErrc::not_found: return "not_found";
    case ApiErrc::stale_state: return "stale_state";
    case ApiErrc::out_of_range: return "out_of_range";
  }
  return "internal";
}

struct ApiError : std::runtime_error {
  ApiError(ApiErrc c, const std::string& message) : std::runtime_error(message), code(c) {}
  ApiErrc code;
};

struct ServiceConfig {
  std::filesystem::path store_dir = "edm-store";
  DetectionConfig gen_config;  // p_threshold/min_magnitude are the served defaults
  std::optional<std::filesystem::path> ui_dir;
  bool seed_demo = true;
  std::string demo_test = "demo";
  std::string demo_metric = "throughput";
};

namespace wire {

inline std::int64_t millis(double seconds) { return static_cast<std::int64_t>(std::llround(seconds * 1000.0)); }

inline nlohmann::json change_point(const ChangePoint& cp) {
  auto j = to_json(cp);
  j["time"] = millis(cp.time);
  return j;
}

inline nlohmann::json change_points(const std::vector<ChangePoint>& cps) {
  auto out = nlohmann::json::array();
  for (const auto& cp : cps) out.push_back(change_point(cp));
  return out;
}

/// A record on the wire: {test, metric, time: epoch ms, value, attributes?}.
inline ResultRecord record(const nlohmann::json& j) {
  if (!j.is_object()) throw ApiError(ApiErrc::bad_request, "each result must be a JSON object");
  ResultRecord r;
  try {
    r.test = j.at("test").get<std::string>();
    r.metric = j.at("metric").get<std::string>();
    r.timestamp = j.at("time").get<double>() / 1000.0;
    r.value = j.at("value").get<double>();
    if (const auto a = j.find("attributes"); a != j.end() && !a->is_null())
      for (const auto& [k, v] : a->items()) r.attributes[k] = detail::scalar_text(v);
  } catch (const nlohmann::json::exception& e) {
    throw ApiError(ApiErrc::bad_request, std::string("malformed result: ") + e.what());
  }
  if (!valid_series_name(r.test) || !valid_series_name(r.metric))
    throw ApiError(ApiErrc::bad_request, "invalid test or metric name");
  if (!std::isfinite(r.value) || !std::isfinite(r.timestamp))
    throw ApiError(ApiErrc::bad_request, "time and value must be finite");
  return r;
}

}  // namespace wire

/// JSON API over a Store. Every request reads state from disk, so the
/// service holds no series data between requests and can be restarted at
/// any time.
class Service {
 public:
  explicit Service(ServiceConfig config) : config_(std::move(config)), store_(config_.store_dir) {
    config_.gen_config.validate();
    if (config_.gen_config.p_threshold > config_.gen_config.p_weak)
      throw std::invalid_argument("default p threshold exceeds p_weak");
    if (config_.seed_demo) seed_demo();
    routes();
  }

  httplib::Server& server() { return server_; }
  Store& store() { return store_; }
  const ServiceConfig& config() const { return config_; }

  void seed_demo() {
    auto lock = store_.lock(config_.demo_test, config_.demo_metric);
    if (store_.exists(config_.demo_test, config_.demo_metric)) return;
    store_.save(config_.demo_test, config_.demo_metric, analyze_full(demo_series(), config_.gen_config));
  }

  nlohmann::json post_results(const std::string& body) {
    if (body.find_first_not_of(" \t\r\n") == std::string::npos) throw ApiError(ApiErrc::bad_request, "empty body");
    const auto doc = nlohmann::json::parse(body, nullptr, false);
    if (doc.is_discarded()) throw ApiError(ApiErrc::bad_request, "body is not JSON");
    std::vector<ResultRecord> records;
    if (doc.is_array()) {
      for (const auto& item : doc) records.push_back(wire::record(item));
    } else {
      records.push_back(wire::record(doc));
    }
    if (records.empty()) throw ApiError(ApiErrc::bad_request, "no results in body");
    auto grouped = group_series(records);

    // Lock every touched series (in key order) and check all of them before
    // writing any, so a rejected request changes nothing.
    std::vector<std::unique_lock<std::mutex>> locks;
    for (const auto& [key, s] : grouped) locks.push_back(store_.lock(key.first, key.second));
    std::map<SeriesKey, std::optional<AnalyzedSeries>> current;
    for (const auto& [key, s] : grouped) {
      try {
        validate(s);
      } catch (const std::invalid_argument& e) {
        throw ApiError(ApiErrc::bad_request, key.first + "/" + key.second + ": " + e.what());
      }
      for (std::size_t i = 1; i < s.size(); ++i)
        if (s.timestamps[i] <= s.timestamps[i - 1])
          throw ApiError(ApiErrc::bad_request, key.first + "/" + key.second + ": timestamps must increase");
      auto state = load_checked(key.first, key.second, false);
      if (state && !state->series.empty() && s.timestamps.front() <= state->series.timestamps.back())
        throw ApiError(ApiErrc::bad_request, key.first + "/" + key.second +
                                                 ": results must be newer than the last stored point");
      current.emplace(key, std::move(state));
    }

    const auto& gen = config_.gen_config;
    auto added = nlohmann::json::array();
    auto removed = nlohmann::json::array();
    auto per_series = nlohmann::json::array();
    for (const auto& [key, s] : grouped) {
      const auto& previous = current.at(key);
      std::vector<ChangePoint> before;
      AnalyzedSeries next;
      if (previous) {
        before = refilter(*previous, gen.p_threshold, gen.min_magnitude);
        next = append_points(*previous, s, gen);
      } else {
        next = analyze_full(s, gen);
      }
      const auto diff = diff_change_points(before, refilter(next, gen.p_threshold, gen.min_magnitude));
      store_.save(key.first, key.second, next);
      auto tag = [&](const ChangePoint& cp) {
        auto j = wire::change_point(cp);
        j["test"] = key.first;
        j["metric"] = key.second;
        return j;
      };
      for (const auto& cp : diff.added) added.push_back(tag(cp));
      for (const auto& cp : diff.removed) removed.push_back(tag(cp));
      per_series.push_back({{"test", key.first},
                            {"metric", key.second},
                            {"appended", s.size()},
                            {"created", !previous.has_value()},
                            {"length", next.series.size()}});
    }
    return {{"appended", records.size()},
            {"changepoints_diff", {{"added", added}, {"removed", removed}}},
            {"series", per_series}};
  }

  nlohmann::json get_series(const std::string& test, const std::string& metric) const {
    const auto state = require(test, metric);
    const auto& gen = config_.gen_config;
    const auto cps = refilter(state, gen.p_threshold, gen.min_magnitude);
    std::vector<std::int64_t> times;
    times.reserve(state.series.size());
    for (double t : state.series.timestamps) times.push_back(wire::millis(t));
    nlohmann::json out = {{"test", test},
                          {"metric", metric},
                          {"timestamps", times},
                          {"values", state.series.values},
                          {"p", gen.p_threshold},
                          {"min_magnitude", gen.min_magnitude},
                          {"p_weak", state.gen_config.p_weak},
                          {"change_points", wire::change_points(cps)}};
    if (!state.series.attributes.empty()) out["attributes"] = state.series.attributes;
    return out;
  }

  nlohmann::json get_change_points(const std::string& test, const std::string& metric,
                                   std::optional<double> p, std::optional<double> min_magnitude) const {
    const auto start = std::chrono::steady_clock::now();
    const double pv = p.value_or(config_.gen_config.p_threshold);
    const double gv = min_magnitude.value_or(config_.gen_config.min_magnitude);
    if (!(pv > 0.0 && pv < 1.0)) throw ApiError(ApiErrc::bad_request, "p must be in (0, 1)");
    if (!(gv >= 0.0)) throw ApiError(ApiErrc::bad_request, "min_magnitude must be >= 0");
    const auto state = require(test, metric);
    std::vector<ChangePoint> cps;
    try {
      cps = refilter(state, pv, gv);
    } catch (const RefilterRangeError& e) {
      throw ApiError(ApiErrc::out_of_range, e.what());
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return {{"test", test},
            {"metric", metric},
            {"p", pv},
            {"min_magnitude", gv},
            {"p_weak", state.gen_config.p_weak},
            {"change_points", wire::change_points(cps)},
            {"timing_ms", ms}};
  }

  /// Removes points at or after `from_time` (epoch seconds; all points when
  /// absent) and re-analyzes what is left.
  nlohmann::json delete_results(const std::string& test, const std::string& metric, std::optional<double> from_time) {
    auto lock = store_.lock(test, metric);
    const auto state = require(test, metric);
    const auto& ts = state.series.timestamps;
    std::size_t keep = ts.size();
    if (!from_time) keep = 0;
    else keep = static_cast<std::size_t>(std::lower_bound(ts.begin(), ts.end(), *from_time) - ts.begin());
    const std::size_t deleted = ts.size() - keep;
    if (deleted == 0) return {{"deleted", 0}};
    if (keep == 0) {
      store_.remove(test, metric);
    } else {
      store_.save(test, metric, analyze_full(state.series.slice(0, keep), config_.gen_config));
    }
    return {{"deleted", deleted}, {"remaining", keep}};
  }

  nlohmann::json list_series() const {
    auto out = nlohmann::json::array();
    for (const auto& [test, metric] : store_.list()) out.push_back({{"test", test}, {"metric", metric}});
    return out;
  }

  nlohmann::json describe_config() const {
    const auto& g = config_.gen_config;
    auto positions = nlohmann::json::array();
    for (double p : {0.001, 0.01, 0.05, 0.1, 0.2, 0.5})
      if (p <= g.p_weak) positions.push_back(p);
    return {{"p_weak", g.p_weak},
            {"p", g.p_threshold},
            {"min_magnitude", g.min_magnitude},
            {"p_positions", positions},
            {"window", g.window},
            {"method", to_string(g.method)}};
  }

 private:
  std::optional<AnalyzedSeries> load_checked(const std::string& test, const std::string& metric,
                                             bool must_exist) const {
    if (!valid_series_name(test) || !valid_series_name(metric))
      throw ApiError(ApiErrc::not_found, "no series " + test + "/" + metric);
    std::optional<AnalyzedSeries> state;
    try {
      state = store_.load(test, metric);
      if (state) check_fresh(*state, config_.gen_config);
    } catch (const StateError& e) {
      throw ApiError(ApiErrc::stale_state, std::string(e.what()) + " (delete and re-submit the series to re-analyze)");
    }
    if (!state && must_exist) throw ApiError(ApiErrc::not_found, "no series " + test + "/" + metric);
    return state;
  }

  AnalyzedSeries require(const std::string& test, const std::string& metric) const {
    return *load_checked(test, metric, true);
  }

  static std::optional<double> query_number(const httplib::Request& req, const char* name) {
    if (!req.has_param(name)) return std::nullopt;
    const auto v = detail::parse_real(req.get_param_value(name));
    if (!v) throw ApiError(ApiErrc::bad_request, std::string("query parameter '") + name + "' is not a number");
    return v;
  }

  template <class Fn>
  static httplib::Server::Handler json_handler(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        res.set_content(fn(req).dump(), "application/json");
      } catch (const ApiError& e) {
        res.status = http_status(e.code);
        res.set_content(nlohmann::json{{"error", {{"code", to_string(e.code)}, {"message", e.what()}}}}.dump(),
                        "application/json");
      } catch (const std::exception& e) {
        res.status = 500;
        res.set_content(nlohmann::json{{"error", {{"code", "internal"}, {"message", e.what()}}}}.dump(),
                        "application/json");
      }
    };
  }

  void routes() {
    server_.Get("/api/config", json_handler([this](const httplib::Request&) { return describe_config(); }));
    server_.Get("/api/series", json_handler([this](const httplib::Request&) { return list_series(); }));
    server_.Post("/api/result", json_handler([this](const httplib::Request& req) { return post_results(req.body); }));
    server_.Get(R"(/api/series/([^/]+)/([^/]+))", json_handler([this](const httplib::Request& req) {
                  return get_series(req.matches[1], req.matches[2]);
                }));
    server_.Get(R"(/api/changepoints/([^/]+)/([^/]+))", json_handler([this](const httplib::Request& req) {
                  return get_change_points(req.matches[1], req.matches[2], query_number(req, "p"),
                                           query_number(req, "min_magnitude"));
                }));
    server_.Delete(R"(/api/result/([^/]+)/([^/]+))", json_handler([this](const httplib::Request& req) {
                     auto from = query_number(req, "from_time");
                     if (from) *from /= 1000.0;
                     return delete_results(req.matches[1], req.matches[2], from);
                   }));
    if (config_.ui_dir && std::filesystem::is_directory(*config_.ui_dir)) {
      server_.set_mount_point("/", config_.ui_dir->string());
    } else {
      server_.Get("/", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(
            "<!doctype html><title>edm</title><h1>edm service</h1>"
            "<p>No UI bundle configured (start with --ui DIR).</p>"
            "<ul><li>GET /api/series</li><li>GET /api/series/{test}/{metric}</li>"
            "<li>GET /api/changepoints/{test}/{metric}?p=&amp;min_magnitude=</li>"
            "<li>POST /api/result</li><li>DELETE /api/result/{test}/{metric}?from_time=</li></ul>",
            "text/html");
      });
    }
  }

  ServiceConfig config_;
  Store store_;
  httplib::Server server_;
};

}  // namespace edm
