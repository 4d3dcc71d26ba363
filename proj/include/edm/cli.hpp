#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "edm/annotations.hpp"
#include "edm/bench.hpp"
#include "edm/ingest.hpp"
#include "edm/service.hpp"
#include "edm/state.hpp"
#include "edm/store.hpp"
#include "edm/synthetic.hpp"

namespace edm {

// Exit codes. CI scripts depend on these values.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitChangeFound = 3;
inline constexpr int kExitState = 4;

namespace cli {

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonOptions {
  DetectionConfig config;
  std::string method = "t";
  std::string format = "table";
  std::string store;
  std::string test;
  std::string metric;
  bool lenient = false;
  bool fail_on_change = false;
  std::string annotations;
};

inline void add_detection_flags(CLI::App* app, CommonOptions& o) {
  app->add_option("--p", o.config.p_threshold, "p-value threshold")->capture_default_str();
  app->add_option("--magnitude", o.config.min_magnitude, "minimum relative change |mean_after/mean_before - 1|")
      ->capture_default_str();
  app->add_option("--window", o.config.window, "window size W")->capture_default_str();
  app->add_option("--method", o.method, "significance test")
      ->check(CLI::IsMember({"t", "welch_t", "montecarlo", "monte_carlo"}))
      ->capture_default_str();
  app->add_option("--permutations", o.config.permutations, "permutations for --method montecarlo")
      ->capture_default_str();
  app->add_option("--seed", o.config.seed, "random seed")->capture_default_str();
}

inline void add_output_flags(CLI::App* app, CommonOptions& o) {
  app->add_option("--format", o.format, "output format")->check(CLI::IsMember({"table", "json"}))->capture_default_str();
  app->add_option("--annotations", o.annotations, "also write dashboard annotations (JSON) to this file");
}

inline void finish_config(CommonOptions& o) {
  o.config.method = method_from_string(o.method);
  o.config.validate();
}

inline std::string format_time(double t) {
  if (t < 1e8) {
    std::ostringstream os;
    os << t;
    return os.str();
  }
  const auto secs = static_cast<std::time_t>(std::floor(t));
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void print_table(std::ostream& out, const std::string& name, const std::vector<ChangePoint>& cps,
                        const DetectionConfig& c) {
  if (cps.empty()) {
    out << name << ": no change points\n";
    return;
  }
  out << name << ": " << cps.size() << " change point" << (cps.size() == 1 ? "" : "s") << " (p < " << c.p_threshold
      << ", |magnitude| >= " << c.min_magnitude << ")\n";
  char line[256];
  std::snprintf(line, sizeof line, "  %7s  %-20s  %12s  %12s  %9s  %10s\n", "index", "time", "before", "after",
                "change", "p");
  out << line;
  for (const auto& cp : cps) {
    char change[32];
    if (std::isfinite(cp.magnitude)) std::snprintf(change, sizeof change, "%+.2f%%", 100.0 * cp.magnitude);
    else std::snprintf(change, sizeof change, "%s", cp.magnitude > 0 ? "+inf" : "-inf");
    std::snprintf(line, sizeof line, "  %7zu  %-20s  %12.6g  %12.6g  %9s  %10.3g\n", cp.index,
                  format_time(cp.time).c_str(), cp.mean_before, cp.mean_after, change, cp.p_value);
    out << line;
  }
}

inline nlohmann::json series_json(const SeriesKey& key, const std::vector<ChangePoint>& cps, const DetectionConfig& c) {
  auto arr = nlohmann::json::array();
  for (const auto& cp : cps) arr.push_back(to_json(cp));
  return {{"test", key.first},
          {"metric", key.second},
          {"p", c.p_threshold},
          {"min_magnitude", c.min_magnitude},
          {"change_points", arr}};
}

struct SeriesResult {
  SeriesKey key;
  std::vector<ChangePoint> change_points;
  nlohmann::json extra = nlohmann::json::object();
};

inline void emit(std::ostream& out, const CommonOptions& o, const std::vector<SeriesResult>& results,
                 const std::function<void(const SeriesResult&)>& table_extra = {}) {
  if (o.format == "json") {
    auto arr = nlohmann::json::array();
    for (const auto& r : results) {
      auto j = series_json(r.key, r.change_points, o.config);
      j.update(r.extra);
      arr.push_back(j);
    }
    out << nlohmann::json{{"series", arr}}.dump(2) << '\n';
  } else {
    for (const auto& r : results) {
      print_table(out, r.key.first + "/" + r.key.second, r.change_points, o.config);
      if (table_extra) table_extra(r);
    }
  }
  if (!o.annotations.empty()) {
    auto all = nlohmann::json::array();
    for (const auto& r : results)
      for (auto& a : export_annotations(r.change_points, r.key.first, r.key.second)) all.push_back(a);
    std::stable_sort(all.begin(), all.end(),
                     [](const auto& a, const auto& b) { return a["time"].template get<std::int64_t>() <
                                                               b["time"].template get<std::int64_t>(); });
    std::ofstream f(o.annotations);
    if (!f) throw InputError("cannot write " + o.annotations);
    f << all.dump(2) << '\n';
  }
}

inline std::map<SeriesKey, Series> read_input(const std::string& path, const CommonOptions& o, std::ostream& err) {
  ParseOptions popts;
  popts.mode = o.lenient ? ParseMode::lenient : ParseMode::strict;
  if (!o.test.empty()) popts.default_test = o.test;
  if (!o.metric.empty()) popts.default_metric = o.metric;
  std::ifstream file;
  std::istream* in = &std::cin;
  if (path != "-") {
    file.open(path);
    if (!file) throw InputError("cannot read " + path);
    in = &file;
  }
  const bool jsonl = path.ends_with(".jsonl") || path.ends_with(".ndjson");
  ParseResult parsed;
  try {
    parsed = jsonl ? parse_jsonl(*in, popts) : parse_csv(*in, popts);
  } catch (const ParseError& e) {
    throw InputError(path + ": " + e.what());
  }
  for (const auto& issue : parsed.issues)
    err << path << ": line " << issue.line << ": " << issue.message << " (skipped)\n";
  if (!parsed.issues.empty()) err << path << ": skipped " << parsed.issues.size() << " line(s)\n";
  auto grouped = group_series(parsed.records);
  if (!o.test.empty() || !o.metric.empty()) {
    std::erase_if(grouped, [&](const auto& kv) {
      return (!o.test.empty() && kv.first.first != o.test) || (!o.metric.empty() && kv.first.second != o.metric);
    });
  }
  for (const auto& [key, s] : grouped) {
    try {
      validate(s);
    } catch (const std::invalid_argument& e) {
      throw InputError(key.first + "/" + key.second + ": " + e.what());
    }
  }
  return grouped;
}

inline DetectionConfig stored_view(const AnalyzedSeries& state, const DetectionConfig& user) {
  DetectionConfig c = state.gen_config;
  c.p_threshold = user.p_threshold;
  c.min_magnitude = user.min_magnitude;
  return c;
}

inline bool any_change(const std::vector<SeriesResult>& results) {
  for (const auto& r : results)
    if (!r.change_points.empty()) return true;
  return false;
}

}  // namespace cli

/// Entry point of the `edm` command. Returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace cli;
  CLI::App app{"Change point detection for benchmark results"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kCodeVersionTag));

  CommonOptions o;
  std::string input;

  auto* analyze = app.add_subcommand("analyze", "detect change points in a CSV or JSON-lines file");
  analyze->add_option("input", input, "input file ('-' for stdin; .jsonl for JSON lines)")->required();
  add_detection_flags(analyze, o);
  add_output_flags(analyze, o);
  analyze->add_option("--store", o.store, "also persist the analyzed state under this directory");
  analyze->add_option("--test", o.test, "only this test (and default test name)");
  analyze->add_option("--metric", o.metric, "only this metric (and default metric name)");
  analyze->add_flag("--lenient", o.lenient, "skip malformed lines instead of failing");
  analyze->add_flag("--fail-on-change", o.fail_on_change, "exit 3 when any change point is found");

  auto* append = app.add_subcommand("append", "append results to stored series and report what changed");
  append->add_option("input", input, "input file ('-' for stdin)")->required();
  append->add_option("--store", o.store, "state directory")->required();
  add_detection_flags(append, o);
  add_output_flags(append, o);
  append->add_option("--test", o.test, "default test name");
  append->add_option("--metric", o.metric, "default metric name");
  append->add_flag("--lenient", o.lenient, "skip malformed lines instead of failing");
  append->add_flag("--fail-on-change", o.fail_on_change, "exit 3 when a new change point appears");

  auto* refilter_cmd = app.add_subcommand("refilter", "re-threshold a stored series without recomputing it");
  refilter_cmd->add_option("--store", o.store, "state directory")->required();
  refilter_cmd->add_option("--test", o.test, "test name")->required();
  refilter_cmd->add_option("--metric", o.metric, "metric name")->required();
  refilter_cmd->add_option("--p", o.config.p_threshold, "p-value threshold")->capture_default_str();
  refilter_cmd->add_option("--magnitude", o.config.min_magnitude, "minimum relative change")->capture_default_str();
  add_output_flags(refilter_cmd, o);
  refilter_cmd->add_flag("--fail-on-change", o.fail_on_change, "exit 3 when any change point is found");

  std::vector<std::string> variants;
  std::vector<double> ps;
  std::size_t runs = 100;
  std::size_t warmups = 2;
  std::size_t length = 365;
  std::uint64_t data_seed = 365;
  auto* bench = app.add_subcommand("bench", "time the detection variants on the synthetic demo series");
  bench->add_option("--variant", variants, "naive, shifted, classic_t, windowed, incremental (default: all)");
  bench->add_option("--p", ps, "p thresholds (repeatable; default 0.01)");
  bench->add_option("--runs", runs, "timed runs per variant")->capture_default_str()->check(CLI::PositiveNumber);
  bench->add_option("--warmups", warmups, "untimed runs before timing")->capture_default_str();
  bench->add_option("--length", length, "series length (the demo pattern repeats)")->capture_default_str();
  bench->add_option("--data-seed", data_seed, "noise seed of the dataset")->capture_default_str();
  bench->add_option("--window", o.config.window, "window size W")->capture_default_str();
  bench->add_option("--permutations", o.config.permutations, "permutations for naive/shifted")->capture_default_str();
  bench->add_option("--seed", o.config.seed, "permutation seed")->capture_default_str();
  bench->add_option("--format", o.format, "output format")->check(CLI::IsMember({"table", "json"}));

  SyntheticSpec gen;
  std::string steps;
  std::string output;
  bool demo = false;
  auto* generate = app.add_subcommand("generate", "write a synthetic step series as CSV");
  generate->add_option("--length", gen.length, "number of points");
  generate->add_option("--base", gen.base_level, "initial mean")->capture_default_str();
  generate->add_option("--steps", steps, "comma-separated INDEX:LEVEL pairs, e.g. 50:1.5,80:1.0");
  generate->add_option("--sigma", gen.sigma, "Gaussian noise standard deviation")->capture_default_str();
  generate->add_option("--seed", gen.seed, "noise seed")->capture_default_str();
  generate->add_option("--start", gen.start_time, "first timestamp (epoch seconds)")->capture_default_str();
  generate->add_option("--interval", gen.interval, "seconds between points")->capture_default_str();
  generate->add_flag("--demo", demo, "the 365-point multi-step demo series (other shape flags ignored)");
  generate->add_option("--test", o.test, "test column value");
  generate->add_option("--metric", o.metric, "metric column value");
  generate->add_option("-o,--output", output, "output file (default stdout)");

  ServiceConfig svc;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string ui;
  bool no_demo = false;
  auto* serve = app.add_subcommand("serve", "run the HTTP API");
  serve->add_option("--host", host, "bind address")->capture_default_str();
  serve->add_option("--port", port, "port (0 picks a free one)")->capture_default_str();
  serve->add_option("--store", o.store, "state directory")->required();
  serve->add_option("--ui", ui, "directory with the web UI bundle");
  serve->add_flag("--no-demo", no_demo, "do not seed the demo series");
  add_detection_flags(serve, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*analyze) {
      finish_config(o);
      auto grouped = read_input(input, o, err);
      std::vector<SeriesResult> results;
      for (auto& [key, s] : grouped) {
        SeriesResult r{key, {}};
        if (!o.store.empty()) {
          Store store(o.store);
          auto state = analyze_full(s, o.config);
          r.change_points = refilter(state, o.config.p_threshold, o.config.min_magnitude);
          store.save(key.first, key.second, state);
        } else {
          r.change_points = detect(s, o.config);
        }
        results.push_back(std::move(r));
      }
      if (results.empty()) out << "no data\n";
      emit(out, o, results);
      return o.fail_on_change && any_change(results) ? kExitChangeFound : kExitOk;
    }

    if (*append) {
      finish_config(o);
      auto grouped = read_input(input, o, err);
      Store store(o.store);
      std::vector<SeriesResult> results;
      bool gate = false;
      for (auto& [key, s] : grouped) {
        auto lock = store.lock(key.first, key.second);
        const auto outcome = append_to_store(store, key.first, key.second, s, o.config, o.config.p_threshold,
                                             o.config.min_magnitude);
        auto added = nlohmann::json::array();
        auto removed = nlohmann::json::array();
        for (const auto& cp : outcome.diff.added) added.push_back(to_json(cp));
        for (const auto& cp : outcome.diff.removed) removed.push_back(to_json(cp));
        gate = gate || !outcome.diff.added.empty();
        results.push_back({key, outcome.change_points,
                           {{"appended", s.size()}, {"created", outcome.created}, {"added", added}, {"removed", removed}}});
      }
      emit(out, o, results, [&](const SeriesResult& r) {
        const auto& added = r.extra["added"];
        const auto& removed = r.extra["removed"];
        if (r.extra["created"].get<bool>()) out << "  (new series, analyzed " << r.extra["appended"] << " points)\n";
        if (added.empty() && removed.empty()) out << "  no new change points\n";
        for (const auto& cp : added)
          out << "  + new change point at index " << cp["index"] << " (" << format_time(cp["time"].get<double>())
              << ")\n";
        for (const auto& cp : removed)
          out << "  - change point at index " << cp["index"] << " no longer reported\n";
      });
      return o.fail_on_change && gate ? kExitChangeFound : kExitOk;
    }

    if (*refilter_cmd) {
      Store store(o.store);
      const auto state = store.load(o.test, o.metric);
      if (!state) {
        err << "error: no stored state for " << o.test << "/" << o.metric << " in " << o.store
            << "; run analyze --store first\n";
        return kExitState;
      }
      check_fresh(*state, state->gen_config);
      o.config = stored_view(*state, o.config);
      std::vector<SeriesResult> results{{{o.test, o.metric}, refilter(*state, o.config.p_threshold, o.config.min_magnitude)}};
      emit(out, o, results);
      return o.fail_on_change && any_change(results) ? kExitChangeFound : kExitOk;
    }

    if (*bench) {
      std::vector<BenchVariant> vs;
      for (const auto& v : variants) vs.push_back(variant_from_string(v));
      if (vs.empty()) vs.assign(std::begin(kAllVariants), std::end(kAllVariants));
      if (ps.empty()) ps.push_back(0.01);
      const auto series = gen_synthetic(demo_spec_of_length(length, data_seed));
      const std::string dataset = "synthetic-demo-" + std::to_string(length);
      std::vector<BenchReport> reports;
      for (double p : ps)
        for (auto v : vs) {
          DetectionConfig c = o.config;
          c.p_threshold = p;
          reports.push_back(run_bench(series, dataset, v, c, runs, warmups));
        }
      auto shifted_ms = [&](double p) -> std::optional<double> {
        for (const auto& r : reports)
          if (r.variant == BenchVariant::shifted && r.p_threshold == p) return r.median_ms;
        return std::nullopt;
      };
      if (o.format == "json") {
        auto arr = nlohmann::json::array();
        for (const auto& r : reports) {
          nlohmann::json j = {{"variant", to_string(r.variant)}, {"dataset", r.dataset},
                              {"p", r.p_threshold},             {"change_points_found", r.change_points_found},
                              {"median_ms", r.median_ms},       {"min_ms", r.min_ms},
                              {"max_ms", r.max_ms},             {"runs", r.runs}};
          if (auto s = shifted_ms(r.p_threshold)) j["relative_to_shifted"] = r.median_ms / *s;
          arr.push_back(j);
        }
        out << arr.dump(2) << '\n';
      } else {
        char line[200];
        std::snprintf(line, sizeof line, "%-12s %-8s %6s %12s %12s %12s %5s %10s\n", "variant", "p", "found",
                      "median_ms", "min_ms", "max_ms", "runs", "vs_shifted");
        out << "dataset: " << dataset << "\n" << line;
        for (const auto& r : reports) {
          const auto s = shifted_ms(r.p_threshold);
          std::string rel = s ? std::to_string(r.median_ms / *s) : "-";
          std::snprintf(line, sizeof line, "%-12s %-8g %6zu %12.4f %12.4f %12.4f %5zu %10s\n", to_string(r.variant),
                        r.p_threshold, r.change_points_found, r.median_ms, r.min_ms, r.max_ms, r.runs, rel.c_str());
          out << line;
        }
      }
      return kExitOk;
    }

    if (*generate) {
      SyntheticSpec spec = gen;
      if (demo) {
        const auto d = demo_spec(gen.seed == 0 ? 365 : gen.seed);
        spec.length = d.length;
        spec.base_level = d.base_level;
        spec.sigma = d.sigma;
        spec.seed = d.seed;
        spec.steps = d.steps;
      } else if (!steps.empty()) {
        std::stringstream ss(steps);
        std::string item;
        while (std::getline(ss, item, ',')) {
          const auto colon = item.find(':');
          const auto idx = colon == std::string::npos ? std::nullopt : detail::parse_real(item.substr(0, colon));
          const auto lvl = colon == std::string::npos ? std::nullopt : detail::parse_real(item.substr(colon + 1));
          if (!idx || !lvl || *idx < 0 || *idx != std::floor(*idx)) throw InputError("bad step '" + item + "'");
          spec.steps.push_back({static_cast<std::size_t>(*idx), *lvl});
        }
      }
      if (spec.length == 0) throw InputError("--length is required unless --demo is given");
      const auto s = gen_synthetic(spec);
      std::ofstream file;
      std::ostream* dest = &out;
      if (!output.empty()) {
        file.open(output);
        if (!file) throw InputError("cannot write " + output);
        dest = &file;
      }
      const bool named = !o.test.empty() || !o.metric.empty();
      *dest << (named ? "test,metric,time,value\n" : "time,value\n");
      char buf[64];
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (named) *dest << (o.test.empty() ? "default" : o.test) << ',' << (o.metric.empty() ? "value" : o.metric) << ',';
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", s.timestamps[i], s.values[i]);
        *dest << buf;
      }
      return kExitOk;
    }

    if (*serve) {
      finish_config(o);
      svc.store_dir = o.store;
      svc.gen_config = o.config;
      svc.seed_demo = !no_demo;
      if (!ui.empty()) svc.ui_dir = ui;
      Service service(svc);
      const int bound = port == 0 ? service.server().bind_to_any_port(host) : port;
      if (port != 0 && !service.server().bind_to_port(host, port)) {
        err << "error: cannot bind " << host << ":" << port << "\n";
        return kExitInput;
      }
      if (bound < 0) {
        err << "error: cannot bind " << host << "\n";
        return kExitInput;
      }
      out << "listening on http://" << host << ":" << bound << "/ (store " << o.store << ")" << std::endl;
      service.server().listen_after_bind();
      return kExitOk;
    }
  } catch (const StateError& e) {
    err << "error: " << e.what();
    if (e.code() == StateErrc::stale) err << " (run analyze --store again to rebuild the state)";
    err << "\n";
    return kExitState;
  } catch (const RefilterRangeError& e) {
    err << "error: " << e.what() << "\n";
    return kExitState;
  } catch (const IterationLimitError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitState;
  }
  return kExitOk;
}

}  // namespace edm
