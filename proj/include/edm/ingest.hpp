#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "edm/series.hpp"

namespace edm {

/// One benchmark result.
struct ResultRecord {
  std::string test;
  std::string metric;
  double timestamp = 0.0;  // epoch seconds
  double value = 0.0;
  Attributes attributes;

  bool operator==(const ResultRecord&) const = default;
};

struct ParseIssue {
  std::size_t line = 0;
  std::string message;
};

enum class ParseMode { strict, lenient };

struct ParseOptions {
  ParseMode mode = ParseMode::strict;
  std::string default_test = "default";
  std::string default_metric = "value";
};

struct ParseResult {
  std::vector<ResultRecord> records;
  std::vector<ParseIssue> issues;  // lenient mode: the skipped lines
};

class ParseError : public std::runtime_error {
 public:
  explicit ParseError(ParseIssue issue)
      : std::runtime_error("line " + std::to_string(issue.line) + ": " + issue.message),
        issue_(std::move(issue)) {}
  const ParseIssue& issue() const noexcept { return issue_; }

 private:
  ParseIssue issue_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_real(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline bool read_int(std::string_view s, std::size_t& pos, std::size_t digits, int& out) {
  if (pos + digits > s.size()) return false;
  const auto [ptr, ec] = std::from_chars(s.data() + pos, s.data() + pos + digits, out);
  if (ec != std::errc() || ptr != s.data() + pos + digits) return false;
  pos += digits;
  return true;
}

// YYYY-MM-DD[(T| )HH:MM[:SS[.fff]]][Z|(+|-)HH[:]MM]
inline std::optional<double> parse_iso8601(std::string_view s) {
  using namespace std::chrono;
  std::size_t pos = 0;
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  double frac = 0.0;
  auto expect = [&](char c) {
    if (pos < s.size() && s[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  };
  if (!read_int(s, pos, 4, y) || !expect('-') || !read_int(s, pos, 2, mo) || !expect('-') ||
      !read_int(s, pos, 2, d))
    return std::nullopt;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  if (pos < s.size() && (s[pos] == 'T' || s[pos] == ' ')) {
    ++pos;
    if (!read_int(s, pos, 2, h) || !expect(':') || !read_int(s, pos, 2, mi)) return std::nullopt;
    if (expect(':')) {
      if (!read_int(s, pos, 2, sec)) return std::nullopt;
      if (pos < s.size() && (s[pos] == '.' || s[pos] == ',')) {
        const std::size_t start = pos;
        ++pos;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
        std::string digits(s.substr(start, pos - start));
        digits[0] = '.';
        frac = std::stod("0" + digits);
      }
    }
    if (h > 23 || mi > 59 || sec > 60) return std::nullopt;
  }
  int offset = 0;
  if (expect('Z')) {
  } else if (pos < s.size() && (s[pos] == '+' || s[pos] == '-')) {
    const int sign = s[pos++] == '-' ? -1 : 1;
    int oh = 0, om = 0;
    if (!read_int(s, pos, 2, oh)) return std::nullopt;
    expect(':');
    if (!read_int(s, pos, 2, om)) return std::nullopt;
    offset = sign * (oh * 3600 + om * 60);
  }
  if (pos != s.size()) return std::nullopt;
  const auto days = sys_days(ymd).time_since_epoch().count();
  return static_cast<double>(days) * 86400.0 + h * 3600.0 + mi * 60.0 + sec + frac - offset;
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  if (quoted) throw std::invalid_argument("unterminated quoted field");
  out.push_back(std::move(field));
  return out;
}

inline std::string scalar_text(const nlohmann::json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

class IssueSink {
 public:
  IssueSink(ParseMode mode, ParseResult& result) : mode_(mode), result_(result) {}
  void report(std::size_t line, std::string message) {
    ParseIssue issue{line, std::move(message)};
    if (mode_ == ParseMode::strict) throw ParseError(std::move(issue));
    result_.issues.push_back(std::move(issue));
  }
  bool accept(std::size_t line, ResultRecord rec) {
    auto key = std::make_tuple(rec.test, rec.metric, rec.timestamp);
    if (!seen_.insert(std::move(key)).second) {
      report(line, "duplicate point for " + rec.test + "/" + rec.metric + " at time " +
                       std::to_string(rec.timestamp));
      return false;
    }
    result_.records.push_back(std::move(rec));
    return true;
  }

 private:
  ParseMode mode_;
  ParseResult& result_;
  std::set<std::tuple<std::string, std::string, double>> seen_;
};

}  // namespace detail

/// Epoch seconds (integer or decimal) or an ISO-8601 date/time.
inline std::optional<double> parse_time(std::string_view text) {
  text = detail::trim(text);
  if (text.empty()) return std::nullopt;
  if (auto v = detail::parse_real(text); v && std::isfinite(*v)) return v;
  return detail::parse_iso8601(text);
}

/// CSV with a header row. `time` and `value` are required; `test` and
/// `metric` select the series; every other column becomes an attribute.
inline ParseResult parse_csv(std::istream& in, const ParseOptions& opts = {}) {
  ParseResult result;
  detail::IssueSink sink(opts.mode, result);
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> fields;
    try {
      fields = detail::split_csv_line(line);
    } catch (const std::invalid_argument& e) {
      if (header.empty()) throw ParseError({lineno, e.what()});
      sink.report(lineno, e.what());
      continue;
    }
    for (auto& f : fields) f = std::string(detail::trim(f));
    if (header.empty()) {
      header = std::move(fields);
      if (!header.empty() && header[0].starts_with("\xEF\xBB\xBF")) header[0].erase(0, 3);
      for (const char* required : {"time", "value"})
        if (std::find(header.begin(), header.end(), required) == header.end())
          throw ParseError({lineno, std::string("missing column '") + required + "'"});
      continue;
    }
    if (fields.size() != header.size()) {
      sink.report(lineno, "expected " + std::to_string(header.size()) + " fields, found " +
                              std::to_string(fields.size()));
      continue;
    }
    ResultRecord rec{opts.default_test, opts.default_metric, 0.0, 0.0, {}};
    std::string error;
    for (std::size_t i = 0; i < header.size() && error.empty(); ++i) {
      const auto& name = header[i];
      const auto& f = fields[i];
      if (name == "time") {
        const auto t = parse_time(f);
        if (!t) error = "unparseable time '" + f + "'";
        else rec.timestamp = *t;
      } else if (name == "value") {
        const auto v = detail::parse_real(f);
        if (!v) error = "non-numeric value '" + f + "'";
        else if (!std::isfinite(*v)) error = "non-finite value '" + f + "'";
        else rec.value = *v;
      } else if (name == "test") {
        if (!f.empty()) rec.test = f;
      } else if (name == "metric") {
        if (!f.empty()) rec.metric = f;
      } else if (!f.empty()) {
        rec.attributes[name] = f;
      }
    }
    if (!error.empty()) {
      sink.report(lineno, error);
      continue;
    }
    sink.accept(lineno, std::move(rec));
  }
  return result;
}

/// One JSON object per line: {"time", "value", "test"?, "metric"?,
/// "attributes"?: {...}}. Other keys become attributes.
inline ParseResult parse_jsonl(std::istream& in, const ParseOptions& opts = {}) {
  ParseResult result;
  detail::IssueSink sink(opts.mode, result);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      sink.report(lineno, "not a JSON object");
      continue;
    }
    ResultRecord rec{opts.default_test, opts.default_metric, 0.0, 0.0, {}};
    std::string error;
    const auto time = j.find("time");
    const auto value = j.find("value");
    if (time == j.end()) {
      error = "missing field 'time'";
    } else if (const auto t = time->is_number() ? std::optional<double>(time->get<double>())
                              : time->is_string() ? parse_time(time->get<std::string>())
                                                  : std::nullopt;
               !t || !std::isfinite(*t)) {
      error = "unparseable time " + time->dump();
    } else {
      rec.timestamp = *t;
    }
    if (error.empty()) {
      if (value == j.end()) error = "missing field 'value'";
      else if (!value->is_number()) error = "non-numeric value " + value->dump();
      else if (!std::isfinite(value->get<double>())) error = "non-finite value";
      else rec.value = value->get<double>();
    }
    if (!error.empty()) {
      sink.report(lineno, error);
      continue;
    }
    for (const auto& [key, v] : j.items()) {
      if (key == "time" || key == "value") continue;
      if (key == "test" && v.is_string()) {
        rec.test = v.get<std::string>();
      } else if (key == "metric" && v.is_string()) {
        rec.metric = v.get<std::string>();
      } else if (key == "attributes" && v.is_object()) {
        for (const auto& [ak, av] : v.items()) rec.attributes[ak] = detail::scalar_text(av);
      } else if (!v.is_null()) {
        rec.attributes[key] = detail::scalar_text(v);
      }
    }
    sink.accept(lineno, std::move(rec));
  }
  return result;
}

using SeriesKey = std::pair<std::string, std::string>;

/// Groups records by (test, metric), keeping file order within each series.
/// Attributes are kept only when at least one point carries some.
inline std::map<SeriesKey, Series> group_series(const std::vector<ResultRecord>& records) {
  std::map<SeriesKey, Series> out;
  for (const auto& r : records) {
    auto& s = out[{r.test, r.metric}];
    s.values.push_back(r.value);
    s.timestamps.push_back(r.timestamp);
    s.attributes.push_back(r.attributes);
  }
  for (auto& [key, s] : out) {
    bool any = false;
    for (const auto& a : s.attributes) any = any || !a.empty();
    if (!any) s.attributes.clear();
  }
  return out;
}

}  // namespace edm
