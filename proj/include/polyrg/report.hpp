#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#ifndef POLYRG_VERSION
#define POLYRG_VERSION "0.0.0"
#endif
#ifndef POLYRG_GIT_DESCRIBE
#define POLYRG_GIT_DESCRIBE "unknown"
#endif

namespace polyrg {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::string version_string() { return std::string(POLYRG_VERSION) + "-" + POLYRG_GIT_DESCRIBE; }

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s) {
  if (s == "nan") return NAN;
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  // strtod, unlike stod, accepts subnormal results.
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end == s.c_str() || std::isspace(static_cast<unsigned char>(s.front())))
    throw ConfigError("not a number: '" + s + "'");
  if (end != s.c_str() + s.size()) throw ConfigError("trailing characters in number: '" + s + "'");
  return v;
}

struct RunConfig {
  int dim = 2;
  int L = 3;
  int N = 1;
  double mass = 0.5;
  double kappa = 0.1;
  double h = 10;
  double A = 32;
  double sigma0 = 1e-4;
  double z = 1e-6;
  double beta = 1.0;
  std::uint64_t seed = 1;
  std::uint64_t samples = 1000;
  std::vector<std::string> suites;
  std::string out;
  std::string format = "json";
  int parallel = 1;
};

// One entry per serialized key, in the fixed output order.
struct ConfigKey {
  const char* name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

namespace report_detail {

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_integer(const std::string& s) {
  std::size_t pos = 0;
  T v{};
  try {
    if constexpr (std::is_unsigned_v<T>) {
      if (s.find('-') != std::string::npos) throw ConfigError("negative value for an unsigned key: '" + s + "'");
      v = static_cast<T>(std::stoull(s, &pos));
    } else {
      long long w = std::stoll(s, &pos);
      if (w < std::numeric_limits<T>::min() || w > std::numeric_limits<T>::max()) throw std::out_of_range(s);
      v = static_cast<T>(w);
    }
  } catch (const std::logic_error&) {
    throw ConfigError("not an integer: '" + s + "'");
  }
  if (pos != s.size()) throw ConfigError("not an integer: '" + s + "'");
  return v;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (auto t = trim(item); !t.empty()) out.push_back(t);
  return out;
}

inline std::string join_list(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}

}  // namespace report_detail

inline const std::vector<ConfigKey>& config_keys() {
  using namespace report_detail;
#define POLYRG_INT_KEY(k, T)                                                   \
  ConfigKey {                                                                   \
    #k, [](const RunConfig& c) { return std::to_string(c.k); },                 \
        [](RunConfig& c, const std::string& s) { c.k = parse_integer<T>(s); } \
  }
#define POLYRG_DOUBLE_KEY(k)                                                  \
  ConfigKey {                                                                 \
    #k, [](const RunConfig& c) { return format_double(c.k); },                \
        [](RunConfig& c, const std::string& s) { c.k = parse_double(s); }     \
  }
  static const std::vector<ConfigKey> keys = {
      POLYRG_INT_KEY(dim, int),
      POLYRG_INT_KEY(L, int),
      POLYRG_INT_KEY(N, int),
      POLYRG_DOUBLE_KEY(mass),
      POLYRG_DOUBLE_KEY(kappa),
      POLYRG_DOUBLE_KEY(h),
      POLYRG_DOUBLE_KEY(A),
      POLYRG_DOUBLE_KEY(sigma0),
      POLYRG_DOUBLE_KEY(z),
      POLYRG_DOUBLE_KEY(beta),
      POLYRG_INT_KEY(seed, std::uint64_t),
      POLYRG_INT_KEY(samples, std::uint64_t),
      ConfigKey{"suite", [](const RunConfig& c) { return join_list(c.suites); },
                [](RunConfig& c, const std::string& s) { c.suites = split_list(s); }},
      ConfigKey{"out", [](const RunConfig& c) { return c.out; }, [](RunConfig& c, const std::string& s) { c.out = s; }},
      ConfigKey{"format", [](const RunConfig& c) { return c.format; },
                [](RunConfig& c, const std::string& s) { c.format = s; }},
      POLYRG_INT_KEY(parallel, int),
  };
#undef POLYRG_INT_KEY
#undef POLYRG_DOUBLE_KEY
  return keys;
}

inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  for (const auto& k : config_keys())
    if (key == k.name) return k.set(c, value);
  throw ConfigError("unknown config key '" + key + "'");
}

inline std::string get_config_value(const RunConfig& c, const std::string& key) {
  for (const auto& k : config_keys())
    if (key == k.name) return k.get(c);
  throw ConfigError("unknown config key '" + key + "'");
}

inline void validate(const RunConfig& c) {
  if (c.dim < 2) throw ConfigError("dim must be at least 2");
  if (c.L < 3 || c.L % 2 == 0) throw ConfigError("L must be an odd integer >= 3");
  if (c.N < 1) throw ConfigError("N must be at least 1");
  if (c.mass < 0) throw ConfigError("mass must be non-negative");
  if (c.beta <= 0) throw ConfigError("beta must be positive");
  if (c.h <= 0) throw ConfigError("h must be positive");
  if (c.kappa <= 0) throw ConfigError("kappa must be positive");
  for (double v : {c.mass, c.kappa, c.h, c.A, c.sigma0, c.z, c.beta})
    if (!std::isfinite(v)) throw ConfigError("numeric parameters must be finite");
  if (c.format != "json" && c.format != "csv") throw ConfigError("format must be json or csv");
  if (c.parallel < 1) throw ConfigError("parallel must be at least 1");
}

// Flat key=value lines; '#' starts a comment.
inline RunConfig parse_config_text(const std::string& text, RunConfig base = {}) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = report_detail::trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    set_config_value(base, report_detail::trim(line.substr(0, eq)), report_detail::trim(line.substr(eq + 1)));
  }
  return base;
}

inline RunConfig read_config_file(const std::string& path, RunConfig base = {}) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str(), std::move(base));
}

inline std::string serialize_config(const RunConfig& c) {
  std::string s;
  for (const auto& k : config_keys()) s += std::string(k.name) + "=" + k.get(c) + "\n";
  return s;
}

enum class Status { pass, fail, measured };

inline const char* status_name(Status s) {
  switch (s) {
    case Status::pass: return "pass";
    case Status::fail: return "fail";
    default: return "measured";
  }
}

inline Status status_from(const std::string& s) {
  if (s == "pass") return Status::pass;
  if (s == "fail") return Status::fail;
  if (s == "measured") return Status::measured;
  throw ConfigError("unknown status '" + s + "'");
}

struct CheckReport {
  std::string suite;
  std::string check;
  std::string anchor;
  std::string oracle;  // how the reference value is obtained
  Status status = Status::measured;
  std::vector<std::pair<std::string, double>> values;
  std::string message;
  std::uint64_t seed = 0;
  double wall_seconds = 0;

  bool operator==(const CheckReport& o) const {
    auto same = [](double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); };
    if (suite != o.suite || check != o.check || anchor != o.anchor || oracle != o.oracle || status != o.status ||
        message != o.message || seed != o.seed || values.size() != o.values.size())
      return false;
    for (std::size_t i = 0; i < values.size(); ++i)
      if (values[i].first != o.values[i].first || !same(values[i].second, o.values[i].second)) return false;
    return true;
  }
};

struct ReportDocument {
  std::string version = version_string();
  RunConfig config;
  std::vector<CheckReport> reports;
};

namespace report_detail {

inline std::string json_string(const std::string& s) { return nlohmann::json(s).dump(); }

// Non-finite numbers have no JSON literal; they are written as strings.
inline std::string json_number(double v) { return std::isfinite(v) ? format_double(v) : json_string(format_double(v)); }

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string o = "\"";
  for (char ch : s) o += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return o + "\"";
}

}  // namespace report_detail

// Wall times live only in the trailing "timing" object so that everything before it is reproducible.
inline std::string to_json(const ReportDocument& doc) {
  using namespace report_detail;
  std::string s = "{\n  \"version\": " + json_string(doc.version) + ",\n  \"config\": {";
  bool first = true;
  for (const auto& k : config_keys()) {
    s += std::string(first ? "\n" : ",\n") + "    " + json_string(k.name) + ": " + json_string(k.get(doc.config));
    first = false;
  }
  s += "\n  },\n  \"reports\": [";
  for (std::size_t i = 0; i < doc.reports.size(); ++i) {
    const auto& r = doc.reports[i];
    s += std::string(i ? "," : "") + "\n    {\"suite\": " + json_string(r.suite) + ", \"check\": " + json_string(r.check) +
         ", \"anchor\": " + json_string(r.anchor) + ", \"oracle\": " + json_string(r.oracle) +
         ", \"status\": " + json_string(status_name(r.status)) + ", \"seed\": " + std::to_string(r.seed) +
         ", \"message\": " + json_string(r.message) + ", \"values\": {";
    for (std::size_t k = 0; k < r.values.size(); ++k)
      s += std::string(k ? ", " : "") + json_string(r.values[k].first) + ": " + json_number(r.values[k].second);
    s += "}}";
  }
  s += doc.reports.empty() ? "],\n" : "\n  ],\n";
  s += "  \"timing\": {";
  for (std::size_t i = 0; i < doc.reports.size(); ++i)
    s += std::string(i ? ", " : "") + json_string(doc.reports[i].suite + "/" + doc.reports[i].check) + ": " +
         format_double(doc.reports[i].wall_seconds);
  s += "}\n}\n";
  return s;
}

inline ReportDocument from_json(const std::string& text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("malformed report: ") + e.what());
  }
  ReportDocument doc;
  doc.version = j.at("version").get<std::string>();
  for (const auto& [k, v] : j.at("config").items()) set_config_value(doc.config, k, v.get<std::string>());
  const auto& timing = j.at("timing");
  for (const auto& r : j.at("reports")) {
    CheckReport c;
    c.suite = r.at("suite").get<std::string>();
    c.check = r.at("check").get<std::string>();
    c.anchor = r.at("anchor").get<std::string>();
    c.oracle = r.at("oracle").get<std::string>();
    c.status = status_from(r.at("status").get<std::string>());
    c.seed = r.at("seed").get<std::uint64_t>();
    c.message = r.at("message").get<std::string>();
    for (const auto& [k, v] : r.at("values").items())
      c.values.emplace_back(k, v.is_string() ? parse_double(v.get<std::string>()) : v.get<double>());
    auto key = c.suite + "/" + c.check;
    if (timing.contains(key)) c.wall_seconds = timing.at(key).get<double>();
    doc.reports.push_back(std::move(c));
  }
  return doc;
}

// Long format: one row per value, reports without values get one row with empty key.  Leading comment
// lines echo the version and the config, trailing ones carry the wall times.
inline std::string to_csv(const ReportDocument& doc) {
  using namespace report_detail;
  std::string s = "# version=" + doc.version + "\n";
  for (const auto& k : config_keys()) s += std::string("# config.") + k.name + "=" + k.get(doc.config) + "\n";
  s += "suite,check,anchor,oracle,status,seed,message,key,value\n";
  for (const auto& r : doc.reports) {
    std::string head = csv_field(r.suite) + "," + csv_field(r.check) + "," + csv_field(r.anchor) + "," +
                       csv_field(r.oracle) + "," + status_name(r.status) + "," + std::to_string(r.seed) + "," +
                       csv_field(r.message) + ",";
    if (r.values.empty()) s += head + ",\n";
    for (const auto& [k, v] : r.values) s += head + csv_field(k) + "," + format_double(v) + "\n";
  }
  for (const auto& r : doc.reports) s += "# timing." + r.suite + "/" + r.check + "=" + format_double(r.wall_seconds) + "\n";
  return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline ReportDocument from_csv(const std::string& text) {
  ReportDocument doc;
  std::istringstream in(text);
  std::string line;
  bool header = false;
  std::map<std::string, double> timing;
  while (std::getline(in, line)) {
    // A quoted field may span lines; keep reading until the quotes balance.
    while (std::count(line.begin(), line.end(), '"') % 2 == 1) {
      std::string more;
      if (!std::getline(in, more)) throw ConfigError("unterminated quoted csv field");
      line += "\n" + more;
    }
    if (line.rfind("# timing.", 0) == 0) {
      auto eq = line.rfind('=');
      timing[line.substr(9, eq - 9)] = parse_double(line.substr(eq + 1));
      continue;
    }
    if (line.rfind("# version=", 0) == 0) {
      doc.version = line.substr(10);
      continue;
    }
    if (line.rfind("# config.", 0) == 0) {
      auto eq = line.find('=');
      set_config_value(doc.config, line.substr(9, eq - 9), line.substr(eq + 1));
      continue;
    }
    if (!header) {
      header = true;
      continue;
    }
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 9) throw ConfigError("malformed csv row: " + line);
    if (doc.reports.empty() || doc.reports.back().suite != f[0] || doc.reports.back().check != f[1]) {
      CheckReport c;
      c.suite = f[0];
      c.check = f[1];
      c.anchor = f[2];
      c.oracle = f[3];
      c.status = status_from(f[4]);
      c.seed = report_detail::parse_integer<std::uint64_t>(f[5]);
      c.message = f[6];
      doc.reports.push_back(std::move(c));
    }
    if (!f[7].empty()) doc.reports.back().values.emplace_back(f[7], parse_double(f[8]));
  }
  if (!header) throw ConfigError("csv report without header");
  for (auto& r : doc.reports)
    if (auto it = timing.find(r.suite + "/" + r.check); it != timing.end()) r.wall_seconds = it->second;
  return doc;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  f << text;
  if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace polyrg
