#ifndef BNN_CONFIG_HPP
#define BNN_CONFIG_HPP

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bnn/harness.hpp"
#include "bnn/report.hpp"

namespace bnn {

/// Everything a bnnlab run can be configured with. Sections [network],
/// [input] and [run] are shared by every subcommand.
struct LabConfig {
  NetworkTemplate network;
  InputConfig input;
  std::uint64_t seed = 20240901;
  int jobs = 1;
  Index init_width = 64;
  SweepConfig sweep;
  PerturbConfig perturb;
  HessianConfig hessian;
  BoundSuiteConfig bounds;

  template <class C>
  C resolved(C c) const {
    c.network = network;
    c.input = input;
    c.master_seed = seed;
    c.jobs = jobs;
    return c;
  }
  SweepConfig sweep_config() const { return resolved(sweep); }
  PerturbConfig perturb_config() const { return resolved(perturb); }
  HessianConfig hessian_config() const { return resolved(hessian); }
  BoundSuiteConfig bounds_config() const { return resolved(bounds); }
  NetworkSpec init_spec() const {
    if (init_width < 1) throw ConfigError("init.width must be positive");
    return network.spec(init_width);
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  T value{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError("bad value '" + text + "' for " + key);
  }
  return value;
}

template <class T>
struct Codec {
  static T parse(const std::string& key, const std::string& s) { return parse_number<T>(key, s); }
  static std::string format(const T& v) {
    if constexpr (std::is_floating_point_v<T>) {
      return format_double(v);
    } else {
      return std::to_string(v);
    }
  }
};

template <>
struct Codec<std::string> {
  static std::string parse(const std::string&, const std::string& s) { return trim(s); }
  static std::string format(const std::string& v) { return v; }
};

template <class T>
struct Codec<std::vector<T>> {
  static std::vector<T> parse(const std::string& key, const std::string& s) {
    std::vector<T> out;
    for (const auto& item : split_list(s)) out.push_back(Codec<T>::parse(key, item));
    return out;
  }
  static std::string format(const std::vector<T>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + Codec<T>::format(v[i]);
    return out;
  }
};

template <>
struct Codec<Activation> {
  static Activation parse(const std::string&, const std::string& s) { return parse_activation(trim(s)); }
  static std::string format(Activation a) { return to_string(a); }
};

template <>
struct Codec<InputKind> {
  static InputKind parse(const std::string&, const std::string& s) { return parse_input_kind(trim(s)); }
  static std::string format(InputKind k) { return to_string(k); }
};

template <>
struct Codec<DirectionMode> {
  static DirectionMode parse(const std::string&, const std::string& s) { return parse_direction_mode(trim(s)); }
  static std::string format(DirectionMode d) { return to_string(d); }
};

struct Binding {
  std::function<void(LabConfig&, const std::string&)> set;
  std::function<std::string(const LabConfig&)> get;
};

template <class Access>
Binding bind(const std::string& key, Access access) {
  using T = std::remove_reference_t<decltype(access(std::declval<LabConfig&>()))>;
  return {[key, access](LabConfig& c, const std::string& s) { access(c) = Codec<T>::parse(key, s); },
          [access](const LabConfig& c) { return Codec<T>::format(access(const_cast<LabConfig&>(c))); }};
}

#define BNN_KEY(name, expr) {name, bind(name, [](LabConfig& c) -> auto& { return expr; })}

/// Key table in file order; the order is also the order of `to_text`.
inline const std::vector<std::pair<std::string, Binding>>& bindings() {
  static const std::vector<std::pair<std::string, Binding>> table = {
      BNN_KEY("network.depths", c.network.depths),
      BNN_KEY("network.dims", c.network.dims),
      BNN_KEY("network.activation", c.network.activation),
      BNN_KEY("input.kind", c.input.kind),
      BNN_KEY("input.scale", c.input.scale),
      BNN_KEY("input.seed", c.input.seed),
      BNN_KEY("run.seed", c.seed),
      BNN_KEY("run.jobs", c.jobs),
      BNN_KEY("init.width", c.init_width),
      BNN_KEY("sweep.widths", c.sweep.widths),
      BNN_KEY("sweep.seeds", c.sweep.seeds),
      BNN_KEY("sweep.directions", c.sweep.directions),
      BNN_KEY("sweep.radius", c.sweep.radius),
      BNN_KEY("sweep.jet_degree", c.sweep.jet_degree),
      BNN_KEY("sweep.t_points", c.sweep.t_points),
      BNN_KEY("sweep.t_max", c.sweep.t_max),
      BNN_KEY("sweep.direction_mode", c.sweep.direction_mode),
      BNN_KEY("sweep.ascent_sweeps", c.sweep.ascent_sweeps),
      BNN_KEY("sweep.slope_min", c.sweep.slope_min),
      BNN_KEY("sweep.slope_max", c.sweep.slope_max),
      BNN_KEY("sweep.slope_statistic", c.sweep.slope_statistic),
      BNN_KEY("sweep.bound_rate", c.sweep.bound_rate),
      BNN_KEY("sweep.bound_min_width", c.sweep.bound_min_width),
      BNN_KEY("perturb.width", c.perturb.width),
      BNN_KEY("perturb.seeds", c.perturb.seeds),
      BNN_KEY("perturb.directions", c.perturb.directions),
      BNN_KEY("perturb.radius", c.perturb.radius),
      BNN_KEY("perturb.alpha", c.perturb.alpha),
      BNN_KEY("perturb.t_min", c.perturb.t_min),
      BNN_KEY("perturb.t_max", c.perturb.t_max),
      BNN_KEY("perturb.t_points", c.perturb.t_points),
      BNN_KEY("perturb.jet_degree", c.perturb.jet_degree),
      BNN_KEY("perturb.quartic_tol", c.perturb.quartic_tol),
      BNN_KEY("perturb.tanh_ratio", c.perturb.tanh_ratio),
      BNN_KEY("perturb.affine_tol", c.perturb.affine_tol),
      BNN_KEY("hessian.widths", c.hessian.widths),
      BNN_KEY("hessian.seeds", c.hessian.seeds),
      BNN_KEY("hessian.restarts", c.hessian.restarts),
      BNN_KEY("hessian.max_iters", c.hessian.max_iters),
      BNN_KEY("hessian.tol", c.hessian.tol),
      BNN_KEY("hessian.within_rate", c.hessian.within_rate),
      BNN_KEY("hessian.cross_rate", c.hessian.cross_rate),
      BNN_KEY("bounds.widths", c.bounds.widths),
      BNN_KEY("bounds.seeds", c.bounds.seeds),
      BNN_KEY("bounds.radius", c.bounds.radius),
      BNN_KEY("bounds.directions", c.bounds.directions),
      BNN_KEY("bounds.ascent_sweeps", c.bounds.ascent_sweeps),
      BNN_KEY("bounds.t_points", c.bounds.t_points),
      BNN_KEY("bounds.rate", c.bounds.rate),
      BNN_KEY("bounds.hessian_rate", c.bounds.hessian_rate),
      BNN_KEY("bounds.wnn_rate", c.bounds.wnn_rate),
      BNN_KEY("bounds.restarts", c.bounds.restarts),
      BNN_KEY("bounds.max_iters", c.bounds.max_iters),
      BNN_KEY("bounds.only", c.bounds.only),
      BNN_KEY("tails.trials", c.bounds.tails.trials),
      BNN_KEY("tails.gaussian_sigma", c.bounds.tails.gaussian_sigma),
      BNN_KEY("tails.gaussian_t", c.bounds.tails.gaussian_t),
      BNN_KEY("tails.chi2_dof", c.bounds.tails.chi2_dof),
      BNN_KEY("tails.chi2_t", c.bounds.tails.chi2_t),
      BNN_KEY("tails.matrix_rows", c.bounds.tails.matrix_rows),
      BNN_KEY("tails.matrix_cols", c.bounds.tails.matrix_cols),
      BNN_KEY("tails.matrix_t", c.bounds.tails.matrix_t),
  };
  return table;
}

#undef BNN_KEY

inline const Binding& find_binding(const std::string& key) {
  for (const auto& [k, b] : bindings()) {
    if (k == key) return b;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [k, b] : detail::bindings()) out.push_back(k);
  return out;
}

/// Sets one dotted key, e.g. "sweep.seeds".
inline void set_config_value(LabConfig& cfg, const std::string& key, const std::string& value) {
  detail::find_binding(key).set(cfg, value);
}

inline std::string get_config_value(const LabConfig& cfg, const std::string& key) {
  return detail::find_binding(key).get(cfg);
}

/// Applies a "section.key=value" override.
inline void apply_override(LabConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not of the form key=value");
  set_config_value(cfg, detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

/// Applies the text format: "[section]" headers, "key = value" lines,
/// '#' comments.
inline void apply_config_text(LabConfig& cfg, std::string_view text, const std::string& origin = "config") {
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    if (section.empty()) throw ConfigError(where + ": key outside of a section");
    const std::string key = section + "." + detail::trim(line.substr(0, eq));
    try {
      set_config_value(cfg, key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
}

namespace detail {

inline std::string json_scalar_text(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_array()) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + json_scalar_text(v[i]);
    return out;
  }
  return v.dump();
}

}  // namespace detail

/// Applies a JSON config echo (a report's "config" member, or a bare
/// section object). Run keys absent from the echo keep their values.
inline void apply_config_json(LabConfig& cfg, const Json& j) {
  const Json& root = j.contains("config") && j["config"].is_object() ? j["config"] : j;
  if (!root.is_object()) throw ConfigError("JSON config must be an object");
  for (const auto& [section, body] : root.items()) {
    if (!body.is_object()) throw ConfigError("JSON config section '" + section + "' must be an object");
    for (const auto& [key, value] : body.items()) {
      set_config_value(cfg, section + "." + key, detail::json_scalar_text(value));
    }
  }
}

/// Reads a text config, or a JSON report/config echo when the file ends in
/// ".json".
inline void apply_config_file(LabConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  if (path.extension() == ".json") {
    Json j;
    try {
      j = Json::parse(buf.str());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
    apply_config_json(cfg, j);
  } else {
    apply_config_text(cfg, buf.str(), path.string());
  }
}

/// The fully resolved configuration in the text format, one section per
/// key prefix.
inline std::string config_to_text(const LabConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& [key, b] : detail::bindings()) {
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      out += (out.empty() ? "[" : "\n[") + sec + "]\n";
      section = sec;
    }
    out += key.substr(dot + 1) + " = " + b.get(cfg) + "\n";
  }
  return out;
}

inline const std::map<std::string, std::string>& presets() {
  static const std::map<std::string, std::string> table = {
      {"default", ""},
      {"quick",
       "[sweep]\nwidths = 32,64,128,256\nseeds = 2\ndirections = 2\n"
       "[perturb]\nwidth = 1024\nseeds = 3\ndirections = 2\n"
       "[hessian]\nwidths = 64,128\nseeds = 10\n"
       "[bounds]\nwidths = 64\nseeds = 10\n"
       "[tails]\ntrials = 1000\n"},
      {"paper-fig1",
       "[sweep]\nwidths = 64,128,256,512,1024,2048,4096,10000\n"
       "[perturb]\nwidth = 10000\n"},
  };
  return table;
}

inline void apply_preset(LabConfig& cfg, const std::string& name) {
  const auto it = presets().find(name);
  if (it == presets().end()) throw ConfigError("unknown preset '" + name + "'");
  apply_config_text(cfg, it->second, "preset " + name);
}

}  // namespace bnn

#endif  // BNN_CONFIG_HPP
