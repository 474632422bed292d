#pragma once

// Run configuration: flat "section.key = value" text, overridden by
// "--section.key=value" arguments. Every key is declared in one table with
// its type, default and constraint.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "dkg/lattice.hpp"

namespace dkg {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& msg)
      : std::runtime_error(key.empty() ? msg : "config key '" + key + "': " + msg), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct RunConfig {
  std::string subcommand;

  int grid_n = 32;
  double grid_L = 8.0 * M_PI;

  double mass_M = 1.0;
  double mass_m = 1.0;
  bool allow_resonant = false;

  double delta = 0.01;
  std::uint64_t seed = 1;
  double eps = 0.1;
  double width = 1.0;
  double spectral_width = 1.0;

  double T = 1.0;
  double dt = 1e-2;
  int output_every = 10;
  bool snapshots = true;
  std::string output_dir = "dkg_out";
  bool coupling = true;

  // sweep ranges
  int algebra_samples = 10000;
  int null_k_max = 8;
  int null_angles = 4000;
  std::uint64_t resonance_samples = 100000;
  int kernel_k_max = 8;
  int trilinear_k_max = 4;
  int trilinear_trials = 50;
  int g_kmax = 64;
  int g_triples = 100;
  int partition_samples = 20000;
  int picard_nt = 25;
  int picard_iterations = 5;
  double picard_T = 5.0;
  double scattering_window = 0.95;  // fraction of L/4

  // tolerances
  double tol_algebra = 1e-13;
  double tol_null_stability = 0.2;
  double tol_resonance = 0.1;
  double tol_d_identity = 1e-10;
  double tol_partition = 1e-10;
  double tol_cap_overlap = 8.0;
  double tol_kernel_uniformity = 3.0;
  double tol_kernel_refinement = 0.2;
  double tol_trilinear = 0.05;
  double tol_g_sum = 7.1;
  double tol_charge_drift = 1e-8;
  double tol_picard_ratio = 0.5;
  double tol_coupling_off = 1e-12;

  MassParams masses() const { return MassParams(mass_M, mass_m, allow_resonant); }
};

namespace detail {

using ConfigRef = std::variant<int*, double*, bool*, std::string*, std::uint64_t*>;

struct ConfigKey {
  const char* name;
  std::function<ConfigRef(RunConfig&)> ref;
  // returns an error message or empty
  std::function<std::string(const RunConfig&)> check;
};

inline std::string positive(double v) { return v > 0.0 && std::isfinite(v) ? "" : "must be positive and finite"; }
inline std::string nonneg(double v) { return v >= 0.0 && std::isfinite(v) ? "" : "must be nonnegative and finite"; }
inline std::string at_least(long long v, long long lo) {
  return v >= lo ? "" : "must be >= " + std::to_string(lo);
}

#define DKG_KEY(name, member, check) \
  ConfigKey { name, [](RunConfig& c) -> ConfigRef { return &c.member; }, check }

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      DKG_KEY("grid.n", grid_n,
              [](const RunConfig& c) -> std::string {
                if (c.grid_n < 4 || (c.grid_n & (c.grid_n - 1))) return "must be a power of two >= 4";
                return "";
              }),
      DKG_KEY("grid.L", grid_L, [](const RunConfig& c) { return positive(c.grid_L); }),
      DKG_KEY("masses.M", mass_M, [](const RunConfig& c) { return nonneg(c.mass_M); }),
      DKG_KEY("masses.m", mass_m,
              [](const RunConfig& c) -> std::string {
                if (auto e = nonneg(c.mass_m); !e.empty()) return e;
                if (!c.allow_resonant && !(2.0 * c.mass_M > c.mass_m && c.mass_m > 0.0))
                  return "mass condition 2M > m > 0 violated; set masses.allow_resonant = true to override";
                return "";
              }),
      DKG_KEY("masses.allow_resonant", allow_resonant, nullptr),
      DKG_KEY("data.delta", delta, [](const RunConfig& c) { return nonneg(c.delta); }),
      DKG_KEY("data.seed", seed, nullptr),
      DKG_KEY("data.eps", eps, [](const RunConfig& c) { return positive(c.eps); }),
      DKG_KEY("data.width", width, [](const RunConfig& c) { return positive(c.width); }),
      DKG_KEY("data.spectral_width", spectral_width, [](const RunConfig& c) { return positive(c.spectral_width); }),
      DKG_KEY("time.T", T, [](const RunConfig& c) { return nonneg(c.T); }),
      DKG_KEY("time.dt", dt, [](const RunConfig& c) { return positive(c.dt); }),
      DKG_KEY("output.every", output_every, [](const RunConfig& c) { return at_least(c.output_every, 1); }),
      DKG_KEY("output.snapshots", snapshots, nullptr),
      DKG_KEY("output.dir", output_dir,
              [](const RunConfig& c) -> std::string { return c.output_dir.empty() ? "must not be empty" : ""; }),
      DKG_KEY("coupling.enabled", coupling, nullptr),
      DKG_KEY("sweep.algebra_samples", algebra_samples, [](const RunConfig& c) { return at_least(c.algebra_samples, 1); }),
      DKG_KEY("sweep.null_k_max", null_k_max, [](const RunConfig& c) { return at_least(c.null_k_max, 0); }),
      DKG_KEY("sweep.null_angles", null_angles, [](const RunConfig& c) { return at_least(c.null_angles, 8); }),
      DKG_KEY("sweep.resonance_samples", resonance_samples,
              [](const RunConfig& c) { return at_least(static_cast<long long>(c.resonance_samples), 16); }),
      DKG_KEY("sweep.kernel_k_max", kernel_k_max, [](const RunConfig& c) { return at_least(c.kernel_k_max, 0); }),
      DKG_KEY("sweep.trilinear_k_max", trilinear_k_max,
              [](const RunConfig& c) -> std::string {
                if (c.trilinear_k_max < 0 || c.trilinear_k_max > 4) return "must be in [0, 4]";
                return "";
              }),
      DKG_KEY("sweep.trilinear_trials", trilinear_trials, [](const RunConfig& c) { return at_least(c.trilinear_trials, 1); }),
      DKG_KEY("sweep.g_kmax", g_kmax, [](const RunConfig& c) { return at_least(c.g_kmax, 1); }),
      DKG_KEY("sweep.g_triples", g_triples, [](const RunConfig& c) { return at_least(c.g_triples, 1); }),
      DKG_KEY("sweep.partition_samples", partition_samples,
              [](const RunConfig& c) { return at_least(c.partition_samples, 1); }),
      DKG_KEY("sweep.picard_nt", picard_nt, [](const RunConfig& c) { return at_least(c.picard_nt, 1); }),
      DKG_KEY("sweep.picard_iterations", picard_iterations,
              [](const RunConfig& c) { return at_least(c.picard_iterations, 3); }),
      DKG_KEY("sweep.picard_T", picard_T, [](const RunConfig& c) { return positive(c.picard_T); }),
      DKG_KEY("sweep.scattering_window", scattering_window,
              [](const RunConfig& c) -> std::string {
                return c.scattering_window > 0.0 && c.scattering_window <= 1.0 ? "" : "must be in (0, 1]";
              }),
      DKG_KEY("tol.algebra", tol_algebra, [](const RunConfig& c) { return positive(c.tol_algebra); }),
      DKG_KEY("tol.null_stability", tol_null_stability, [](const RunConfig& c) { return positive(c.tol_null_stability); }),
      DKG_KEY("tol.resonance", tol_resonance, [](const RunConfig& c) { return positive(c.tol_resonance); }),
      DKG_KEY("tol.d_identity", tol_d_identity, [](const RunConfig& c) { return positive(c.tol_d_identity); }),
      DKG_KEY("tol.partition", tol_partition, [](const RunConfig& c) { return positive(c.tol_partition); }),
      DKG_KEY("tol.cap_overlap", tol_cap_overlap, [](const RunConfig& c) { return positive(c.tol_cap_overlap); }),
      DKG_KEY("tol.kernel_uniformity", tol_kernel_uniformity,
              [](const RunConfig& c) { return positive(c.tol_kernel_uniformity); }),
      DKG_KEY("tol.kernel_refinement", tol_kernel_refinement,
              [](const RunConfig& c) { return positive(c.tol_kernel_refinement); }),
      DKG_KEY("tol.trilinear", tol_trilinear, [](const RunConfig& c) { return positive(c.tol_trilinear); }),
      DKG_KEY("tol.g_sum", tol_g_sum, [](const RunConfig& c) { return positive(c.tol_g_sum); }),
      DKG_KEY("tol.charge_drift", tol_charge_drift, [](const RunConfig& c) { return positive(c.tol_charge_drift); }),
      DKG_KEY("tol.picard_ratio", tol_picard_ratio, [](const RunConfig& c) { return positive(c.tol_picard_ratio); }),
      DKG_KEY("tol.coupling_off", tol_coupling_off, [](const RunConfig& c) { return positive(c.tol_coupling_off); }),
  };
  return keys;
}

#undef DKG_KEY

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

template <class T>
bool parse_number(const std::string& v, T& out) {
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  return ec == std::errc() && p == end;
}

inline void assign(const std::string& key, const std::string& value, ConfigRef ref) {
  auto bad = [&](const char* type) { return ConfigError(key, "expected " + std::string(type) + ", got '" + value + "'"); };
  std::visit(
      [&](auto* p) {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, std::string>) {
          *p = value;
        } else if constexpr (std::is_same_v<T, bool>) {
          if (value == "true" || value == "1" || value == "yes" || value == "on") *p = true;
          else if (value == "false" || value == "0" || value == "no" || value == "off") *p = false;
          else throw bad("boolean");
        } else if constexpr (std::is_same_v<T, double>) {
          if (!parse_number(value, *p)) throw bad("number");
        } else {
          long double tmp;
          if (!parse_number(value, *p)) {
            // accept integral values written like 1e5
            if (!parse_number(value, tmp) || tmp != std::floor(tmp) || (tmp < 0 && std::is_unsigned_v<T>))
              throw bad("integer");
            *p = static_cast<T>(tmp);
          }
        }
      },
      ref);
}

inline std::string format(ConfigRef ref) {
  return std::visit(
      [](auto* p) -> std::string {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, std::string>) return *p;
        else if constexpr (std::is_same_v<T, bool>) return *p ? "true" : "false";
        else if constexpr (std::is_same_v<T, double>) {
          char buf[64];
          std::snprintf(buf, sizeof buf, "%.17g", *p);
          return buf;
        } else return std::to_string(*p);
      },
      ref);
}

inline const ConfigKey& find_key(const std::string& key) {
  for (const auto& k : config_keys())
    if (key == k.name) return k;
  throw ConfigError(key, "unknown key");
}

}  // namespace detail

/// Key/value pairs of a flat config text, in order. '#' starts a comment.
inline std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("", "line " + std::to_string(lineno) + ": expected 'section.key = value'");
    out.push_back({detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1))});
  }
  return out;
}

/// Applies file entries, then "--key=value" (or "--key value") overrides, then validates.
/// Arguments that do not look like overrides are rejected.
inline RunConfig parse_config(const std::vector<std::string>& args, const std::string& file_text,
                              RunConfig base = {}) {
  RunConfig c = std::move(base);
  for (const auto& [k, v] : parse_config_text(file_text)) detail::assign(k, v, detail::find_key(k).ref(c));
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("--", 0) != 0) throw ConfigError("", "unexpected argument '" + a + "'");
    const auto eq = a.find('=');
    if (eq != std::string::npos) {
      const std::string k = a.substr(2, eq - 2);
      detail::assign(k, a.substr(eq + 1), detail::find_key(k).ref(c));
    } else {
      const std::string k = a.substr(2);
      if (i + 1 >= args.size() || args[i + 1].rfind("--", 0) == 0)
        throw ConfigError(k, "override needs a value (--key=value)");
      detail::assign(k, args[++i], detail::find_key(k).ref(c));
    }
  }
  for (const auto& k : detail::config_keys())
    if (k.check)
      if (auto e = k.check(c); !e.empty()) throw ConfigError(k.name, e);
  return c;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot read config file " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

/// Fully resolved config in the input format, one key per line, fixed order.
inline std::string resolved_config(const RunConfig& c) {
  RunConfig copy = c;
  std::ostringstream os;
  os << "# subcommand: " << (c.subcommand.empty() ? "none" : c.subcommand) << "\n";
  for (const auto& k : detail::config_keys()) os << k.name << " = " << detail::format(k.ref(copy)) << "\n";
  return os.str();
}

inline std::vector<std::string> config_key_names() {
  std::vector<std::string> out;
  for (const auto& k : detail::config_keys()) out.push_back(k.name);
  return out;
}

/// Worker threads: DKG_THREADS if set and positive, otherwise 0 (hardware concurrency).
inline unsigned thread_count_from_env() {
  const char* s = std::getenv("DKG_THREADS");
  if (!s || !*s) return 0;
  unsigned v = 0;
  if (!detail::parse_number(std::string(s), v)) throw ConfigError("DKG_THREADS", "expected a positive integer");
  return v;
}

}  // namespace dkg
