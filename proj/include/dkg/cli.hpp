#pragma once

// Command-line orchestration: subcommand dispatch, artifact writing and exit
// codes (0 all checks pass, 1 a check failed or a run aborted, 2 bad config).

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dkg/config.hpp"
#include "dkg/field_io.hpp"
#include "dkg/verify.hpp"

namespace dkg {

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitConfig = 2;

inline const std::vector<std::pair<std::string, std::string>>& subcommands() {
  static const std::vector<std::pair<std::string, std::string>> s = {
      {"simulate", "integrate the coupled system and write snapshots and diagnostics"},
      {"resonance-scan", "certify the resonance bounds and run the vanishing-support grid"},
      {"verify-algebra", "Dirac matrix, projector and null-structure checks"},
      {"verify-kernel", "dispersive kernel decay constants over dyadic cubes"},
      {"trilinear", "trilinear ratios over dyadic triples and the G summation"},
      {"decompose-check", "partition-of-unity residuals for shells, cubes, caps and modulations"},
      {"scattering", "pullback Cauchy differences and Picard contraction"}};
  return s;
}

inline std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << s;
}

namespace detail {

inline SuiteResult simulate_run(const RunConfig& c, const std::filesystem::path& dir) {
  SuiteResult s;
  s.name = "simulate";
  auto lat = make_lattice(c.grid_n, c.grid_L);
  const DKGState u0 = config_data(c, lat);
  const DKGState w0 = pullback(u0);
  SolveOptions o;
  o.T = c.T;
  o.dt = c.dt;
  o.output_every = c.output_every;
  o.coupling = c.coupling;
  o.keep_states = false;
  o.eps = c.eps;
  Table t;
  t.header = {"t", "charge", "charge_drift", "h_eps_psi", "h_half_eps_phi", "projector_residual", "pullback_drift"};
  nlohmann::json snaps = nlohmann::json::array();
  double proj = 0.0;
  int frame = 0;
  DKGState last = u0;
  auto observe = [&](const DKGState& u, const Diagnostic& d) {
    last = u;
    const double drift = state_distance(pullback(u), w0);
    proj = std::max(proj, d.projector_residual);
    t.rows.push_back({fmt(d.t), fmt(d.charge), fmt(d.charge_drift), fmt(d.h_eps_psi), fmt(d.h_phi),
                      fmt(d.projector_residual), fmt(drift)});
    if (!c.snapshots) return;
    const SecondOrderState r = reconstruct(u);
    char name[32];
    std::snprintf(name, sizeof name, "snap_%05d", frame++);
    const nlohmann::json meta = {{"t", u.t}, {"M", c.mass_M}, {"m", c.mass_m}};
    write_snapshot((dir / (std::string(name) + "_psi.bin")).string(), r.psi, meta);
    write_snapshot((dir / (std::string(name) + "_phi.bin")).string(), r.phi, meta);
    snaps.push_back(name);
  };
  bool completed = true;
  std::string message;
  double max_drift = 0.0;
  try {
    const Trajectory tr = solve(u0, o, observe);
    max_drift = tr.max_charge_drift();
    write_spectrum_csv((dir / "spectrum_psi_final.csv").string(), reconstruct(last).psi);
  } catch (const BlowUpError& e) {
    completed = false;
    message = e.what();
  }
  s.expect("completed", completed ? 1.0 : 0.0, "==", 1.0);
  s.expect("charge_drift", max_drift, "<=", c.tol_charge_drift);
  s.expect("projector_residual", proj, "<=", 1e-9);
  s.details = {{"n", c.grid_n}, {"L", c.grid_L}, {"T", c.T}, {"dt", c.dt}, {"delta", c.delta},
               {"coupling", c.coupling}, {"snapshots", snaps}, {"message", message}};
  s.tables["diagnostics"] = t;
  return s;
}

}  // namespace detail

/// Runs one subcommand on a validated config and writes all artifacts into
/// c.output_dir. Returns the exit status.
inline int run(const RunConfig& c, unsigned threads, std::ostream& log = std::cout) {
  namespace fs = std::filesystem;
  const fs::path dir(c.output_dir);
  fs::create_directories(dir);
  write_text(dir / "config.resolved.txt", resolved_config(c));

  std::vector<SuiteResult> suites;
  std::string error;
  try {
    const std::string& sc = c.subcommand;
    if (sc == "simulate") {
      suites.push_back(detail::simulate_run(c, dir));
    } else if (sc == "resonance-scan") {
      suites.push_back(resonance_suite(c, threads));
      suites.push_back(vanishing_suite(c, threads));
    } else if (sc == "verify-algebra") {
      suites.push_back(algebra_suite(c));
      suites.push_back(null_suite(c));
    } else if (sc == "verify-kernel") {
      suites.push_back(kernel_suite(c, threads));
    } else if (sc == "trilinear") {
      suites.push_back(trilinear_suite(c));
    } else if (sc == "decompose-check") {
      suites.push_back(partition_suite(c));
    } else if (sc == "scattering") {
      suites.push_back(scattering_suite(c));
      suites.push_back(picard_suite(c, c.picard_T));
    } else {
      throw std::invalid_argument("unknown subcommand '" + sc + "'");
    }
  } catch (const std::exception& e) {
    error = e.what();
  }

  bool pass = error.empty();
  nlohmann::json checks = nlohmann::json::array(), js = nlohmann::json::array();
  for (const auto& s : suites) {
    pass = pass && s.pass();
    js.push_back(to_json(s));
    for (const auto& ch : s.checks) {
      checks.push_back(to_json(ch));
      log << (ch.pass ? "PASS " : "FAIL ") << s.name << "." << ch.name << " = " << fmt(ch.value) << " "
          << ch.relation << " " << fmt(ch.tolerance) << "\n";
    }
    for (const auto& [name, table] : s.tables) write_text(dir / (name + ".csv"), csv_text(table));
  }
  if (!error.empty()) log << "ERROR " << error << "\n";

  nlohmann::json cfg = nlohmann::json::object();
  for (const auto& [k, v] : parse_config_text(resolved_config(c))) cfg[k] = v;
  nlohmann::json summary = {{"subcommand", c.subcommand},
                            {"timestamp", utc_timestamp()},
                            {"pass", pass},
                            {"exit_code", pass ? kExitPass : kExitFail},
                            {"config", cfg},
                            {"checks", checks},
                            {"suites", js}};
  if (!error.empty()) summary["error"] = error;
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  log << (pass ? "PASS" : "FAIL") << " " << c.subcommand << " -> " << dir.string() << "\n";
  return pass ? kExitPass : kExitFail;
}

inline int cli_main(int argc, const char* const* argv, std::ostream& log = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"Dirac-Klein-Gordon pseudospectral simulator and verification suite"};
  app.require_subcommand(1);
  std::string config_file, out_dir;
  std::vector<CLI::App*> subs;
  for (const auto& [name, desc] : subcommands()) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", config_file, "flat key-value config file (section.key = value)");
    sub->add_option("--out", out_dir, "output directory (overrides output.dir)");
    sub->allow_extras();
    sub->footer("Any config key can be overridden with --section.key=value. Threads: DKG_THREADS.");
    subs.push_back(sub);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, log, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, log, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, log, err);
    return kExitConfig;
  }
  CLI::App* sub = nullptr;
  for (CLI::App* s : subs)
    if (s->parsed()) sub = s;

  RunConfig c;
  unsigned threads = 0;
  try {
    const std::string text = config_file.empty() ? "" : read_text_file(config_file);
    c = parse_config(sub->remaining(), text);
    if (!out_dir.empty()) c.output_dir = out_dir;
    c.subcommand = sub->get_name();
    threads = thread_count_from_env();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  return run(c, threads, log);
}

}  // namespace dkg
