#include <catch_amalgamated.hpp>

#include <filesystem>
#include <sstream>

#include "dkg/cli.hpp"

using namespace dkg;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dkg_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

int invoke(std::vector<std::string> args, std::string* out = nullptr) {
  args.insert(args.begin(), "dkg_cli");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream log, err;
  const int rc = cli_main(static_cast<int>(argv.size()), argv.data(), log, err);
  if (out) *out = log.str() + err.str();
  return rc;
}

std::string slurp(const fs::path& p) { return read_text_file(p.string()); }

nlohmann::json summary(const fs::path& dir) { return nlohmann::json::parse(slurp(dir / "summary.json")); }

}  // namespace

TEST_CASE("verify_algebra_passes_and_writes_artifacts") {
  const fs::path d = scratch("algebra");
  CHECK(invoke({"verify-algebra", "--out", d.string(), "--sweep.algebra_samples=500", "--sweep.null_k_max=2"}) == 0);
  CHECK(fs::exists(d / "config.resolved.txt"));
  CHECK(fs::exists(d / "null_constants.csv"));
  const auto s = summary(d);
  CHECK(s["pass"] == true);
  CHECK(s["subcommand"] == "verify-algebra");
  CHECK(s.contains("timestamp"));
  for (const auto& c : s["checks"]) {
    CHECK(c.contains("tolerance"));
    CHECK(c["pass"] == true);
  }
  // resolved config reproduces the run
  const RunConfig again = parse_config({}, slurp(d / "config.resolved.txt"));
  CHECK(again.algebra_samples == 500);
  CHECK(again.output_dir == d.string());
}

TEST_CASE("identical_runs_identical_artifacts_modulo_timestamp") {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  const std::vector<std::string> common = {"--sweep.resonance_samples=3000", "--data.seed=5"};
  auto args = [&](const fs::path& d) {
    std::vector<std::string> v = {"resonance-scan", "--out", d.string()};
    v.insert(v.end(), common.begin(), common.end());
    return v;
  };
  const int ra = invoke(args(a)), rb = invoke(args(b));
  CHECK(ra == rb);
  for (const char* f : {"resonance_bounds.csv", "vanishing_cases.csv"}) CHECK(slurp(a / f) == slurp(b / f));
  auto sa = summary(a), sb = summary(b);
  sa.erase("timestamp");
  sb.erase("timestamp");
  sa["config"].erase("output.dir");
  sb["config"].erase("output.dir");
  CHECK(sa.dump() == sb.dump());
}

TEST_CASE("resonant_masses") {
  std::string msg;
  CHECK(invoke({"resonance-scan", "--out", scratch("res_bad").string(), "--masses.m=2", "--masses.M=1"}, &msg) == 2);
  CHECK(msg.find("2M > m > 0") != std::string::npos);
  const fs::path d = scratch("res_allowed");
  CHECK(invoke({"resonance-scan", "--out", d.string(), "--masses.m=2", "--masses.M=1", "--masses.allow_resonant=true",
                "--sweep.resonance_samples=2000"}) == 1);
  const auto s = summary(d);
  CHECK(s["pass"] == false);
  const auto& w = s["suites"][0]["details"]["bounds"]["non_res"];
  CHECK(w["infimum"] == 0.0);
  CHECK(w["witness"]["xi1"] == nlohmann::json({0.0, 0.0, 0.0}));
  CHECK(w["witness"]["xi2"] == nlohmann::json({0.0, 0.0, 0.0}));
  CHECK(w["witness"]["mu"] == 0.0);
}

TEST_CASE("simulate_zero_data") {
  const fs::path d = scratch("zero");
  CHECK(invoke({"simulate", "--out", d.string(), "--data.delta=0", "--grid.n=8", "--time.T=0.1", "--time.dt=0.01",
                "--output.every=5"}) == 0);
  std::istringstream csv(slurp(d / "diagnostics.csv"));
  std::string line;
  std::getline(csv, line);
  int n = 0;
  while (std::getline(csv, line)) {
    ++n;
    CHECK(line.substr(line.find(',')) == ",0,0,0,0,0,0");
  }
  CHECK(n == 3);
  for (int f = 0; f < 3; ++f) {
    char name[32];
    std::snprintf(name, sizeof name, "snap_%05d_psi.bin", f);
    const SpinorField psi = read_snapshot<4>((d / name).string());
    CHECK(psi.l2_norm() == 0.0);
  }
}

TEST_CASE("simulate_small_data_invariants") {
  const fs::path d = scratch("small");
  CHECK(invoke({"simulate", "--out", d.string(), "--grid.n=16", "--time.T=0.5", "--time.dt=0.01",
                "--output.every=25", "--output.snapshots=false"}) == 0);
  const auto s = summary(d);
  CHECK(s["pass"] == true);
  CHECK_FALSE(fs::exists(d / "snap_00000_psi.bin"));
  CHECK(fs::exists(d / "spectrum_psi_final.csv"));
}

TEST_CASE("config_errors_exit_2") {
  std::string msg;
  CHECK(invoke({"simulate", "--out", scratch("e1").string(), "--grid.size=3"}, &msg) == 2);
  CHECK(msg.find("grid.size") != std::string::npos);
  CHECK(invoke({"simulate", "--out", scratch("e2").string(), "--time.dt=abc"}, &msg) == 2);
  CHECK(msg.find("time.dt") != std::string::npos);
  CHECK(invoke({"simulate", "--config", "/nonexistent/file.cfg"}) == 2);
  CHECK(invoke({}) == 2);
}

TEST_CASE("config_file_and_flag_precedence") {
  const fs::path d = scratch("prec");
  fs::create_directories(d);
  write_text(d / "run.cfg", "time.dt = 1e-2\ntime.T = 0.02\ngrid.n = 8\ndata.delta = 0\n");
  CHECK(invoke({"simulate", "--config", (d / "run.cfg").string(), "--out", (d / "out").string(), "--time.dt=1e-3"}) ==
        0);
  const RunConfig c = parse_config({}, slurp(d / "out" / "config.resolved.txt"));
  CHECK(c.dt == 1e-3);
  CHECK(c.T == 0.02);
  CHECK(c.grid_n == 8);
}
