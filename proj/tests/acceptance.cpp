// Acceptance run: one PASS/FAIL line per criterion. Tolerances are pinned
// here and do not follow config defaults.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "dkg/verify.hpp"

using namespace dkg;

namespace {

RunConfig pinned() {
  RunConfig c;
  c.grid_n = 32;
  c.grid_L = 8.0 * M_PI;
  c.mass_M = 1.0;
  c.mass_m = 1.0;
  c.delta = 0.01;
  c.seed = 1;
  c.algebra_samples = 10000;
  c.null_k_max = 8;
  c.null_angles = 4000;
  c.resonance_samples = 100000;
  c.kernel_k_max = 8;
  c.trilinear_k_max = 4;
  c.trilinear_trials = 50;
  c.g_kmax = 64;
  c.g_triples = 100;
  c.picard_nt = 25;
  c.picard_iterations = 5;
  c.scattering_window = 0.95;

  c.tol_algebra = 1e-13;
  c.tol_null_stability = 0.2;
  c.tol_resonance = 0.1;
  c.tol_d_identity = 1e-10;
  c.tol_partition = 1e-10;
  c.tol_cap_overlap = 8;
  c.tol_kernel_uniformity = 3.0;
  c.tol_kernel_refinement = 0.2;
  c.tol_trilinear = 0.05;
  c.tol_g_sum = 7.1;
  c.tol_charge_drift = 1e-8;
  c.tol_picard_ratio = 0.5;
  c.tol_coupling_off = 1e-12;
  return c;
}

struct Outcome {
  bool pass = true;
  std::string summary;
};

std::string brief(const SuiteResult& s) {
  std::string out;
  for (const auto& c : s.checks) {
    if (!out.empty()) out += "; ";
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s%s=%.3g%s%.3g", c.pass ? "" : "!", c.name.c_str(), c.value, c.relation.c_str(),
                  c.tolerance);
    out += buf;
  }
  return out;
}

Outcome from_suites(const std::vector<SuiteResult>& suites) {
  Outcome o;
  for (const auto& s : suites) {
    o.pass = o.pass && s.pass();
    if (!o.summary.empty()) o.summary += "; ";
    o.summary += brief(s);
  }
  return o;
}

}  // namespace

int main() {
  const RunConfig c = pinned();
  const unsigned threads = thread_count_from_env();
  struct Criterion {
    int id;
    const char* title;
    double time_limit;  // seconds, 0 for none
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "algebra suite", 5.0, [&] { return from_suites({algebra_suite(c)}); }},
      {2, "null structure", 30.0, [&] { return from_suites({null_suite(c)}); }},
      {3, "resonance certification", 60.0, [&] { return from_suites({resonance_suite(c, threads)}); }},
      {4, "vanishing-support grid", 120.0, [&] { return from_suites({vanishing_suite(c, threads)}); }},
      {5, "solver equivalence", 600.0, [&] { return from_suites({equivalence_suite(c, 1.0, 1e-3, 10.0, 1e-2)}); }},
      {6, "Picard contraction", 0.0, [&] { return from_suites({picard_suite(c, 5.0)}); }},
      {7, "scattering proxy", 0.0, [&] { return from_suites({scattering_suite(c)}); }},
      {8, "kernel decay constant", 0.0, [&] { return from_suites({kernel_suite(c, threads)}); }},
      {9, "partition suite", 0.0, [&] { return from_suites({partition_suite(c)}); }},
      {10, "trilinear and G summation", 0.0, [&] { return from_suites({trilinear_suite(c)}); }},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = cr.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.summary = std::string("error: ") + e.what();
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool pass = o.pass;
    char tbuf[64];
    if (cr.time_limit > 0.0) {
      pass = pass && sec < cr.time_limit;
      std::snprintf(tbuf, sizeof tbuf, "%.1fs<%.0fs", sec, cr.time_limit);
    } else {
      std::snprintf(tbuf, sizeof tbuf, "%.1fs", sec);
    }
    failed += !pass;
    std::cout << "criterion " << cr.id << " " << (pass ? "PASS" : "FAIL") << " " << cr.title << " [" << tbuf << "] "
              << o.summary << std::endl;
  }
  std::cout << (failed ? "acceptance: " + std::to_string(failed) + " criterion(s) failed" : "acceptance: all passed")
            << std::endl;
  return failed ? 1 : 0;
}
