#include <catch_amalgamated.hpp>

#include "dkg/resonance.hpp"

using namespace dkg;
using Catch::Approx;

namespace {

bool in_band(double v, std::pair<double, double> b, double tol = 1e-9) {
  return v >= b.first * (1 - tol) - tol && v <= b.second * (1 + tol) + tol;
}

// independent check of a support witness against the original constraints
void check_witness(const SupportWitness& w, int k, int k1, int k2, int j, int j1, int j2, Sign s1, Sign s2) {
  const MassParams ms{1.0, 1.0};
  CHECK(in_band(w.xi1.norm(), tilde_support(k1)));
  CHECK(in_band(w.xi2.norm(), tilde_support(k2)));
  CHECK(in_band((w.xi2 - w.xi1).norm(), tilde_support(k)));
  const double a = w.tau1 + sgn(s1) * std::sqrt(1 + w.xi1.squaredNorm());
  const double b = w.tau2 + sgn(s2) * std::sqrt(1 + w.xi2.squaredNorm());
  const double c = w.tau2 - w.tau1 + std::sqrt(1 + (w.xi2 - w.xi1).squaredNorm());
  CHECK(in_band(std::abs(a), modulation_band(j1), 1e-7));
  CHECK(in_band(std::abs(b), modulation_band(j2), 1e-7));
  CHECK(in_band(std::abs(c), modulation_band(j), 1e-7));
  CHECK(std::abs(c - b + a - mu(s1, s2, w.xi1, w.xi2, ms)) <= 1e-9 * (1 + std::abs(w.mu)));
}

}  // namespace

TEST_CASE("resonance_function_values") {
  const MassParams ms{1.0, 1.5};
  CHECK(mu(Sign::minus, Sign::plus, Vec3::Zero(), Vec3::Zero(), ms) == Approx(1.5 - 2.0));
  CHECK(mu(Sign::plus, Sign::minus, Vec3::Zero(), Vec3::Zero(), ms) == Approx(1.5 + 2.0));
  CHECK(mu(Sign::plus, Sign::plus, Vec3::Zero(), Vec3::Zero(), ms) == Approx(1.5));
  const MassParams res{1.0, 2.0, true};
  CHECK(mu(Sign::minus, Sign::plus, Vec3::Zero(), Vec3::Zero(), res) == 0.0);

  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 a = random_log_vector(rng, 1e-2, 1e3), b = random_log_vector(rng, 1e-2, 1e3);
    for (int p = 0; p < 4; ++p) {
      const auto [s1, s2] = sign_pair(p);
      const double v = mu(s1, s2, a, b, ms);
      // relabelling symmetry mu^{s1,s2}(a,b) = mu^{-s2,-s1}(b,a)
      CHECK(v == Approx(mu(flip(s2), flip(s1), b, a, ms)).epsilon(1e-12).margin(1e-9));
      CHECK(v == Approx(mu_reduced(s1, s2, a.norm(), b.norm(), angle(a, b), ms)).epsilon(1e-10).margin(1e-8));
    }
  }
}

TEST_CASE("d_identity_residual_small_including_cancellation") {
  Rng rng(8);
  double worst = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const Vec3 a = random_log_vector(rng, 1e-4, 1e6);
    Vec3 b = random_log_vector(rng, 1e-4, 1e6);
    if (i % 2) b = a * (1.0 + 1e-6 * (i % 7));  // nearly equal radii
    worst = std::max({worst, check_d_identity(a, b, 1.0), check_d_identity(a, b, 0.3)});
  }
  CHECK(worst <= 1e-10);
  CHECK(check_d_identity(Vec3::Zero(), Vec3::Zero(), 1.0) <= 1e-15);
}

TEST_CASE("case_labels") {
  const MassParams ms{1.0, 1.0};
  const Vec3 x(0, 0, 5000), y(0, 0, 5000.5);
  CHECK(classify(Sign::plus, Sign::minus, x, y, ms) == ResonanceCase::c1a);
  CHECK(classify(Sign::minus, Sign::plus, x, y, ms) == ResonanceCase::c1b);
  CHECK(classify(Sign::minus, Sign::plus, x, -y, ms) == ResonanceCase::c2b);
  CHECK(classify(Sign::plus, Sign::plus, x, y, ms) == ResonanceCase::c2a);
  CHECK(classify(Sign::minus, Sign::minus, x, y, ms) == ResonanceCase::c2a);
  const auto s = evaluate_sample(Sign::plus, Sign::plus, x, y, ms);
  CHECK(std::isinf(s.ratio[static_cast<int>(Bound::high_mod)]));
  CHECK(std::isinf(s.ratio[static_cast<int>(Bound::mod_angle)]));  // collinear: zero angle
  CHECK(std::isfinite(s.ratio[static_cast<int>(Bound::non_res)]));
}

TEST_CASE("certify_bounds_nonresonant_masses") {
  CertifyOptions opt;
  opt.samples = 40000;
  opt.seed = 7;
  const auto rep = certify_bounds({1.0, 1.0}, opt);
  CHECK(rep.all_positive());
  const double nr = rep.overall[static_cast<int>(Bound::non_res)].infimum;
  CHECK(nr >= 0.1);

  // brute-force oracle on a dense reduced grid over the same radius range
  double brute = std::numeric_limits<double>::infinity();
  const int n = 160;
  for (int p = 0; p < 4; ++p) {
    const auto [s1, s2] = sign_pair(p);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int t = 0; t <= 40; ++t) {
          const double r1 = std::ldexp(1.0, -6) * std::pow(2.0, 18.0 * i / (n - 1));
          const double r2 = std::ldexp(1.0, -6) * std::pow(2.0, 18.0 * j / (n - 1));
          const double th = M_PI * t / 40.0;
          const double d = std::sqrt(std::max(0.0, r1 * r1 + r2 * r2 - 2 * r1 * r2 * std::cos(th)));
          const double v = std::abs(mu_reduced(s1, s2, r1, r2, th, {1.0, 1.0})) *
                           std::min({bracket(r1, 1.0), bracket(r2, 1.0), bracket(d, 1.0)});
          brute = std::min(brute, v);
        }
  }
  CHECK(nr <= brute * (1 + 1e-9));
  CHECK(nr >= 0.9 * brute);
}

TEST_CASE("certify_bounds_deterministic_across_thread_counts") {
  CertifyOptions a;
  a.samples = 5000;
  a.seed = 99;
  a.threads = 1;
  CertifyOptions b = a;
  b.threads = 4;
  const auto ra = certify_bounds({1.0, 1.0}, a), rb = certify_bounds({1.0, 1.0}, b);
  for (int k = 0; k < kBounds; ++k) CHECK(ra.overall[k].infimum == rb.overall[k].infimum);
}

TEST_CASE("certify_bounds_resonant_masses_find_exact_zero") {
  CertifyOptions opt;
  opt.samples = 2000;
  const auto rep = certify_bounds({1.0, 2.0, true}, opt);
  const auto& c = rep.per_pair[sign_pair_index(Sign::minus, Sign::plus)][static_cast<int>(Bound::non_res)];
  CHECK(c.infimum == 0.0);
  REQUIRE(c.worst);
  CHECK(c.worst->xi1.norm() == 0.0);
  CHECK(c.worst->xi2.norm() == 0.0);
  CHECK(c.worst->mu == 0.0);
  CHECK_FALSE(rep.all_positive());
  CHECK_THROWS_AS(certify_bounds({1.0, 2.0}, opt), std::invalid_argument);
}

TEST_CASE("certify_bounds_rejects_degenerate_sampler") {
  CertifyOptions opt;
  opt.samples = 100;
  opt.probes = false;
  PairSampler zeros = [](Rng&) { return std::make_pair(Vec3(Vec3::Zero()), Vec3(Vec3::Zero())); };
  CHECK_THROWS_AS(certify_bounds({1.0, 1.0}, opt, zeros), std::invalid_argument);
  PairSampler one_zero = [](Rng& r) { return std::make_pair(Vec3(Vec3::Zero()), random_direction(r)); };
  CHECK_THROWS_AS(certify_bounds({1.0, 1.0}, opt, one_zero), std::invalid_argument);
  opt.probes = true;
  CHECK_NOTHROW(certify_bounds({1.0, 1.0}, opt, zeros));
}

TEST_CASE("feasible_mu_set_intervals") {
  const auto F = feasible_mu_set(0, 0, 0);
  REQUIRE(F.size() == 8);
  auto contains = [&](double v) {
    for (const auto& iv : F)
      if (v >= iv.first && v <= iv.second) return true;
    return false;
  };
  CHECK(contains(0.0));    // 1 - 2 + 1
  CHECK(contains(12.0));   // all at the top
  CHECK(contains(-12.0));
  CHECK_FALSE(contains(12.5));
  const auto G = feasible_mu_set(-5, -5, -5);
  for (const auto& iv : G) CHECK(std::max(std::abs(iv.first), std::abs(iv.second)) <= 3 * std::ldexp(1.0, -3));
}

TEST_CASE("vanishing_hypothesis_i_and_case1_are_empty") {
  int checked = 0;
  for (int k : {0, 2, 5})
    for (int k1 : {0, 3, 6})
      for (int k2 : {0, 3, 6})
        for (int j : {-16, -12})
          for (int p = 0; p < 4; ++p) {
            const auto [s1, s2] = sign_pair(p);
            if (!vanishing_hypothesis_i(k, k1, k2, j, j - 1, j + 1)) continue;
            CHECK(vanishing_support_check(k, k1, k2, j, j - 1, j + 1, s1, s2).empty);
            ++checked;
          }
  CHECK(checked > 50);
  // case 1, opposite signs
  CHECK(vanishing_hypothesis_ii_case1(4, 8, 8, -3, -2, -4, Sign::plus, Sign::minus));
  CHECK(vanishing_support_check(4, 8, 8, -3, -2, -4, Sign::plus, Sign::minus).empty);
  CHECK(vanishing_hypothesis_ii_case1(2, 14, 14, 3, 2, 4, Sign::minus, Sign::plus));
  CHECK(vanishing_support_check(2, 14, 14, 3, 2, 4, Sign::minus, Sign::plus).empty);
}

TEST_CASE("vanishing_out_of_hypothesis_witnesses_are_valid") {
  int found = 0;
  for (int k : {0, 3, 6})
    for (int k1 : {2, 5})
      for (int k2 : {2, 5})
        for (int j : {0, 3, 6})
          for (int p = 0; p < 4; ++p) {
            const auto [s1, s2] = sign_pair(p);
            const auto r = vanishing_support_check(k, k1, k2, j, j, j, s1, s2);
            if (r.empty) continue;
            REQUIRE(r.witness);
            check_witness(*r.witness, k, k1, k2, j, j, j, s1, s2);
            ++found;
          }
  CHECK(found >= 10);
}

TEST_CASE("vanishing_consistent_with_certified_constant") {
  CertifyOptions opt;
  opt.samples = 20000;
  const double c = certify_bounds({1.0, 1.0}, opt).overall[static_cast<int>(Bound::non_res)].infimum;
  int predicted = 0;
  for (int k = 0; k <= 6; k += 2)
    for (int k1 = 0; k1 <= 6; k1 += 3)
      for (int k2 = 0; k2 <= 6; k2 += 3)
        for (int j = -14; j <= 0; j += 2) {
          const int kmin = std::min({k, k1, k2});
          // |mu| >= c / min<.> >= c / <2^{kmin+2}> on the supports; the feasible set is within 3 * 2^{j+2}
          if (3 * std::ldexp(1.0, j + 2) >= c / bracket(std::ldexp(1.0, kmin + 2), 1.0)) continue;
          ++predicted;
          for (int p = 0; p < 4; ++p) {
            const auto [s1, s2] = sign_pair(p);
            CHECK(vanishing_support_check(k, k1, k2, j, j, j, s1, s2).empty);
          }
        }
  CHECK(predicted > 20);
}

TEST_CASE("cap_check_preconditions_and_witness_geometry") {
  const Vec3 e3(0, 0, 1);
  const double R = 1.0 / 8.0;
  const Vec3 w_far(std::sin(5.5 * R), 0.0, std::cos(5.5 * R));
  CHECK_THROWS_AS(cap_vanishing_check(2, 8, 8, 3, e3, e3, 0, 0, 0, Sign::plus, Sign::plus), std::invalid_argument);
  CHECK_THROWS_AS(cap_vanishing_check(2, 1, 8, 12, e3, w_far, 0, 0, 0, Sign::plus, Sign::plus),
                  std::invalid_argument);
  CHECK_THROWS_AS(cap_vanishing_check(2, 8, 8, 0, e3, w_far, 0, 0, 0, Sign::plus, Sign::plus), std::invalid_argument);
  // opposite signs flip the second cap
  CHECK_NOTHROW(cap_vanishing_check(8, 8, 8, 3, e3, -w_far, 4, 4, 4, Sign::plus, Sign::minus));

  // large modulations: nonempty, with directions inside the widened caps
  const auto r = cap_vanishing_check(8, 8, 8, 3, e3, w_far, 6, 6, 6, Sign::plus, Sign::plus);
  REQUIRE_FALSE(r.empty);
  check_witness(*r.witness, 8, 8, 8, 6, 6, 6, Sign::plus, Sign::plus);
  CHECK(angle(r.witness->xi1, e3) <= 2 * R + 1e-9);
  CHECK(angle(r.witness->xi2, w_far) <= 2 * R + 1e-9);
}

TEST_CASE("cap_case2_small_modulation_empty_and_band_corner_witness") {
  const double R = 1.0 / 8.0;
  const Vec3 e3(0, 0, 1), w(std::sin(5 * R + 1e-9), 0.0, std::cos(5 * R + 1e-9));
  // typical in-hypothesis configuration
  REQUIRE(vanishing_hypothesis_ii_case2(8, 10, 10, 3, -4, -4, -4, Sign::plus, Sign::plus));
  CHECK(cap_vanishing_check(8, 10, 10, 3, e3, w, -4, -4, -4, Sign::plus, Sign::plus).empty);

  // at the corner of the widened bands the 2^-10 margin is too small by about a factor two:
  // radii at the lower band edge, angle exactly at the separation, |xi1 - xi2| near 4
  const double R5 = 1.0 / 32.0;
  const Vec3 w5(std::sin(5 * R5 + 1e-9), 0.0, std::cos(5 * R5 + 1e-9));
  REQUIRE(vanishing_hypothesis_ii_case2(0, 8, 8, 5, -4, -4, -4, Sign::plus, Sign::plus));
  const auto r = cap_vanishing_check(0, 8, 8, 5, e3, w5, -4, -4, -4, Sign::plus, Sign::plus);
  REQUIRE_FALSE(r.empty);
  check_witness(*r.witness, 0, 8, 8, -4, -4, -4, Sign::plus, Sign::plus);
  CHECK(angle(r.witness->xi1, r.witness->xi2) >= R5 * (1 - 1e-9));
}
