#include <catch_amalgamated.hpp>

#include "dkg/dirac_algebra.hpp"
#include "dkg/random.hpp"

using namespace dkg;
using Catch::Approx;

TEST_CASE("gamma_matrices_match_block_formulas") {
  const Mat4 g0 = gamma(0);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK(g0(i, j) == cd(i == j ? (i < 2 ? 1.0 : -1.0) : 0.0));

  const Mat4 g1sq = gamma(1) * gamma(1);
  CHECK(max_abs(g1sq + Mat4::Identity()) == 0.0);

  const Mat4 g2 = gamma(2);
  CHECK(g2(0, 3) == cd(0.0, -1.0));
  CHECK(g2(1, 2) == cd(0.0, 1.0));
  CHECK(g2(0, 2) == cd(0.0, 0.0));
  CHECK(g2(2, 1) == cd(0.0, 1.0));  // -sigma^2 in the lower-left block

  CHECK_THROWS_AS(gamma(4), std::out_of_range);
  CHECK_THROWS_AS(gamma(-1), std::out_of_range);
  CHECK_THROWS_AS(alpha(0), std::out_of_range);
}

TEST_CASE("clifford_and_alpha_beta_relations_exact") {
  CHECK(check_clifford() == 0.0);
  CHECK(check_alpha_beta() == 0.0);
  const Mat4 g00 = gamma(0) * gamma(0) + gamma(0) * gamma(0);
  CHECK(max_abs(g00 - 2.0 * Mat4::Identity()) == 0.0);
  CHECK(max_abs(gamma(1) * gamma(2) + gamma(2) * gamma(1)) == 0.0);
  CHECK(max_abs(alpha(1) * alpha(1) - Mat4::Identity()) == 0.0);
  CHECK(max_abs(alpha(1) * alpha(2) + alpha(2) * alpha(1)) == 0.0);
}

TEST_CASE("hermitian_and_unitary_helpers_match_definition") {
  for (int j = 1; j <= 3; ++j) {
    CHECK(is_hermitian(alpha(j)));
    CHECK(is_unitary(alpha(j)));
  }
  CHECK(is_hermitian(beta()));
  CHECK_FALSE(is_hermitian(gamma(1)));  // anti-Hermitian
  Mat4 a = Mat4::Identity();
  a(0, 1) = cd(0.0, 1e-13);
  CHECK_FALSE(is_hermitian(a));
  CHECK_FALSE(is_unitary(2.0 * Mat4::Identity()));
}

TEST_CASE("projector_examples") {
  const Mat4 p0 = projector(Sign::plus, 1.0, Vec3::Zero());
  Mat4 expect = Mat4::Zero();
  expect(0, 0) = expect(1, 1) = 1.0;
  CHECK(max_abs(p0 - expect) == 0.0);

  const Mat4 p = projector(Sign::plus, 1.0, Vec3(1, 0, 0));
  CHECK(max_abs(p * p - p) <= 1e-14);

  // direct oracle: <xi>^2 I = (xi.alpha + M beta)^2
  const Vec3 xi(0.3, -1.7, 2.2);
  const Mat4 h = dirac_symbol(xi, 0.8);
  CHECK(max_abs(h * h - bracket(xi, 0.8) * bracket(xi, 0.8) * Mat4::Identity()) <= 1e-13);

  CHECK_THROWS_AS(projector(Sign::plus, -1.0, xi), std::invalid_argument);
  // degenerate massless zero frequency
  CHECK(max_abs(projector(Sign::minus, 0.0, Vec3::Zero()) - 0.5 * Mat4::Identity()) == 0.0);
}

TEST_CASE("projector_properties_random_frequencies") {
  Rng rng(11);
  double worst = 0.0, herm = 0.0, comm = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Vec3 xi = random_log_vector(rng, 1e-3, 1e4);
    const double M = (i % 3 == 0) ? 0.0 : 1.0 + 0.5 * (i % 5);
    const Mat4 pp = projector(Sign::plus, M, xi), pm = projector(Sign::minus, M, xi);
    worst = std::max({worst, max_abs(pp + pm - Mat4::Identity()), max_abs(pp * pp - pp),
                      max_abs(pm * pm - pm), max_abs(pp * pm)});
    herm = std::max(herm, max_abs(pp - pp.adjoint()));
    comm = std::max({comm, commutation_residual(Sign::plus, M, xi),
                     commutation_residual(Sign::minus, M, xi)});
  }
  CHECK(worst <= 1e-13);
  CHECK(herm <= 1e-14);
  CHECK(comm <= 1e-13);
  CHECK(commutation_residual(Sign::plus, 1.0, Vec3::Zero()) <= 1e-15);
}

TEST_CASE("massless_null_structure_collinear") {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const Vec3 xi = random_log_vector(rng, 1e-2, 1e3);
    const double lambda = std::exp(std::uniform_real_distribution<double>(-5, 5)(rng));
    CHECK(null_product_norm(Sign::minus, Sign::plus, 0.0, xi, lambda * xi) <= 1e-13);
    CHECK(null_product_norm(Sign::plus, Sign::plus, 0.0, xi, -lambda * xi) <= 1e-13);
  }
  const Vec3 xi(1.0, 2.0, 3.0);
  CHECK(null_product_norm(Sign::plus, Sign::plus, 1.0, xi, xi) == Approx(1.0).epsilon(1e-13));
  CHECK_THROWS_AS(null_product_envelope(Sign::plus, Sign::minus, Vec3::Zero(), xi), std::invalid_argument);
}

TEST_CASE("angle_accurate_near_zero_and_pi") {
  const Vec3 a(1, 0, 0);
  const Vec3 b(1, 1e-9, 0);
  CHECK(angle(a, b) == Approx(1e-9).epsilon(1e-6));
  CHECK(angle(a, -b) == Approx(M_PI - 1e-9).epsilon(1e-15));
}

TEST_CASE("fitted_null_constant_stable_under_sweep_refinement") {
  for (Sign s1 : {Sign::plus, Sign::minus})
    for (Sign s2 : {Sign::plus, Sign::minus})
      for (int k = 0; k <= 8; ++k) {
        const double coarse = fit_null_constant(s1, s2, 1.0, k, 500);
        const double fine = fit_null_constant(s1, s2, 1.0, k, 4000);
        CHECK(fine <= 4.0);
        CHECK(fine > 0.0);
        CHECK(std::abs(coarse / fine - 1.0) <= 0.2);
      }
  // same signs saturate at 1/2 at every scale; opposite signs approach 1/2 from below
  CHECK(fit_null_constant(Sign::plus, Sign::plus, 1.0, 4, 2000) == Approx(0.5).epsilon(1e-3));
  double prev = 0.0;
  for (int k = 0; k <= 8; ++k) {
    const double c = fit_null_constant(Sign::plus, Sign::minus, 1.0, k, 2000);
    CHECK(c > prev);
    CHECK(c < 0.5);
    prev = c;
  }
}

TEST_CASE("cap_bilinear_bound_precondition_and_decay") {
  const Vec3 e3(0, 0, 1);
  // aligned after sign flip: s1 w1 = s2 w2
  for (int l = 1; l <= 10; ++l) {
    const double v = cap_bilinear_bound(Sign::plus, Sign::minus, 10, 10, l, e3, -e3);
    CHECK(v <= 8.0 * std::ldexp(1.0, -l));
    const double w = cap_bilinear_bound(Sign::plus, Sign::plus, 10, 10, l, e3, e3);
    CHECK(w <= 8.0 * std::ldexp(1.0, -l));
  }
  // tilt by exactly the allowed distance
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const int l = 1 + static_cast<int>(rng() % 8);
    const Vec3 w1 = random_direction(rng);
    Vec3 perp = w1.cross(random_direction(rng)).normalized();
    const double th = std::ldexp(1.0, -l) * std::uniform_real_distribution<double>(0, 1)(rng);
    const Vec3 w2 = std::cos(th) * w1 + std::sin(th) * perp;
    CHECK(cap_bilinear_bound(Sign::minus, Sign::minus, 9, 10, l, w1, w2) <= 8.0 * std::ldexp(1.0, -l));
  }
  CHECK_THROWS_AS(cap_bilinear_bound(Sign::plus, Sign::minus, 10, 10, 1, e3, e3), std::invalid_argument);
  CHECK_THROWS_AS(cap_bilinear_bound(Sign::plus, Sign::plus, 2, 10, 13, e3, e3), std::invalid_argument);
  CHECK_THROWS_AS(cap_bilinear_bound(Sign::plus, Sign::plus, 2, 10, 0, e3, e3), std::invalid_argument);
}

TEST_CASE("massless_cap_bound_reduces_to_exact_null_form") {
  // M = 0, s1 w1 = s2 w2: Pi_- beta Pi_+ type product vanishes identically
  const Vec3 e1(1, 0, 0);
  CHECK(cap_bilinear_bound(Sign::plus, Sign::plus, 6, 6, 3, e1, e1, 0.0) <= 1e-13);
  CHECK(cap_bilinear_bound(Sign::plus, Sign::minus, 6, 6, 3, e1, -e1, 0.0) <= 1e-13);
  // with mass the residual is the 2^-k commutator term
  const double v = cap_bilinear_bound(Sign::plus, Sign::plus, 6, 6, 3, e1, e1, 1.0);
  CHECK(v == Approx(1.0 / bracket(64.0, 1.0)).epsilon(1e-12));
}
