#include <catch_amalgamated.hpp>

#include "dkg/decomposition.hpp"
#include "dkg/random.hpp"

using namespace dkg;
using Catch::Approx;

namespace {

template <int NC>
Field<NC> random_field(LatticePtr lat, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Field<NC> f(lat);
  for (cd& v : f.raw()) v = cd(g(rng), g(rng));
  return f;
}

}  // namespace

TEST_CASE("rho0_examples") {
  const Rho0 r = build_rho0();
  CHECK(r(0.5) == 1.0);
  CHECK(r(1.0) == 1.0);
  CHECK(r(2.5) == 0.0);
  CHECK(r(2.0) == 0.0);
  CHECK(r(1.5) > 0.0);
  CHECK(r(1.5) < 1.0);
  CHECK(r(1.5) == Approx(0.5));
  CHECK(r(-1.5) == r(1.5));
  CHECK(r(-1.3) == r(1.3));
  for (int i = 0; i <= 400; ++i) {
    const double s = 3.0 * i / 400.0;
    CHECK(r(s) >= 0.0);
    CHECK(r(s) <= 1.0);
  }
  CHECK_THROWS(build_rho0([](double x) { return x * x; }));
  CHECK_NOTHROW(build_rho0([](double x) { return std::clamp(x, 0.0, 1.0); }));
}

TEST_CASE("shell_symbols_supports_and_telescoping") {
  for (int k = 1; k <= 8; ++k)
    for (int i = 0; i <= 2000; ++i) {
      const double r = std::ldexp(1.0, k + 2) * i / 2000.0;
      const double v = lp_symbol(k, r);
      if (r < std::ldexp(1.0, k - 1) || r > std::ldexp(1.0, k + 1)) CHECK(v == 0.0);
      CHECK(v >= 0.0);
      const auto [lo, hi] = tilde_support(k);
      if (r < lo || r > hi) CHECK(lp_tilde_symbol(k, r) == 0.0);
      if (lp_symbol(k, r) > 0.0) CHECK(lp_tilde_symbol(k, r) == Approx(1.0).margin(1e-15));
    }
  // partition of unity pointwise
  for (int i = 0; i <= 5000; ++i) {
    const double r = 600.0 * i / 5000.0;
    double s = 0.0;
    for (int k = 0; k <= 12; ++k) s += lp_symbol(k, r);
    CHECK(s == Approx(1.0).margin(1e-12));
  }
  // a mode at |xi| = 2^k is shared with a neighbor
  const double r = 8.0;
  CHECK(lp_symbol(3, r) + lp_symbol(2, r) + lp_symbol(4, r) == Approx(1.0).margin(1e-15));
  CHECK(lp_symbol(3, r) >= 0.0);
  CHECK(lp_symbol(3, r) <= 1.0);
  CHECK_THROWS(lp_symbol(-1, 1.0));
}

TEST_CASE("littlewood_paley_on_fields") {
  auto lat = make_lattice(16, 2.0 * M_PI);
  const SpinorField f = random_field<4>(lat, 1);
  SpinorField sum(lat);
  const int kmax = lp_top_index(*lat);
  for (int k = 0; k <= kmax; ++k) {
    const SpinorField pk = littlewood_paley(f, k);
    sum += pk;
    // energy outside the widened support
    const SpinorField pkf = pk.as(Rep::fourier);
    const auto [lo, hi] = tilde_support(k);
    double out = 0.0;
    for (std::size_t q = 0; q < lat->size(); ++q) {
      const double rr = lat->xi(q).norm();
      if (rr < lo || rr > hi)
        for (int c = 0; c < 4; ++c) out += std::norm(pkf.at(c, q));
    }
    CHECK(out * lat->cell_volume() <= 1e-12 * f.norm_sq());
  }
  CHECK(l2_distance(sum, f) <= 1e-12 * f.l2_norm());

  // low-frequency data is untouched by P_0
  Eigen::Matrix<cd, 1, 1> one;
  one(0) = 1.0;
  const ScalarField w = plane_wave<1>(lat, 1, 0, 0, one) + plane_wave<1>(lat, 0, 0, 0, one);
  CHECK(l2_distance(littlewood_paley(w, 0), w) <= 1e-12 * w.l2_norm());
}

TEST_CASE("cube_partition_and_orthogonality") {
  // 1D translates sum to one
  for (int i = 0; i <= 3000; ++i) {
    const double x = -3.0 + 6.0 * i / 3000.0;
    double s = 0.0;
    for (int n = -5; n <= 5; ++n) s += cube_bump_1d(x - n);
    CHECK(s == Approx(1.0).margin(1e-15));
  }
  auto lat = make_lattice(16, 2.0 * M_PI);
  const ScalarField f = random_field<1>(lat, 2);
  for (int kp : {0, 1, 2, 3}) {
    ScalarField sum(lat);
    double sq = 0.0;
    for (const auto& m : cubes_on_lattice(*lat, kp)) {
      const ScalarField g = cube_project(f, kp, m);
      sum += g;
      sq += g.norm_sq();
    }
    CHECK(l2_distance(sum, f) <= 1e-12 * f.l2_norm());
    CHECK(sq <= f.norm_sq() * (1.0 + 1e-12));
    CHECK(sq >= f.norm_sq() / 8.0);
  }
  // cube center has weight 1, a near-corner mode splits over 8 cubes
  const Vec3 n(8.0, -4.0, 12.0);
  const CubeIndex m = cube_index(2, n);
  CHECK(cube_symbol(2, m, n) == 1.0);
  const Vec3 corner = n + Vec3(2.0, 2.0, 2.0);
  int nonzero = 0;
  double tot = 0.0;
  for (int a = -1; a <= 2; ++a)
    for (int b = -1; b <= 2; ++b)
      for (int c = -1; c <= 2; ++c) {
        const double v = cube_symbol(2, {m[0] + a, m[1] + b, m[2] + c}, corner);
        if (v > 0.0) ++nonzero;
        tot += v;
      }
  CHECK(nonzero == 8);
  CHECK(tot == Approx(1.0).margin(1e-15));
  CHECK_THROWS(cube_index(2, Vec3(1.0, 0.0, 0.0)));
}

TEST_CASE("cap_cover_construction") {
  CHECK_THROWS(build_cap_cover(0));
  const CapCover c1 = build_cap_cover(1);
  CHECK(c1.size() >= 6);
  CHECK(c1.size() <= 50);
  for (int l = 1; l <= 4; ++l) {
    const CapCover c = build_cap_cover(l);
    CHECK(c.support_radius() <= 2.0 * c.radius());
    CHECK(c.covering_radius() <= c.radius());
    Rng rng(100 + l);
    int lo = 100, hi = 0, slo = 100, shi = 0;
    for (int i = 0; i < 20000; ++i) {
      const Vec3 w = random_direction(rng);
      lo = std::min(lo, c.geometric_overlap(w));
      hi = std::max(hi, c.geometric_overlap(w));
      slo = std::min(slo, c.support_overlap(w));
      shi = std::max(shi, c.support_overlap(w));
      double s = 0.0;
      for (const auto& kv : c.active(w)) {
        s += c.eta(kv.first, w);
        CHECK(angle(c.center(kv.first), w) <= 2.0 * c.radius());
      }
      CHECK(s == Approx(1.0).margin(1e-12));
    }
    CHECK(lo >= 1);
    CHECK(hi <= 8);
    CHECK(slo >= 1);
    CHECK(shi <= 8);
    // weight one along every center
    for (std::size_t i = 0; i < c.size(); i += 7) CHECK(c.eta(i, 3.0 * c.center(i)) == Approx(1.0).margin(1e-15));
  }
}

TEST_CASE("cap_projection_resummation") {
  auto lat = make_lattice(16, 2.0 * M_PI);
  const SpinorField f = random_field<4>(lat, 3);
  const CapCover c0(0);
  CHECK(l2_distance(cap_project(f, c0, 0), f) == 0.0);
  for (int l = 1; l <= 2; ++l) {
    const CapCover c(l);
    SpinorField sum(lat);
    for (std::size_t k = 0; k < c.size(); ++k) sum += cap_project(f, c, k);
    CHECK(l2_distance(sum, f) <= 1e-12 * f.l2_norm());
  }
  // cube and cap projections commute
  const CapCover c(2);
  const SpinorField a = cap_project(cube_project(f, 1, CubeIndex{1, 0, -1}), c, 5);
  const SpinorField b = cube_project(cap_project(f, c, 5), 1, CubeIndex{1, 0, -1});
  CHECK(l2_distance(a, b) <= 1e-12 * f.l2_norm());
}

TEST_CASE("space_time_fft_round_trip") {
  auto lat = make_lattice(8, 2.0 * M_PI);
  SpaceTimeField<1> st(lat, 16, 4.0);
  Rng rng(4);
  std::normal_distribution<double> g;
  for (int i = 0; i < st.nt(); ++i)
    for (cd& v : st.slice(i).raw()) v = cd(g(rng), g(rng));
  const SpaceTimeField<1> orig = st;
  const double n0 = st.l2_norm();
  st.to_fourier();
  CHECK(st.l2_norm() == Approx(n0).epsilon(1e-12));
  CHECK_THROWS(st.to_fourier());
  st.to_physical();
  double d = 0.0;
  for (int i = 0; i < st.nt(); ++i) d += std::pow(l2_distance(st.slice(i), orig.slice(i)), 2);
  CHECK(std::sqrt(d) <= 1e-10 * n0);
}

TEST_CASE("modulation_projection") {
  auto lat = make_lattice(8, 2.0 * M_PI);
  const int nt = 64;
  const double T = 8.0 * M_PI;  // dtau = 1/4
  const int a = 1, b = 2, c = 0;
  const Vec3 xi0 = lat->dk() * Vec3(a, b, c);
  const double w0 = bracket(xi0, 1.0);

  // tau0 + <xi0> = 2^j0 exactly on the grid: tau0 = -<xi0> + 2 is not a grid
  // point in general, so use a grid tau and a mass chosen to hit 2^j0.
  const int j0 = 1;
  const int mtau = -12;  // tau = -3
  const double tau0 = mtau * 2.0 * M_PI / T;
  const double mass = std::sqrt(std::pow(std::ldexp(1.0, j0) - tau0, 2) - xi0.squaredNorm());
  SpaceTimeField<1> st(lat, nt, T);
  Eigen::Matrix<cd, 1, 1> one;
  one(0) = 1.0;
  const ScalarField wave = plane_wave<1>(lat, a, b, c, one);
  for (int i = 0; i < nt; ++i) st.slice(i) = std::exp(cd(0.0, tau0 * st.time(i))) * wave;
  const auto q = modulation_project(st, Sign::plus, mass, j0);
  double err = 0.0;
  for (int i = 0; i < nt; ++i) err = std::max(err, l2_distance(q.slice(i), st.slice(i)));
  CHECK(err <= 1e-10 * wave.l2_norm());

  // resummation over the resolved range with the low lump
  Rng rng(6);
  std::normal_distribution<double> g;
  SpaceTimeField<1> r(lat, 32, T);
  for (int i = 0; i < r.nt(); ++i)
    for (cd& v : r.slice(i).raw()) v = cd(g(rng), g(rng));
  const int jlo = lowest_resolvable_j(T);
  SpaceTimeField<1> sum = modulation_project(r, Sign::minus, 1.0, ModulationRange::le(jlo));
  for (int j = jlo + 1; j <= 8; ++j) sum += modulation_project(r, Sign::minus, 1.0, j);
  double d = 0.0;
  for (int i = 0; i < r.nt(); ++i) d += std::pow(l2_distance(sum.slice(i), r.slice(i)), 2);
  CHECK(std::sqrt(d * r.dt()) <= 1e-10 * r.l2_norm());

  // free wave carries no modulation above the resolution floor
  SpaceTimeField<1> fw(lat, nt, T);
  const double tt = 2.0 * M_PI / T;
  const double wgrid = std::round(w0 / tt) * tt;  // snap to the time grid
  for (int i = 0; i < nt; ++i) fw.slice(i) = std::exp(cd(0.0, -wgrid * fw.time(i))) * wave;
  const double massg = std::sqrt(wgrid * wgrid - xi0.squaredNorm());
  for (int j = jlo + 1; j <= 6; ++j) CHECK(modulation_project(fw, Sign::plus, massg, j).l2_norm() <= 1e-10);

  CHECK_THROWS_AS(modulation_project(r, Sign::plus, 1.0, jlo - 1), std::invalid_argument);
}
