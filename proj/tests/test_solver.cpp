#include <catch_amalgamated.hpp>

#include "dkg/solver.hpp"

using namespace dkg;
using Catch::Approx;

namespace {

const MassParams kMasses{1.0, 1.0};

LatticePtr small_lattice() { return make_lattice(16, 8 * M_PI); }

DKGState small_data(double delta, std::uint64_t seed = 3) {
  DataParams p;
  p.delta = delta;
  p.seed = seed;
  return split_initial_data(make_initial_data(small_lattice(), p), kMasses);
}

double state_norm(const DKGState& s) {
  return std::sqrt(s.psi_p.norm_sq() + s.psi_m.norm_sq() + s.phi_p.norm_sq());
}

// plane wave with spinor in the range of Pi_+ at xi0 = dk * (a, b, c)
SpinorField projected_plane_wave(const LatticePtr& lat, int a, int b, int c, Sign s) {
  const Vec3 xi0 = lat->dk() * Vec3(a, b, c);
  Spinor v;
  v << cd(1.0, 0.5), cd(-0.3, 0.2), cd(0.7, 0.0), cd(0.1, -0.4);
  v = projector(s, kMasses.M, xi0) * v;
  return plane_wave<4>(lat, a, b, c, v);
}

}  // namespace

TEST_CASE("initial_data_normalized_and_deterministic") {
  auto lat = small_lattice();
  DataParams p;
  p.delta = 0.02;
  const auto a = make_initial_data(lat, p), b = make_initial_data(lat, p);
  const auto n = data_norms(a, p.eps);
  for (double v : n) CHECK(v == Approx(0.02).epsilon(1e-12));
  CHECK(l2_distance(a.psi, b.psi) == 0.0);
  double im = 0.0;
  for (std::size_t q = 0; q < a.phi.points(); ++q) im = std::max(im, std::abs(a.phi.at(0, q).imag()));
  CHECK(im <= 1e-12);
  p.delta = 0.0;
  const auto z = make_initial_data(lat, p);
  CHECK(z.psi.l2_norm() == 0.0);
  CHECK(z.phi_t.l2_norm() == 0.0);
  p.delta = -1.0;
  CHECK_THROWS_AS(make_initial_data(lat, p), std::invalid_argument);
}

TEST_CASE("split_initial_data_examples") {
  auto lat = small_lattice();
  SpinorField z4(lat);
  ScalarField z1(lat);
  const DKGState zero = split_initial_data(z4, z1, z1, kMasses);
  CHECK(state_norm(zero) == 0.0);

  const SpinorField pw = projected_plane_wave(lat, 2, -1, 3, Sign::plus);
  const DKGState s = split_initial_data(pw, z1, z1, kMasses);
  CHECK(s.psi_m.l2_norm() <= 1e-12 * pw.l2_norm());

  DataParams p;
  p.delta = 0.3;
  const SecondOrderState d = make_initial_data(lat, p);
  const DKGState u = split_initial_data(d, kMasses);
  const SecondOrderState r = reconstruct(u);
  CHECK(l2_distance(r.psi, d.psi) <= 1e-12 * d.psi.l2_norm());
  CHECK(l2_distance(r.phi, d.phi) <= 1e-12 * d.phi.l2_norm());
  CHECK(l2_distance(r.phi_t, d.phi_t) <= 1e-12 * d.phi_t.l2_norm());
  CHECK(projector_residual(u) <= 1e-12);

  auto other = make_lattice(8, 8 * M_PI);
  CHECK_THROWS_AS(split_initial_data(d.psi, ScalarField(other), d.phi_t, kMasses), std::invalid_argument);
}

TEST_CASE("rhs_examples") {
  auto lat = small_lattice();
  DKGSystem sys(lat, kMasses);
  const Derivative d0 = sys.rhs(sys.zero_state());
  CHECK(d0.dpsi_p.l2_norm() == 0.0);
  CHECK(d0.dphi_p.l2_norm() == 0.0);

  // phi_+ = 0 and a projected plane wave: dpsi_+ = -i <xi0> psi_+, source constant in x
  const int a = 1, b = 2, c = -2;
  const SpinorField pw = projected_plane_wave(lat, a, b, c, Sign::plus);
  DKGState s = split_initial_data(pw, ScalarField(lat), ScalarField(lat), kMasses);
  const Derivative d = sys.rhs(s);
  const double br = bracket(lat->dk() * Vec3(a, b, c), kMasses.M);
  SpinorField expect = s.psi_p;
  expect *= cd(0.0, -br);
  CHECK(l2_distance(d.dpsi_p, expect) <= 1e-12 * expect.l2_norm());
  CHECK(d.dpsi_m.l2_norm() <= 1e-12 * expect.l2_norm());
  // the plane wave's pairing psi^dagger beta psi is v^dagger beta v at every point
  Spinor v = pw.spinor(0);
  const double pairing = (v.adjoint() * beta() * v)(0, 0).real();
  const std::size_t N = lat->size();
  ScalarField dphi = d.dphi_p;
  CHECK(std::abs(dphi.at(0, 0) - cd(0.0, pairing * std::sqrt(double(N)) / kMasses.m)) <= 1e-10);
  dphi.at(0, 0) = 0.0;
  CHECK(dphi.l2_norm() <= 1e-12);
}

TEST_CASE("scalar_source_is_real") {
  DataParams p;
  p.delta = 1.0;
  const auto d = make_initial_data(small_lattice(), p);
  const ScalarField F = scalar_source(d.psi);
  for (std::size_t q = 0; q < F.points(); ++q) CHECK(F.at(0, q).imag() == 0.0);
}

TEST_CASE("step_free_evolution_exact_without_coupling") {
  auto lat = small_lattice();
  const SpinorField pw = projected_plane_wave(lat, 3, 0, -1, Sign::minus);
  DKGState s = split_initial_data(pw, ScalarField(lat), ScalarField(lat), kMasses);
  DKGSystem sys(lat, kMasses, false);
  const double br = bracket(lat->dk() * Vec3(3, 0, -1), kMasses.M);
  const double h = 0.05;
  for (int n = 1; n <= 20; ++n) {
    sys.step(s, h);
    SpinorField expect = pw.as(Rep::fourier);
    expect *= std::exp(cd(0.0, br * n * h));  // minus half-wave: e^{+it<xi>}
    CHECK(l2_distance(s.psi_m, expect) <= 1e-12 * pw.l2_norm() * n);
  }
  DKGState z = sys.zero_state();
  DKGSystem coupled(lat, kMasses);
  for (int n = 0; n < 10; ++n) coupled.step(z, 0.1);
  CHECK(state_norm(z) == 0.0);
  CHECK_THROWS_AS(coupled.step(z, 0.0), std::invalid_argument);
}

TEST_CASE("step_fourth_order_under_halving") {
  const DKGState u0 = small_data(0.01);
  std::vector<DKGState> r;
  for (double h : {0.1, 0.05, 0.025}) {
    SolveOptions o;
    o.T = 0.8;
    o.dt = h;
    o.output_every = 1000;
    r.push_back(solve(u0, o).states.back());
  }
  const double ratio = state_distance(r[0], r[1]) / state_distance(r[1], r[2]);
  CHECK(ratio >= 12.0);
  CHECK(ratio <= 20.0);
}

TEST_CASE("solve_zero_and_linear_mode") {
  auto lat = small_lattice();
  SolveOptions o;
  o.T = 10.0;
  o.dt = 0.1;
  o.output_every = 10;
  const Trajectory z = solve(small_data(0.0), o);
  for (const auto& s : z.states) CHECK(state_norm(s) == 0.0);

  const SpinorField pw = projected_plane_wave(lat, 1, 1, 0, Sign::plus);
  const DKGState s0 = split_initial_data(pw, ScalarField(lat), ScalarField(lat), kMasses);
  o.coupling = false;
  const Trajectory lin = solve(s0, o);
  const double br = bracket(lat->dk() * Vec3(1, 1, 0), kMasses.M);
  const std::size_t q0 = lat->linear(1, 1, 0);
  for (const auto& s : lin.states) {
    const cd expect = s0.psi_p.at(0, q0) * std::exp(cd(0.0, -br * s.t));
    CHECK(std::abs(s.psi_p.at(0, q0) - expect) <= 1e-10 * std::abs(expect));
  }
}

TEST_CASE("solve_invariants_small_data") {
  SolveOptions o;
  o.T = 2.0;
  o.dt = 0.01;
  o.output_every = 50;
  const Trajectory tr = solve(small_data(0.01), o);
  CHECK(tr.max_charge_drift() <= 1e-8);
  for (const auto& d : tr.diagnostics) CHECK(d.projector_residual <= 1e-9);
  for (const auto& s : tr.states) {
    const SecondOrderState r = reconstruct(s);
    for (std::size_t q = 0; q < r.phi.points(); ++q) REQUIRE(r.phi.at(0, q).imag() == 0.0);
  }
}

TEST_CASE("solve_time_reversal") {
  const DKGState u0 = small_data(0.01);
  SolveOptions o;
  o.T = 1.0;
  o.dt = 0.01;
  o.output_every = 1000;
  DKGState u1 = solve(u0, o).states.back();
  o.T = -1.0;
  o.dt = -0.01;
  const DKGState back = solve(u1, o).states.back();
  CHECK(relative_difference(back, u0) <= 1e-7);
}

TEST_CASE("solve_blowup_and_step_errors") {
  DKGState u = small_data(0.01);
  u.psi_p.at(0, 5) = cd(std::nan(""), 0.0);
  SolveOptions o;
  o.T = 0.1;
  o.dt = 0.01;
  CHECK_THROWS_AS(solve(u, o), BlowUpError);
  o.blowup_factor = 0.5;  // any step exceeds half the initial size
  CHECK_THROWS_AS(solve(small_data(0.01), o), BlowUpError);
  o.blowup_factor = 1e6;
  o.T = 0.105;
  CHECK_THROWS_AS(solve(small_data(0.01), o), std::invalid_argument);
}

TEST_CASE("reference_solver_examples") {
  auto lat = small_lattice();
  // single phi mode without coupling: phi(t) = cos(t <xi0>_m) phi0
  SecondOrderState s;
  s.psi = SpinorField(lat);
  s.phi = plane_wave<1>(lat, 2, 0, 0, Eigen::Matrix<cd, 1, 1>(1.0));
  ScalarField mirror = plane_wave<1>(lat, -2, 0, 0, Eigen::Matrix<cd, 1, 1>(1.0));
  s.phi += mirror;  // real cosine profile
  s.phi_t = ScalarField(lat);
  const auto out = solve_second_order_reference(s, kMasses, 2.0, 0.01, 50, false);
  const double w = bracket(lat->dk() * Vec3(2, 0, 0), kMasses.m);
  for (const auto& o : out) {
    ScalarField expect = s.phi;
    expect *= std::cos(o.t * w);
    CHECK(l2_distance(o.phi, expect) <= 1e-8 * s.phi.l2_norm());
  }
  // zero data
  SecondOrderState z{0.0, SpinorField(lat), ScalarField(lat), ScalarField(lat)};
  for (const auto& o : solve_second_order_reference(z, kMasses, 0.5, 0.01, 10)) {
    CHECK(o.psi.l2_norm() == 0.0);
    CHECK(o.phi.l2_norm() == 0.0);
  }
  CHECK_THROWS_AS(solve_second_order_reference(z, kMasses, 1.0, 1.0, 1), std::invalid_argument);
}

TEST_CASE("reference_solver_agrees_with_interaction_picture") {
  DataParams p;
  p.delta = 0.01;
  const SecondOrderState d = make_initial_data(small_lattice(), p);
  SolveOptions o;
  o.T = 0.5;
  o.dt = 1e-3;
  o.output_every = 250;
  const Trajectory tr = solve(d, kMasses, o);
  const auto ref = solve_second_order_reference(d, kMasses, o.T, o.dt, o.output_every);
  REQUIRE(ref.size() == tr.states.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    CHECK(ref[i].t == Approx(tr.states[i].t));
    CHECK(relative_difference(tr.states[i], split_initial_data(ref[i], kMasses)) <= 1e-6);
  }
  // real-valued scalar field in the reference
  double im = 0.0;
  for (std::size_t q = 0; q < ref.back().phi.points(); ++q)
    im = std::max({im, std::abs(ref.back().phi.at(0, q).imag()), std::abs(ref.back().phi_t.at(0, q).imag())});
  CHECK(im <= 1e-12);
}

TEST_CASE("picard_iteration") {
  PicardOptions po;
  po.T = 5.0;
  po.nt = 25;
  po.n_iter = 5;
  const PicardResult z = picard_iterate(small_data(0.0), po);
  for (double d : z.distances) CHECK(d == 0.0);

  const PicardResult r = picard_iterate(small_data(0.01), po);
  CHECK_FALSE(r.diverged);
  REQUIRE(r.ratios.size() == 4);
  for (std::size_t i = 1; i < r.ratios.size(); ++i) CHECK(r.ratios[i] <= 0.5);

  po.n_iter = 8;
  const PicardResult big = picard_iterate(small_data(10.0), po);
  CHECK(big.diverged);
  CHECK_FALSE(big.message.empty());
  CHECK(big.ratios.front() > 1.0);
}

TEST_CASE("scattering_profile") {
  const DKGState u0 = small_data(0.01);
  const double L = u0.lattice().box_length();
  SolveOptions o;
  o.T = 0.95 * L / 4;
  o.dt = o.T / 256;
  o.output_every = 8;
  o.coupling = false;
  const auto lin = scattering_profile(solve(u0, o).states);
  for (double d : lin.pullback_drift) CHECK(d <= 1e-12);
  CHECK_FALSE(lin.wrap_warning);
  CHECK(lin.dyadic_times.size() >= 4);

  const auto zero = scattering_profile(solve(small_data(0.0), o).states);
  for (double d : zero.cauchy) CHECK(d == 0.0);
  CHECK(zero.two_variation == 0.0);

  o.coupling = true;
  const auto sp = scattering_profile(solve(u0, o).states);
  REQUIRE(sp.cauchy.size() >= 3);
  const std::size_t n = sp.cauchy.size();
  CHECK(sp.cauchy[n - 1] < sp.cauchy[n - 2]);

  o.T = 0.3 * L;
  o.dt = o.T / 16;
  o.output_every = 4;
  CHECK(scattering_profile(solve(u0, o).states).wrap_warning);
}
