#include <catch_amalgamated.hpp>

#include <filesystem>

#include "dkg/field.hpp"
#include "dkg/field_io.hpp"
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

TEST_CASE("mass_params_validation") {
  CHECK_NOTHROW(MassParams(1.0, 1.0));
  CHECK_NOTHROW(MassParams(1.0, 1.999));
  CHECK_THROWS_WITH(MassParams(1.0, 2.0), Catch::Matchers::ContainsSubstring("2M > m > 0"));
  CHECK_THROWS(MassParams(1.0, 0.0));
  CHECK_NOTHROW(MassParams(1.0, 2.0, true));
  CHECK_THROWS(MassParams(-1.0, 1.0, true));
}

TEST_CASE("lattice_frequencies_and_brackets") {
  FrequencyLattice lat(8, 2.0 * M_PI);
  CHECK(lat.dk() == Approx(1.0));
  CHECK(lat.freq_index(3) == 3);
  CHECK(lat.freq_index(4) == -4);
  CHECK(lat.freq_index(7) == -1);
  // symmetric up to the single Nyquist index
  int neg = 0, pos = 0;
  for (int i = 0; i < 8; ++i) (lat.freq_index(i) < 0 ? neg : pos) += 1;
  CHECK(neg == 4);
  CHECK(pos == 4);
  const auto t = lat.bracket_table(1.3);
  for (std::size_t q = 0; q < lat.size(); ++q) {
    const double r = lat.xi(q).norm();
    CHECK(t[q] >= std::max(1.3, r));
    CHECK(t[q] * t[q] == Approx(1.69 + r * r).epsilon(1e-12));
  }
  CHECK_THROWS(FrequencyLattice(12, 1.0));
  CHECK_THROWS(FrequencyLattice(8, 0.0));
}

TEST_CASE("fft_constant_and_single_mode") {
  auto lat = make_lattice(16, 2.0 * M_PI);
  ScalarField f(lat);
  for (cd& v : f.raw()) v = 2.0;
  f.fft_forward();
  CHECK(std::abs(f.at(0, 0) - cd(2.0 * std::sqrt(4096.0), 0)) <= 1e-10);
  double rest = 0.0;
  for (std::size_t q = 1; q < f.points(); ++q) rest = std::max(rest, std::abs(f.at(0, q)));
  CHECK(rest <= 1e-10);

  Eigen::Matrix<cd, 1, 1> one;
  one(0) = 1.0;
  ScalarField w = plane_wave<1>(lat, 3, -2, 5, one);
  w.fft_forward();
  const std::size_t q0 = lat->linear(3, lat->wrap(-2), 5);
  CHECK(std::abs(w.at(0, q0)) == Approx(std::sqrt(4096.0)).epsilon(1e-12));
  double off = 0.0;
  for (std::size_t q = 0; q < w.points(); ++q)
    if (q != q0) off = std::max(off, std::abs(w.at(0, q)));
  CHECK(off <= 1e-9);
}

TEST_CASE("fft_round_trip_and_parseval") {
  auto lat = make_lattice(16, 3.0);
  SpinorField f = random_field<4>(lat, 1);
  const SpinorField orig = f;
  const double n0 = f.l2_norm();
  f.fft_forward();
  CHECK(f.l2_norm() == Approx(n0).epsilon(1e-10));
  CHECK_THROWS_AS(f.fft_forward(), std::logic_error);
  f.fft_inverse();
  CHECK_THROWS_AS(f.fft_inverse(), std::logic_error);
  CHECK(l2_distance(f, orig) <= 1e-10 * n0);
}

TEST_CASE("scalar_multiplier_examples") {
  auto lat = make_lattice(16, 2.0 * M_PI);
  ScalarField f = random_field<1>(lat, 2);
  const ScalarField id = apply_scalar_multiplier(f, [](const Vec3&) { return 1.0; });
  CHECK(l2_distance(id, f) <= 1e-12 * f.l2_norm());

  Eigen::Matrix<cd, 1, 1> one;
  one(0) = 1.0;
  const ScalarField w = plane_wave<1>(lat, 1, 2, -3, one);
  const ScalarField dw = apply_scalar_multiplier(w, [](const Vec3& xi) { return bracket(xi, 2.0); });
  const double expect = std::sqrt(4.0 + 14.0);
  CHECK(l2_distance(dw, expect * w) <= 1e-11 * dw.l2_norm());

  // composition is the product of symbols
  auto a = [](const Vec3& xi) { return cd(std::cos(xi(0)), xi(1)); };
  auto b = [](const Vec3& xi) { return cd(1.0 / bracket(xi, 1.0), 0.0); };
  const ScalarField ab1 = apply_scalar_multiplier(apply_scalar_multiplier(f, a), b);
  const ScalarField ab2 = apply_scalar_multiplier(f, [&](const Vec3& xi) { return a(xi) * b(xi); });
  CHECK(l2_distance(ab1, ab2) <= 1e-12 * ab1.l2_norm());
}

TEST_CASE("real_input_even_symbol_stays_real") {
  auto lat = make_lattice(16, 5.0);
  ScalarField f = random_field<1>(lat, 4);
  for (cd& v : f.raw()) v = v.real();
  mask_nyquist(f);
  for (cd& v : f.raw()) v = v.real();
  const ScalarField g = apply_scalar_multiplier(f, [](const Vec3& xi) { return 1.0 / bracket(xi, 1.0); });
  double im = 0.0;
  for (const cd& v : g.raw()) im = std::max(im, std::abs(v.imag()));
  CHECK(im <= 1e-12);
}

TEST_CASE("matrix_multiplier_projectors") {
  auto lat = make_lattice(8, 4.0);
  SpinorField f = random_field<4>(lat, 3);
  const auto pp = projector_table(*lat, Sign::plus, 1.0);
  const auto pm = projector_table(*lat, Sign::minus, 1.0);
  SpinorField a = f, b = f;
  apply_matrix_table(a, pp);
  apply_matrix_table(b, pm);
  CHECK(l2_distance(a + b, f) <= 1e-12 * f.l2_norm());
  SpinorField aa = a;
  apply_matrix_table(aa, pp);
  CHECK(l2_distance(aa, a) <= 1e-12 * a.l2_norm());

  Rng rng(9);
  const Spinor v = random_spinor(rng);
  const SpinorField w = plane_wave<4>(lat, 1, 0, -1, v);
  const SpinorField pw = apply_matrix_multiplier(w, [](const Vec3& xi) { return projector(Sign::plus, 1.0, xi); });
  const Vec3 xi0 = lat->dk() * Vec3(1, 0, -1);
  const SpinorField expect = plane_wave<4>(lat, 1, 0, -1, Spinor(projector(Sign::plus, 1.0, xi0) * v));
  CHECK(l2_distance(pw, expect) <= 1e-12 * w.l2_norm());
}

TEST_CASE("snapshot_round_trip") {
  auto lat = make_lattice(8, 7.0);
  SpinorField f = random_field<4>(lat, 8);
  f.fft_forward();
  const auto dir = std::filesystem::temp_directory_path() / "dkg_snapshot_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "psi.bin").string();
  write_snapshot(path, f, {{"t", 0.5}});
  const SpinorField g = read_snapshot<4>(path);
  CHECK(g.rep() == Rep::fourier);
  CHECK(g.lattice() == f.lattice());
  CHECK(l2_distance(g, f) == 0.0);
  CHECK(std::filesystem::exists(path + ".json"));
  CHECK_THROWS(read_snapshot<1>(path));
  write_spectrum_csv((dir / "spec.csv").string(), f);
  const auto e = radial_spectrum(f);
  double tot = 0.0;
  for (double x : e) tot += x;
  CHECK(tot == Approx(f.norm_sq()).epsilon(1e-12));
}
