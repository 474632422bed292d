#pragma once

// Dense 4x4 Dirac/Pauli algebra, spinor projector symbols and the
// bilinear product bounds they satisfy.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>

#include <Eigen/Dense>

namespace dkg {

using cd = std::complex<double>;
using Mat4 = Eigen::Matrix<cd, 4, 4>;
using Mat2 = Eigen::Matrix<cd, 2, 2>;
using Vec3 = Eigen::Vector3d;
using Spinor = Eigen::Matrix<cd, 4, 1>;

enum class Sign : int { plus = 1, minus = -1 };

constexpr double sgn(Sign s) { return static_cast<double>(static_cast<int>(s)); }
constexpr Sign flip(Sign s) { return s == Sign::plus ? Sign::minus : Sign::plus; }
constexpr Sign product(Sign a, Sign b) { return a == b ? Sign::plus : Sign::minus; }
inline const char* to_string(Sign s) { return s == Sign::plus ? "+" : "-"; }

/// Japanese bracket <xi>_M = sqrt(M^2 + |xi|^2).
inline double bracket(const Vec3& xi, double mass) {
  return std::sqrt(mass * mass + xi.squaredNorm());
}
inline double bracket(double r, double mass) { return std::sqrt(mass * mass + r * r); }

inline Mat2 pauli(int j) {
  const cd I(0.0, 1.0);
  Mat2 s;
  switch (j) {
    case 1: s << 0.0, 1.0, 1.0, 0.0; break;
    case 2: s << 0.0, -I, I, 0.0; break;
    case 3: s << 1.0, 0.0, 0.0, -1.0; break;
    default: throw std::out_of_range("pauli: index must be 1, 2 or 3");
  }
  return s;
}

/// Dirac matrices in the standard (Dirac) representation:
/// gamma^0 = diag(I, -I), gamma^j = [[0, sigma^j], [-sigma^j, 0]].
inline Mat4 gamma(int mu) {
  Mat4 g = Mat4::Zero();
  if (mu == 0) {
    g.diagonal() << 1.0, 1.0, -1.0, -1.0;
    return g;
  }
  if (mu < 0 || mu > 3) throw std::out_of_range("gamma: index must be in 0..3");
  const Mat2 s = pauli(mu);
  g.block<2, 2>(0, 2) = s;
  g.block<2, 2>(2, 0) = -s;
  return g;
}

inline Mat4 beta() { return gamma(0); }

/// alpha^j = gamma^0 gamma^j, j = 1..3.
inline Mat4 alpha(int j) {
  if (j < 1 || j > 3) throw std::out_of_range("alpha: index must be in 1..3");
  return gamma(0) * gamma(j);
}

/// Minkowski metric diag(1, -1, -1, -1).
constexpr double metric(int a, int b) { return a != b ? 0.0 : (a == 0 ? 1.0 : -1.0); }

inline double max_abs(const Mat4& a) { return a.cwiseAbs().maxCoeff(); }

inline bool is_hermitian(const Mat4& a, double tol = 1e-14) {
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (std::abs(a(i, j) - std::conj(a(j, i))) > tol) return false;
  return true;
}

inline bool is_unitary(const Mat4& a, double tol = 1e-14) {
  const Mat4 p = a.adjoint() * a;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (std::abs(p(i, j) - (i == j ? 1.0 : 0.0)) > tol) return false;
  return true;
}

/// Largest singular value.
inline double op_norm(const Mat4& a) {
  Eigen::JacobiSVD<Mat4> svd(a);
  return svd.singularValues()(0);
}

/// Max over (alpha, beta) of |gamma^a gamma^b + gamma^b gamma^a - 2 g^{ab} I|_inf.
inline double check_clifford() {
  double worst = 0.0;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      const Mat4 r = gamma(a) * gamma(b) + gamma(b) * gamma(a) -
                     2.0 * metric(a, b) * Mat4::Identity();
      worst = std::max(worst, max_abs(r));
    }
  return worst;
}

/// Residual of alpha^j beta + beta alpha^j = 0 and
/// alpha^j alpha^k + alpha^k alpha^j = 2 delta^{jk} I.
inline double check_alpha_beta() {
  double worst = 0.0;
  const Mat4 b = beta();
  for (int j = 1; j <= 3; ++j) {
    worst = std::max(worst, max_abs(alpha(j) * b + b * alpha(j)));
    for (int k = 1; k <= 3; ++k) {
      const Mat4 r = alpha(j) * alpha(k) + alpha(k) * alpha(j) -
                     (j == k ? 2.0 : 0.0) * Mat4::Identity();
      worst = std::max(worst, max_abs(r));
    }
  }
  return worst;
}

/// xi . alpha + M beta, the free Dirac Hamiltonian symbol.
inline Mat4 dirac_symbol(const Vec3& xi, double mass) {
  static const std::array<Mat4, 3> a{alpha(1), alpha(2), alpha(3)};
  static const Mat4 b = beta();
  return xi(0) * a[0] + xi(1) * a[1] + xi(2) * a[2] + mass * b;
}

/// Pi^M_s(xi) = (I + s <xi>_M^{-1} (xi . alpha + M beta)) / 2.
/// At the degenerate point M = 0, xi = 0 the symbol is undefined; I/2 is returned.
inline Mat4 projector(Sign s, double mass, const Vec3& xi) {
  if (mass < 0.0) throw std::invalid_argument("projector: mass must be nonnegative");
  const double br = bracket(xi, mass);
  if (br == 0.0) return 0.5 * Mat4::Identity();
  return 0.5 * (Mat4::Identity() + (sgn(s) / br) * dirac_symbol(xi, mass));
}

/// |Pi_s beta - beta Pi_{-s} - s M <xi>_M^{-1} I|_inf.
/// Expanding both products, the beta terms cancel against each other and
/// the mass term is a multiple of the identity.
inline double commutation_residual(Sign s, double mass, const Vec3& xi) {
  const Mat4 b = beta();
  const double br = bracket(xi, mass);
  const double shift = br == 0.0 ? 0.0 : sgn(s) * mass / br;
  const Mat4 r = projector(s, mass, xi) * b - b * projector(flip(s), mass, xi) -
                 shift * Mat4::Identity();
  return max_abs(r);
}

/// Angle between two nonzero vectors, via atan2 of |cross| and dot.
inline double angle(const Vec3& a, const Vec3& b) {
  if (a.squaredNorm() == 0.0 || b.squaredNorm() == 0.0)
    throw std::invalid_argument("angle: zero vector");
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

/// Operator 2-norm of Pi_{s1}(xi) Pi_{s2}(eta).
inline double null_product_norm(Sign s1, Sign s2, double mass, const Vec3& xi, const Vec3& eta) {
  return op_norm(projector(s1, mass, xi) * projector(s2, mass, eta));
}

/// Right-hand side of the product bound: the angle that must be small for the
/// product to be small, plus the mass-induced <xi>^{-1} + <eta>^{-1} floor.
/// Opposite signs pair with angle(xi, eta), equal signs with angle(-xi, eta).
inline double null_product_envelope(Sign s1, Sign s2, const Vec3& xi, const Vec3& eta) {
  const Vec3 a = s1 == s2 ? Vec3(-xi) : xi;
  return angle(a, eta) + 1.0 / bracket(xi, 1.0) + 1.0 / bracket(eta, 1.0);
}

/// Sharp constant of the bilinear form
/// (v1, v2) -> < Pi_{s1}(2^{k1} w1) v1, beta Pi_{s2}(2^{k2} w2) v2 >
/// for unit directions with angular distance between s1 w1 and s2 w2 at most 2^{-l}.
inline double cap_bilinear_bound(Sign s1, Sign s2, int k1, int k2, int l, const Vec3& w1,
                                 const Vec3& w2, double mass = 1.0) {
  if (k1 < 0 || k2 < 0) throw std::invalid_argument("cap_bilinear_bound: negative frequency index");
  if (l < 1 || l > std::min(k1, k2) + 10)
    throw std::invalid_argument("cap_bilinear_bound: need 1 <= l <= min(k1,k2)+10");
  const Vec3 u1 = w1.normalized(), u2 = w2.normalized();
  const double dist = angle(sgn(s1) * u1, sgn(s2) * u2);
  if (dist > std::ldexp(1.0, -l) * (1.0 + 1e-12))
    throw std::invalid_argument("cap_bilinear_bound: caps farther apart than 2^-l");
  const Vec3 xi1 = std::ldexp(1.0, k1) * u1;
  const Vec3 xi2 = std::ldexp(1.0, k2) * u2;
  return op_norm(projector(s1, mass, xi1) * beta() * projector(s2, mass, xi2));
}

/// Fitted constant of the product bound for one dyadic radius:
/// max over a uniform sweep of n_angles angles in (0, pi] of
/// |Pi_{s1}(xi) Pi_{s2}(eta)| / envelope, with |xi| = |eta| = 2^k.
inline double fit_null_constant(Sign s1, Sign s2, double mass, int k, int n_angles) {
  const double r = std::ldexp(1.0, k);
  const Vec3 xi(0.0, 0.0, r);
  double worst = 0.0;
  for (int i = 1; i <= n_angles; ++i) {
    const double th = M_PI * static_cast<double>(i) / n_angles;
    const Vec3 eta(r * std::sin(th), 0.0, r * std::cos(th));
    const double ratio = null_product_norm(s1, s2, mass, xi, eta) /
                         null_product_envelope(s1, s2, xi, eta);
    worst = std::max(worst, ratio);
  }
  return worst;
}

}  // namespace dkg
