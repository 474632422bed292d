#pragma once

// Periodic box discretization: frequency lattice and mass parameters.

#include <cmath>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "dkg/dirac_algebra.hpp"

namespace dkg {

/// Masses (M, m) of the spinor and scalar fields. Unless allow_resonant is
/// set, the non-resonance condition 2M > m > 0 is enforced on construction.
struct MassParams {
  double M = 1.0;
  double m = 1.0;
  bool allow_resonant = false;

  MassParams() = default;
  MassParams(double dirac_mass, double scalar_mass, bool resonant_ok = false)
      : M(dirac_mass), m(scalar_mass), allow_resonant(resonant_ok) {
    validate();
  }

  bool non_resonant() const { return 2.0 * M > m && m > 0.0; }

  void validate() const {
    if (!(M >= 0.0) || !(m >= 0.0) || !std::isfinite(M) || !std::isfinite(m))
      throw std::invalid_argument("masses must be finite and nonnegative");
    if (!allow_resonant && !non_resonant())
      throw std::invalid_argument("mass condition 2M > m > 0 violated (M=" + std::to_string(M) +
                                  ", m=" + std::to_string(m) + "); set allow_resonant to override");
  }
};

/// Cubic periodic box [0, L)^3 sampled on n^3 points; dual lattice
/// xi = (2 pi / L) * (i, j, k) with integer indices centered in [-n/2, n/2).
class FrequencyLattice {
 public:
  FrequencyLattice(int n, double box_length) : n_(n), L_(box_length) {
    if (n < 2 || (n & (n - 1)) != 0)
      throw std::invalid_argument("grid size must be a power of two >= 2");
    if (!(box_length > 0.0)) throw std::invalid_argument("box length must be positive");
  }

  int n() const { return n_; }
  double box_length() const { return L_; }
  std::size_t size() const { return static_cast<std::size_t>(n_) * n_ * n_; }
  double dk() const { return 2.0 * M_PI / L_; }
  double dx() const { return L_ / n_; }
  double cell_volume() const { return dx() * dx() * dx(); }
  double volume() const { return L_ * L_ * L_; }

  /// Centered integer frequency of a 1D index.
  int freq_index(int i) const { return i < n_ / 2 ? i : i - n_; }
  /// 1D index of a (possibly out-of-range) integer frequency, wrapped.
  int wrap(int f) const { return ((f % n_) + n_) % n_; }

  std::size_t linear(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * n_ + j) * n_ + k;
  }
  void unravel(std::size_t idx, int& i, int& j, int& k) const {
    k = static_cast<int>(idx % n_);
    j = static_cast<int>((idx / n_) % n_);
    i = static_cast<int>(idx / (static_cast<std::size_t>(n_) * n_));
  }

  Vec3 xi(std::size_t idx) const {
    int i, j, k;
    unravel(idx, i, j, k);
    return dk() * Vec3(freq_index(i), freq_index(j), freq_index(k));
  }
  Vec3 x(std::size_t idx) const {
    int i, j, k;
    unravel(idx, i, j, k);
    return dx() * Vec3(i, j, k);
  }

  /// True if any axis sits on the unpaired Nyquist frequency -n/2.
  bool is_nyquist(std::size_t idx) const {
    int i, j, k;
    unravel(idx, i, j, k);
    const int h = n_ / 2;
    return i == h || j == h || k == h;
  }

  /// Largest |xi| with every axis inside the symmetric range.
  double max_symmetric_radius() const { return dk() * (n_ / 2 - 1); }
  double nyquist() const { return dk() * (n_ / 2); }

  /// Mode mask of the 2/3 rule (|index| < n/3 on every axis).
  bool in_two_thirds(std::size_t idx) const {
    int i, j, k;
    unravel(idx, i, j, k);
    const int c = n_ / 3;
    return std::abs(freq_index(i)) < c && std::abs(freq_index(j)) < c &&
           std::abs(freq_index(k)) < c;
  }

  /// Table of <xi>_mass over all modes.
  std::vector<double> bracket_table(double mass) const {
    std::vector<double> t(size());
    for (std::size_t q = 0; q < size(); ++q) t[q] = bracket(xi(q), mass);
    return t;
  }

  bool operator==(const FrequencyLattice& o) const { return n_ == o.n_ && L_ == o.L_; }
  bool operator!=(const FrequencyLattice& o) const { return !(*this == o); }

 private:
  int n_;
  double L_;
};

using LatticePtr = std::shared_ptr<const FrequencyLattice>;

inline LatticePtr make_lattice(int n, double box_length) {
  return std::make_shared<const FrequencyLattice>(n, box_length);
}

}  // namespace dkg
