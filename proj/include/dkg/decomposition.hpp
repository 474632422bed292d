#pragma once

// Littlewood-Paley shells, modulation cutoffs, frequency cubes and angular
// caps as Fourier multipliers, together with the space-time container the
// modulation operators act on.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "dkg/dirac_algebra.hpp"
#include "dkg/fft.hpp"
#include "dkg/field.hpp"

namespace dkg {

// ---------------------------------------------------------------------------
// smooth cutoffs

/// S(x) = e^{-1/x} / (e^{-1/x} + e^{-1/(1-x)}): 0 for x <= 0, 1 for x >= 1.
inline double smooth_step(double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double a = std::exp(-1.0 / x);
  const double b = std::exp(-1.0 / (1.0 - x));
  return a / (a + b);
}

/// Even bump equal to 1 on [-1,1] and vanishing outside (-2,2); the
/// transition on 1 < |s| < 2 is 1 - step(|s| - 1).
class Rho0 {
 public:
  using Profile = std::function<double(double)>;

  Rho0() : step_(smooth_step) {}
  explicit Rho0(Profile step) : step_(std::move(step)) {}

  double operator()(double s) const {
    const double a = std::abs(s);
    if (a <= 1.0) return 1.0;
    if (a >= 2.0) return 0.0;
    return 1.0 - step_(a - 1.0);
  }

 private:
  Profile step_;
};

/// Validates a transition profile (0 at 0, 1 at 1, monotone, in [0,1],
/// step(x) + step(1-x) = 1) and wraps it into a cutoff.
inline Rho0 build_rho0(Rho0::Profile step = smooth_step) {
  if (!step) throw std::invalid_argument("build_rho0: empty profile");
  if (step(0.0) != 0.0 || step(1.0) != 1.0)
    throw std::invalid_argument("build_rho0: profile must map 0 to 0 and 1 to 1");
  double prev = 0.0;
  for (int i = 1; i <= 1000; ++i) {
    const double x = i / 1000.0;
    const double v = step(x);
    if (v < prev - 1e-15 || v < 0.0 || v > 1.0)
      throw std::invalid_argument("build_rho0: profile must be monotone with values in [0,1]");
    if (std::abs(v + step(1.0 - x) - 1.0) > 1e-12)
      throw std::invalid_argument("build_rho0: profile must satisfy step(x) + step(1-x) = 1");
    prev = v;
  }
  return Rho0(std::move(step));
}

inline const Rho0& default_rho0() {
  static const Rho0 r;
  return r;
}

/// rho_k(r) = rho0(2^-k r) - rho0(2^{1-k} r), any integer k.
inline double rho_shell(int k, double r) {
  const Rho0& c = default_rho0();
  return c(std::ldexp(r, -k)) - c(std::ldexp(r, 1 - k));
}

/// Symbol of P_k: the low lump rho0(|xi|) for k = 0, the shell rho_k for k >= 1.
inline double lp_symbol(int k, double r) {
  if (k < 0) throw std::invalid_argument("lp_symbol: k must be nonnegative");
  return k == 0 ? default_rho0()(r) : rho_shell(k, r);
}

/// Symbol of P_{<=k} = rho0(2^-k |xi|).
inline double lp_le_symbol(int k, double r) {
  if (k < 0) throw std::invalid_argument("lp_le_symbol: k must be nonnegative");
  return default_rho0()(std::ldexp(r, -k));
}

/// Widened symbol: rho_{k-1} + rho_k + rho_{k+1}; for k = 0 the lump of P_0 + P_1.
inline double lp_tilde_symbol(int k, double r) {
  if (k < 0) throw std::invalid_argument("lp_tilde_symbol: k must be nonnegative");
  if (k == 0) return lp_le_symbol(1, r);
  return rho_shell(k - 1, r) + rho_shell(k, r) + rho_shell(k + 1, r);
}

/// Radial support [lo, hi] of the widened shell.
inline std::pair<double, double> tilde_support(int k) {
  if (k == 0) return {0.0, 4.0};
  return {std::ldexp(1.0, k - 2), std::ldexp(1.0, k + 2)};
}

/// Index of the top shell needed to resolve a lattice: all modes lie in P_{<=k}.
inline int lp_top_index(const FrequencyLattice& lat) {
  const double rmax = std::sqrt(3.0) * lat.nyquist();
  int k = 0;
  while (std::ldexp(1.0, k) < rmax) ++k;
  return k;
}

template <int NC>
Field<NC> littlewood_paley(const Field<NC>& f, int k) {
  return apply_scalar_multiplier(f, [k](const Vec3& xi) { return lp_symbol(k, xi.norm()); });
}

template <int NC>
Field<NC> littlewood_paley_le(const Field<NC>& f, int k) {
  return apply_scalar_multiplier(f, [k](const Vec3& xi) { return lp_le_symbol(k, xi.norm()); });
}

template <int NC>
Field<NC> littlewood_paley_tilde(const Field<NC>& f, int k) {
  return apply_scalar_multiplier(f, [k](const Vec3& xi) { return lp_tilde_symbol(k, xi.norm()); });
}

// ---------------------------------------------------------------------------
// cubes

/// One-dimensional cube bump: 1 on |x| <= 1/3, 0 for |x| >= 2/3, and
/// integer translates sum to one.
inline double cube_bump_1d(double x) {
  const double a = std::abs(x);
  if (a <= 1.0 / 3.0) return 1.0;
  if (a >= 2.0 / 3.0) return 0.0;
  return 1.0 - smooth_step(3.0 * a - 1.0);
}

using CubeIndex = std::array<int, 3>;

/// gamma_{k',n}(xi) with n = 2^{k'} m.
inline double cube_symbol(int kp, const CubeIndex& m, const Vec3& xi) {
  const double s = std::ldexp(1.0, -kp);
  double v = 1.0;
  for (int a = 0; a < 3 && v != 0.0; ++a) v *= cube_bump_1d(xi(a) * s - m[a]);
  return v;
}

/// Converts a cube center n to its index; n must lie on 2^{k'} Z^3.
inline CubeIndex cube_index(int kp, const Vec3& n) {
  CubeIndex m;
  for (int a = 0; a < 3; ++a) {
    const double v = std::ldexp(n(a), -kp);
    const double r = std::round(v);
    if (std::abs(v - r) > 1e-9) throw std::invalid_argument("cube center not on the lattice 2^k' Z^3");
    m[a] = static_cast<int>(r);
  }
  return m;
}

/// All cube indices whose symbol is nonzero on some mode of the lattice.
inline std::vector<CubeIndex> cubes_on_lattice(const FrequencyLattice& lat, int kp) {
  const double s = std::ldexp(1.0, -kp);
  const double lo = -lat.nyquist() * s, hi = lat.max_symmetric_radius() * s;
  const int a = static_cast<int>(std::floor(lo - 2.0 / 3.0));
  const int b = static_cast<int>(std::ceil(hi + 2.0 / 3.0));
  std::vector<CubeIndex> out;
  for (int i = a; i <= b; ++i)
    for (int j = a; j <= b; ++j)
      for (int k = a; k <= b; ++k) out.push_back({i, j, k});
  return out;
}

template <int NC>
Field<NC> cube_project(const Field<NC>& f, int kp, const CubeIndex& m) {
  return apply_scalar_multiplier(f, [&](const Vec3& xi) { return cube_symbol(kp, m, xi); });
}

template <int NC>
Field<NC> cube_project(const Field<NC>& f, int kp, const Vec3& n) {
  return cube_project(f, kp, cube_index(kp, n));
}

// ---------------------------------------------------------------------------
// caps

/// Geodesic covering of S^2 by caps of radius 2^-l with a smooth angular
/// partition of unity. Centers come from a subdivided icosahedron whose
/// frequency is the smallest with covering radius <= 0.9 * 2^-l.
class CapCover {
 public:
  explicit CapCover(int l) : l_(l) {
    if (l < 0) throw std::invalid_argument("cap cover level must be nonnegative");
    if (l == 0) {
      centers_.push_back(Vec3(0, 0, 1));
      radius_ = M_PI;
      covering_radius_ = M_PI;
      support_ = M_PI;
      plateau_ = M_PI;
      return;
    }
    radius_ = std::ldexp(1.0, -l);
    for (int nu = 1;; ++nu) {
      build_geodesic(nu);
      if (covering_radius_ <= 0.9 * radius_) {
        frequency_ = nu;
        break;
      }
    }
    double amin = M_PI;
    for (const auto& t : triangles_)
      for (int a = 0; a < 3; ++a) amin = std::min(amin, angle(centers_[t[a]], centers_[t[(a + 1) % 3]]));
    min_separation_ = amin;
    support_ = 0.999 * std::min(2.0 * radius_, amin);
    plateau_ = 0.5 * support_;
    if (support_ <= covering_radius_) throw std::logic_error("cap supports do not cover the sphere");
    build_hash();
  }

  int level() const { return l_; }
  int frequency() const { return frequency_; }
  std::size_t size() const { return centers_.size(); }
  const Vec3& center(std::size_t i) const { return centers_[i]; }
  const std::vector<Vec3>& centers() const { return centers_; }
  double radius() const { return radius_; }
  double covering_radius() const { return covering_radius_; }
  double support_radius() const { return support_; }
  double min_separation() const { return min_separation_; }

  /// Unnormalized bump of cap i at unit direction w.
  double bump(std::size_t i, const Vec3& w) const {
    if (l_ == 0) return 1.0;
    const double d = angle(centers_[i], w);
    if (d >= support_) return 0.0;
    return 1.0 - smooth_step((d - plateau_) / (support_ - plateau_));
  }

  /// Indices of caps whose support contains w, with their bump values.
  std::vector<std::pair<std::size_t, double>> active(const Vec3& w) const {
    std::vector<std::pair<std::size_t, double>> out;
    if (l_ == 0) {
      out.push_back({0, 1.0});
      return out;
    }
    for (std::size_t i : candidates(w)) {
      const double b = bump(i, w);
      if (b > 0.0) out.push_back({i, b});
    }
    return out;
  }

  /// eta_kappa(xi); at xi = 0 every cap gets 1/|K|.
  double eta(std::size_t i, const Vec3& xi) const {
    if (l_ == 0) return 1.0;
    const double r = xi.norm();
    if (r == 0.0) return 1.0 / static_cast<double>(size());
    const Vec3 w = xi / r;
    const double bi = bump(i, w);
    if (bi == 0.0) return 0.0;
    double sum = 0.0;
    for (const auto& kv : active(w)) sum += kv.second;
    return bi / sum;
  }

  /// Number of caps of geometric radius 2^-l containing w.
  int geometric_overlap(const Vec3& w) const {
    if (l_ == 0) return 1;
    int c = 0;
    for (std::size_t i : candidates(w))
      if (angle(centers_[i], w) <= radius_) ++c;
    return c;
  }
  int support_overlap(const Vec3& w) const { return static_cast<int>(active(w).size()); }

  /// Index of the nearest center.
  std::size_t nearest(const Vec3& w) const {
    std::size_t best = 0;
    double bd = 10.0;
    const auto cand = l_ == 0 ? std::vector<std::size_t>{0} : candidates(w);
    for (std::size_t i : cand) {
      const double d = angle(centers_[i], w);
      if (d < bd) {
        bd = d;
        best = i;
      }
    }
    return best;
  }

 private:
  static std::array<Vec3, 12> icosahedron() {
    const double p = (1.0 + std::sqrt(5.0)) / 2.0;
    std::array<Vec3, 12> v = {Vec3(-1, p, 0), Vec3(1, p, 0),  Vec3(-1, -p, 0), Vec3(1, -p, 0),
                              Vec3(0, -1, p), Vec3(0, 1, p),  Vec3(0, -1, -p), Vec3(0, 1, -p),
                              Vec3(p, 0, -1), Vec3(p, 0, 1),  Vec3(-p, 0, -1), Vec3(-p, 0, 1)};
    for (Vec3& x : v) x.normalize();
    return v;
  }
  static std::array<std::array<int, 3>, 20> ico_faces() {
    return {{{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
             {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
             {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}}};
  }

  struct KeyHash {
    std::size_t operator()(const std::array<long long, 3>& k) const {
      return static_cast<std::size_t>(k[0] * 73856093LL ^ k[1] * 19349663LL ^ k[2] * 83492791LL);
    }
  };

  void build_geodesic(int nu) {
    const auto v = icosahedron();
    const auto faces = ico_faces();
    centers_.clear();
    std::unordered_map<std::array<long long, 3>, std::size_t, KeyHash> index;
    auto key = [](const Vec3& p) {
      return std::array<long long, 3>{std::llround(p(0) * 1e9), std::llround(p(1) * 1e9),
                                      std::llround(p(2) * 1e9)};
    };
    auto add = [&](const Vec3& p) {
      const auto k = key(p);
      auto it = index.find(k);
      if (it != index.end()) return it->second;
      centers_.push_back(p);
      index.emplace(k, centers_.size() - 1);
      return centers_.size() - 1;
    };
    triangles_.clear();
    for (const auto& f : faces) {
      const Vec3 &A = v[f[0]], &B = v[f[1]], &C = v[f[2]];
      std::vector<std::vector<std::size_t>> row(nu + 1);
      for (int i = 0; i <= nu; ++i)
        for (int j = 0; j <= nu - i; ++j) {
          const int k = nu - i - j;
          const Vec3 p = (static_cast<double>(i) * A + static_cast<double>(j) * B +
                          static_cast<double>(k) * C).normalized();
          row[i].push_back(add(p));
        }
      for (int i = 0; i < nu; ++i)
        for (int j = 0; j < nu - i; ++j) {
          triangles_.push_back({row[i][j], row[i + 1][j], row[i][j + 1]});
          if (j + 1 < nu - i) triangles_.push_back({row[i + 1][j], row[i + 1][j + 1], row[i][j + 1]});
        }
    }
    covering_radius_ = 0.0;
    for (const auto& t : triangles_) {
      const Vec3 &a = centers_[t[0]], &b = centers_[t[1]], &c = centers_[t[2]];
      Vec3 cc = (b - a).cross(c - a).normalized();
      if (cc.dot(a + b + c) < 0.0) cc = -cc;
      covering_radius_ = std::max(covering_radius_, angle(cc, a));
    }
  }

  // Uniform 3D hash of unit vectors with cell size >= chord of the support.
  void build_hash() {
    cell_ = 2.0 * std::sin(0.5 * std::max(support_, radius_)) * 1.0001;
    for (std::size_t i = 0; i < centers_.size(); ++i) hash_[cell_key(centers_[i])].push_back(i);
  }
  std::array<long long, 3> cell_key(const Vec3& p) const {
    return {static_cast<long long>(std::floor(p(0) / cell_)), static_cast<long long>(std::floor(p(1) / cell_)),
            static_cast<long long>(std::floor(p(2) / cell_))};
  }
  std::vector<std::size_t> candidates(const Vec3& w) const {
    std::vector<std::size_t> out;
    const auto k = cell_key(w);
    for (long long a = -1; a <= 1; ++a)
      for (long long b = -1; b <= 1; ++b)
        for (long long c = -1; c <= 1; ++c) {
          auto it = hash_.find({k[0] + a, k[1] + b, k[2] + c});
          if (it != hash_.end()) out.insert(out.end(), it->second.begin(), it->second.end());
        }
    return out;
  }

  int l_;
  int frequency_ = 0;
  double radius_ = 0.0;
  double covering_radius_ = 0.0;
  double support_ = 0.0;
  double plateau_ = 0.0;
  double min_separation_ = 0.0;
  double cell_ = 1.0;
  std::vector<Vec3> centers_;
  std::vector<std::array<std::size_t, 3>> triangles_;
  std::unordered_map<std::array<long long, 3>, std::vector<std::size_t>, KeyHash> hash_;
};

inline CapCover build_cap_cover(int l) {
  if (l < 1) throw std::invalid_argument("build_cap_cover: l must be >= 1");
  return CapCover(l);
}

template <int NC>
Field<NC> cap_project(const Field<NC>& f, const CapCover& cover, std::size_t kappa) {
  if (kappa >= cover.size()) throw std::out_of_range("cap index out of range");
  if (cover.level() == 0) return f;
  return apply_scalar_multiplier(f, [&](const Vec3& xi) { return cover.eta(kappa, xi); });
}

/// For every lattice mode, the caps with nonzero weight and their weights.
inline std::vector<std::vector<std::pair<std::size_t, double>>> cap_weights(const FrequencyLattice& lat,
                                                                           const CapCover& cover) {
  std::vector<std::vector<std::pair<std::size_t, double>>> out(lat.size());
  for (std::size_t q = 0; q < lat.size(); ++q) {
    const Vec3 xi = lat.xi(q);
    const double r = xi.norm();
    if (cover.level() == 0) {
      out[q] = {{0, 1.0}};
    } else if (r == 0.0) {
      for (std::size_t i = 0; i < cover.size(); ++i) out[q].push_back({i, 1.0 / cover.size()});
    } else {
      auto act = cover.active(xi / r);
      double s = 0.0;
      for (const auto& kv : act) s += kv.second;
      for (auto& kv : act) kv.second /= s;
      out[q] = std::move(act);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// space-time fields and modulation

/// Uniform samples t_i = i T / nt of a field on the periodic window [0, T).
/// In the space-time Fourier representation slice m holds tau_m = 2 pi m' / T
/// (m' the centered index) and every slice is in the spatial Fourier rep.
template <int NC>
class SpaceTimeField {
 public:
  SpaceTimeField() = default;
  SpaceTimeField(LatticePtr lat, int nt, double T) : lat_(std::move(lat)), nt_(nt), T_(T) {
    if (nt < 2) throw std::invalid_argument("space-time field needs at least two time samples");
    if (!(T > 0.0)) throw std::invalid_argument("time window must be positive");
    slices_.assign(nt, Field<NC>(lat_, Rep::physical));
  }

  int nt() const { return nt_; }
  double window() const { return T_; }
  double dt() const { return T_ / nt_; }
  double time(int i) const { return i * dt(); }
  double dtau() const { return 2.0 * M_PI / T_; }
  int tau_index(int m) const { return m < nt_ / 2 ? m : m - nt_; }
  double tau(int m) const { return dtau() * tau_index(m); }
  bool time_fourier() const { return time_fourier_; }
  const FrequencyLattice& lattice() const { return *lat_; }
  const LatticePtr& lattice_ptr() const { return lat_; }

  Field<NC>& slice(int i) { return slices_[i]; }
  const Field<NC>& slice(int i) const { return slices_[i]; }

  /// Physical space-time samples -> (tau, xi) coefficients; unitary in t.
  void to_fourier() {
    if (time_fourier_) throw std::logic_error("space-time field already in Fourier representation");
    for (auto& s : slices_) s.ensure(Rep::fourier);
    time_transform(FFTW_FORWARD);
    time_fourier_ = true;
  }
  void to_physical() {
    if (!time_fourier_) throw std::logic_error("space-time field already in physical representation");
    time_transform(FFTW_BACKWARD);
    for (auto& s : slices_) s.ensure(Rep::physical);
    time_fourier_ = false;
  }

  /// (int |f|^2 dt dx)^{1/2} by the rectangle rule (exact for the DFT).
  double l2_norm() const {
    double s = 0.0;
    for (const auto& f : slices_) s += f.norm_sq();
    return std::sqrt(s * dt());
  }

  SpaceTimeField& operator+=(const SpaceTimeField& o) {
    check(o);
    for (int i = 0; i < nt_; ++i) slices_[i] += o.slices_[i];
    return *this;
  }
  SpaceTimeField& operator-=(const SpaceTimeField& o) {
    check(o);
    for (int i = 0; i < nt_; ++i) slices_[i] -= o.slices_[i];
    return *this;
  }
  SpaceTimeField& operator*=(cd a) {
    for (auto& s : slices_) s *= a;
    return *this;
  }

  void check(const SpaceTimeField& o) const {
    if (nt_ != o.nt_ || T_ != o.T_ || time_fourier_ != o.time_fourier_)
      throw std::invalid_argument("space-time field mismatch");
  }

 private:
  void time_transform(int sign) {
    const std::size_t N = lat_->size();
    std::vector<cd> buf(nt_);
    const double scale = 1.0 / std::sqrt(static_cast<double>(nt_));
    for (int c = 0; c < NC; ++c)
      for (std::size_t q = 0; q < N; ++q) {
        for (int i = 0; i < nt_; ++i) buf[i] = slices_[i].at(c, q);
        fft1_inplace(buf.data(), nt_, sign);
        for (int i = 0; i < nt_; ++i) slices_[i].at(c, q) = buf[i] * scale;
      }
  }

  LatticePtr lat_;
  int nt_ = 0;
  double T_ = 0.0;
  bool time_fourier_ = false;
  std::vector<Field<NC>> slices_;
};

/// Smallest modulation index whose dyadic scale the window resolves.
inline int lowest_resolvable_j(double T) {
  return static_cast<int>(std::ceil(std::log2(2.0 * M_PI / T) - 1e-12));
}

/// Modulation selection for Q operators.
struct ModulationRange {
  enum Kind { single, at_most, above, between } kind = single;
  int j = 0;       // single / at_most / above
  int j_lo = 0;    // between: j_lo <= j <= j_hi
  int j_hi = 0;

  static ModulationRange only(int j) { return {single, j, 0, 0}; }
  static ModulationRange le(int j) { return {at_most, j, 0, 0}; }
  static ModulationRange gt(int j) { return {above, j, 0, 0}; }
  static ModulationRange in(int lo, int hi) { return {between, 0, lo, hi}; }

  double symbol(double x) const {
    const double a = std::abs(x);
    const Rho0& r = default_rho0();
    switch (kind) {
      case single: return rho_shell(j, a);
      case at_most: return r(std::ldexp(a, -j));
      case above: return 1.0 - r(std::ldexp(a, -j));
      case between: return r(std::ldexp(a, -j_hi)) - r(std::ldexp(a, 1 - j_lo));
    }
    return 0.0;
  }
  int smallest_scale() const {
    switch (kind) {
      case single: case at_most: case above: return j;
      case between: return j_lo;
    }
    return j;
  }
};

/// Multiplies the space-time transform by the modulation symbol evaluated
/// at tau + s <xi>_mass. The field keeps its representation.
template <int NC>
SpaceTimeField<NC> modulation_project(SpaceTimeField<NC> f, Sign s, double mass, const ModulationRange& range) {
  if (std::ldexp(1.0, range.smallest_scale()) < f.dtau() * (1.0 - 1e-12))
    throw std::invalid_argument("modulation scale 2^" + std::to_string(range.smallest_scale()) +
                                " is below the time-frequency resolution of the window");
  const bool was_fourier = f.time_fourier();
  if (!was_fourier) f.to_fourier();
  const FrequencyLattice& lat = f.lattice();
  const auto br = lat.bracket_table(mass);
  for (int m = 0; m < f.nt(); ++m) {
    const double tau = f.tau(m);
    Field<NC>& sl = f.slice(m);
    for (std::size_t q = 0; q < lat.size(); ++q) {
      const double w = range.symbol(tau + sgn(s) * br[q]);
      if (w == 1.0) continue;
      for (int c = 0; c < NC; ++c) sl.at(c, q) *= w;
    }
  }
  if (!was_fourier) f.to_physical();
  return f;
}

template <int NC>
SpaceTimeField<NC> modulation_project(const SpaceTimeField<NC>& f, Sign s, double mass, int j) {
  return modulation_project(f, s, mass, ModulationRange::only(j));
}

}  // namespace dkg
