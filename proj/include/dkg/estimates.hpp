#pragma once

// Space-time norms of frequency-localized fields (modulation norm,
// cube/cap-localized Strichartz norms, S_k and S^{+-,sigma}), the
// localized kernel decay measurement, multiplier checks, the trilinear
// harness and the dyadic summation condition.
//
// Conventions. A SpaceTimeField holds samples of a trigonometric
// polynomial on the periodic window [0, T). Time integrals use the
// trapezoid rule over the closed period, which on a periodic window is the
// plain sample sum times dt. Spatial L^q norms are grid sums over the
// field's lattice, (h^3 sum |v(x)|^q)^{1/q} with |v|^2 summed over components.

#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "dkg/decomposition.hpp"
#include "dkg/dirac_algebra.hpp"
#include "dkg/fft.hpp"
#include "dkg/field.hpp"
#include "dkg/lattice.hpp"
#include "dkg/random.hpp"
#include "dkg/resonance.hpp"

namespace dkg {

// ---------------------------------------------------------------------------
// spectral samples

/// Spatial Fourier coefficients of every mode that is nonzero at some time.
/// data[(i * modes.size() + a) * NC + c] is component c of mode a at t_i.
template <int NC>
struct ModeSeries {
  LatticePtr lat;
  int nt = 0;
  double T = 0.0;
  std::vector<std::size_t> modes;
  std::vector<cd> data;

  double dt() const { return T / nt; }
  std::size_t count() const { return modes.size(); }
  cd& at(int i, std::size_t a, int c) { return data[(static_cast<std::size_t>(i) * modes.size() + a) * NC + c]; }
  const cd& at(int i, std::size_t a, int c) const {
    return data[(static_cast<std::size_t>(i) * modes.size() + a) * NC + c];
  }
};

constexpr double kModeFloor = 1e-13;

template <int NC>
ModeSeries<NC> mode_series(const SpaceTimeField<NC>& f) {
  if (f.time_fourier()) throw std::invalid_argument("mode_series: field must be sampled in time");
  const FrequencyLattice& lat = f.lattice();
  std::vector<Field<NC>> sl;
  sl.reserve(f.nt());
  for (int i = 0; i < f.nt(); ++i) sl.push_back(f.slice(i).as(Rep::fourier));
  ModeSeries<NC> s;
  s.lat = f.lattice_ptr();
  s.nt = f.nt();
  s.T = f.window();
  // modes below a round-off floor relative to the largest coefficient are dropped
  double top = 0.0;
  for (int i = 0; i < f.nt(); ++i)
    for (int c = 0; c < NC; ++c)
      for (std::size_t q = 0; q < lat.size(); ++q) top = std::max(top, std::abs(sl[i].at(c, q)));
  const double floor = kModeFloor * top;
  for (std::size_t q = 0; q < lat.size(); ++q) {
    bool nz = false;
    for (int i = 0; i < f.nt() && !nz; ++i)
      for (int c = 0; c < NC; ++c)
        if (std::abs(sl[i].at(c, q)) > floor) {
          nz = true;
          break;
        }
    if (nz) s.modes.push_back(q);
  }
  s.data.assign(static_cast<std::size_t>(s.nt) * s.modes.size() * NC, cd(0.0, 0.0));
  for (int i = 0; i < s.nt; ++i)
    for (std::size_t a = 0; a < s.modes.size(); ++a)
      for (int c = 0; c < NC; ++c) s.at(i, a, c) = sl[i].at(c, s.modes[a]);
  return s;
}

/// sup_t ||f(t)||_{L^2_x}.
template <int NC>
double linf_l2_norm(const ModeSeries<NC>& s) {
  const double vol = s.lat->cell_volume();
  double best = 0.0;
  for (int i = 0; i < s.nt; ++i) {
    double acc = 0.0;
    for (std::size_t a = 0; a < s.count(); ++a)
      for (int c = 0; c < NC; ++c) acc += std::norm(s.at(i, a, c));
    best = std::max(best, acc * vol);
  }
  return std::sqrt(best);
}

// ---------------------------------------------------------------------------
// modulation norm

struct XNormResult {
  double value = 0.0;
  int j_lo = 0;  // lowest resolvable index; carries the lump Q_{<=j_lo}
  int j_hi = 0;
  std::vector<double> pieces;  // ||Q_j f||_{L^2}, j = j_lo..j_hi
};

/// Squared L^2 mass of f in each modulation piece at the given sign and mass.
template <int NC>
XNormResult modulation_profile(const ModeSeries<NC>& s, Sign sign, double mass) {
  XNormResult r;
  const double dtau = 2.0 * M_PI / s.T;
  r.j_lo = lowest_resolvable_j(s.T);
  double top = 0.0;
  for (std::size_t a = 0; a < s.count(); ++a) top = std::max(top, bracket(s.lat->xi(s.modes[a]), mass));
  top += dtau * (s.nt / 2);
  r.j_hi = r.j_lo;
  while (std::ldexp(1.0, r.j_hi - 1) < top) ++r.j_hi;
  if (std::ldexp(1.0, r.j_lo) > 2.0 * top)
    throw std::invalid_argument("xnorm: the window resolves no modulation scale");
  const int nj = r.j_hi - r.j_lo + 1;
  std::vector<double> acc(nj, 0.0);
  const ModulationRange low = ModulationRange::le(r.j_lo);
  std::vector<cd> buf(s.nt);
  const double scale = 1.0 / std::sqrt(static_cast<double>(s.nt));
  for (std::size_t a = 0; a < s.count(); ++a) {
    const double w = bracket(s.lat->xi(s.modes[a]), mass);
    for (int c = 0; c < NC; ++c) {
      for (int i = 0; i < s.nt; ++i) buf[i] = s.at(i, a, c);
      fft1_inplace(buf.data(), s.nt, FFTW_FORWARD);
      for (int m = 0; m < s.nt; ++m) {
        const double e = std::norm(buf[m] * scale);
        if (e == 0.0) continue;
        const int mi = m < s.nt / 2 ? m : m - s.nt;
        const double x = std::abs(dtau * mi + sgn(sign) * w);
        const double lo = low.symbol(x);
        acc[0] += lo * lo * e;
        for (int jj = 1; jj < nj; ++jj) {
          const int j = r.j_lo + jj;
          if (x <= std::ldexp(1.0, j - 1) || x >= std::ldexp(1.0, j + 1)) continue;
          const double v = rho_shell(j, x);
          acc[jj] += v * v * e;
        }
      }
    }
  }
  const double vol = s.lat->cell_volume() * s.dt();
  r.pieces.resize(nj);
  for (int jj = 0; jj < nj; ++jj) r.pieces[jj] = std::sqrt(acc[jj] * vol);
  return r;
}

/// l^p over j of 2^{bj} ||Q_j f||_{L^2} (the lowest index holds the lump).
inline double combine_xnorm(const XNormResult& r, double b, double p) {
  if (!(p >= 1.0)) throw std::invalid_argument("xnorm: p must be >= 1");
  double acc = 0.0;
  for (std::size_t jj = 0; jj < r.pieces.size(); ++jj) {
    const double v = std::pow(2.0, b * (r.j_lo + static_cast<int>(jj))) * r.pieces[jj];
    if (std::isinf(p)) acc = std::max(acc, v);
    else acc += std::pow(v, p);
  }
  return std::isinf(p) ? acc : std::pow(acc, 1.0 / p);
}

template <int NC>
XNormResult xnorm_report(const SpaceTimeField<NC>& f, Sign sign, double mass, double b, double p) {
  XNormResult r = modulation_profile(mode_series(f), sign, mass);
  r.value = combine_xnorm(r, b, p);
  return r;
}

template <int NC>
double xnorm(const SpaceTimeField<NC>& f, Sign sign, double mass, double b, double p) {
  return xnorm_report(f, sign, mass, b, p).value;
}

// ---------------------------------------------------------------------------
// localized Strichartz norms

struct ExponentPair {
  int p = 3, q = 6;
  static ExponentPair l3l6() { return {3, 6}; }
  static ExponentPair l6l3() { return {6, 3}; }
  void validate() const {
    if (!((p == 3 && q == 6) || (p == 6 && q == 3)))
      throw std::invalid_argument("localized Strichartz norm: exponent pair must be (3,6) or (6,3), got (" +
                                  std::to_string(p) + "," + std::to_string(q) + ")");
  }
};

/// One localization piece: modes (indices into a ModeSeries) and weights.
struct Piece {
  std::vector<std::pair<std::size_t, double>> entries;
};

inline const CapCover& cached_cap_cover(int l) {
  static std::mutex mu;
  static std::map<int, std::unique_ptr<CapCover>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& p = cache[l];
  if (!p) p = std::make_unique<CapCover>(l);
  return *p;
}

/// Cube weights gamma_{k',n}(xi) of every cube containing xi.
inline std::vector<std::pair<CubeIndex, double>> cube_weights(int kp, const Vec3& xi) {
  std::array<std::vector<std::pair<int, double>>, 3> axis;
  const double s = std::ldexp(1.0, -kp);
  for (int d = 0; d < 3; ++d) {
    const double v = xi(d) * s;
    for (int m = static_cast<int>(std::floor(v - 2.0 / 3.0)); m <= static_cast<int>(std::ceil(v + 2.0 / 3.0)); ++m) {
      const double w = cube_bump_1d(v - m);
      if (w > 0.0) axis[d].push_back({m, w});
    }
  }
  std::vector<std::pair<CubeIndex, double>> out;
  for (const auto& a : axis[0])
    for (const auto& b : axis[1])
      for (const auto& c : axis[2]) out.push_back({CubeIndex{a.first, b.first, c.first}, a.second * b.second * c.second});
  return out;
}

/// Pieces Gamma_{k',n} P_kappa of the [k; l, k'] localization. At k' = k the
/// cube layer is a single piece, and at l = 0 the cap layer is.
template <int NC>
std::vector<Piece> localization_pieces(const ModeSeries<NC>& s, int k, int l, int kp) {
  if (k < 0 || kp < 0 || l < 0 || kp > k || l > k)
    throw std::invalid_argument("localized norm: need 0 <= k', l <= k (k=" + std::to_string(k) +
                                ", l=" + std::to_string(l) + ", k'=" + std::to_string(kp) + ")");
  const CapCover* cover = l >= 1 ? &cached_cap_cover(l) : nullptr;
  std::map<std::array<long long, 4>, std::size_t> index;
  std::vector<Piece> pieces;
  auto add = [&](const std::array<long long, 4>& key, std::size_t a, double w) {
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, pieces.size()).first;
      pieces.emplace_back();
    }
    pieces[it->second].entries.push_back({a, w});
  };
  for (std::size_t a = 0; a < s.count(); ++a) {
    const Vec3 xi = s.lat->xi(s.modes[a]);
    std::vector<std::pair<std::size_t, double>> caps;
    if (!cover) {
      caps.push_back({0, 1.0});
    } else if (xi.norm() == 0.0) {
      for (std::size_t i = 0; i < cover->size(); ++i) caps.push_back({i, 1.0 / cover->size()});
    } else {
      caps = cover->active(xi / xi.norm());
      double tot = 0.0;
      for (const auto& kv : caps) tot += kv.second;
      for (auto& kv : caps) kv.second /= tot;
    }
    std::vector<std::pair<CubeIndex, double>> cubes;
    if (kp == k) cubes.push_back({CubeIndex{0, 0, 0}, 1.0});
    else cubes = cube_weights(kp, xi);
    for (const auto& cb : cubes)
      for (const auto& cp : caps)
        add({cb.first[0], cb.first[1], cb.first[2], static_cast<long long>(cp.first)}, a, cb.second * cp.second);
  }
  return pieces;
}

struct PieceNorms {
  double l3l6 = 0.0;  // ||.||_{L^3_t L^6_x}
  double l6l3 = 0.0;  // ||.||_{L^6_t L^3_x}
};

/// Workspace for evaluating pieces on the full spatial grid.
template <int NC>
class PieceEvaluator {
 public:
  explicit PieceEvaluator(const ModeSeries<NC>& s) : s_(s), n_(s.lat->n()) {
    buf_.resize(static_cast<std::size_t>(NC) * s.lat->size());
  }

  PieceNorms norms(const Piece& piece) {
    const std::size_t N = s_.lat->size();
    const double h3 = s_.lat->cell_volume();
    const double inv = 1.0 / std::sqrt(static_cast<double>(N));
    std::vector<double> n6(s_.nt), n3(s_.nt);
    const bool single = piece.entries.size() == 1;
    const Plan plan = single ? Plan{} : make_plan(piece);
    for (int i = 0; i < s_.nt; ++i) {
      double s3 = 0.0, s6 = 0.0;
      if (single) {
        // one mode has constant modulus in x
        const auto& [a, w] = piece.entries[0];
        double m2 = 0.0;
        for (int c = 0; c < NC; ++c) m2 += std::norm(w * s_.at(i, a, c));
        m2 *= inv * inv;
        s3 = N * std::pow(m2, 1.5);
        s6 = N * m2 * m2 * m2;
      } else {
        if (plan.a0.size() <= kSeparableLimit) {
          separable(piece, plan, i);
        } else {
          std::fill(buf_.begin(), buf_.end(), cd(0.0, 0.0));
          for (const auto& [a, w] : piece.entries)
            for (int c = 0; c < NC; ++c) buf_[c * N + s_.modes[a]] = w * s_.at(i, a, c);
          for (int c = 0; c < NC; ++c) fft3_inplace(buf_.data() + c * N, n_, FFTW_BACKWARD);
        }
        for (std::size_t x = 0; x < N; ++x) {
          double m2 = 0.0;
          for (int c = 0; c < NC; ++c) m2 += std::norm(buf_[c * N + x]);
          m2 *= inv * inv;
          s3 += m2 * std::sqrt(m2);
          s6 += m2 * m2 * m2;
        }
      }
      n6[i] = std::pow(h3 * s6, 1.0 / 6.0);
      n3[i] = std::cbrt(h3 * s3);
    }
    PieceNorms r;
    double a3 = 0.0, a6 = 0.0;
    for (int i = 0; i < s_.nt; ++i) {
      a3 += n6[i] * n6[i] * n6[i];
      a6 += std::pow(n3[i], 6.0);
    }
    r.l3l6 = std::cbrt(a3 * s_.dt());
    r.l6l3 = std::pow(a6 * s_.dt(), 1.0 / 6.0);
    return r;
  }

 private:
  // pieces touching few distinct first indices are summed directly, one axis at a time
  static constexpr std::size_t kSeparableLimit = 4;

  struct Plan {
    std::vector<int> a0;                      // distinct first indices
    std::vector<std::array<int, 2>> a01;      // distinct (a0 slot, a1) pairs
    std::vector<std::array<int, 2>> entry;    // per entry: (a01 slot, a2)
  };

  Plan make_plan(const Piece& piece) const {
    Plan p;
    std::map<int, int> s0;
    std::map<std::array<int, 2>, int> s01;
    for (const auto& [a, w] : piece.entries) {
      int i, j, l;
      s_.lat->unravel(s_.modes[a], i, j, l);
      auto it = s0.find(i);
      if (it == s0.end()) {
        it = s0.emplace(i, static_cast<int>(p.a0.size())).first;
        p.a0.push_back(i);
      }
      const std::array<int, 2> key{it->second, j};
      auto jt = s01.find(key);
      if (jt == s01.end()) {
        jt = s01.emplace(key, static_cast<int>(p.a01.size())).first;
        p.a01.push_back(key);
      }
      p.entry.push_back({jt->second, l});
    }
    return p;
  }

  const cd& phase(int f, int x) const { return phases_[static_cast<std::size_t>(f) * n_ + x]; }

  void ensure_phases() {
    if (!phases_.empty()) return;
    phases_.resize(static_cast<std::size_t>(n_) * n_);
    for (int f = 0; f < n_; ++f)
      for (int x = 0; x < n_; ++x)
        phases_[static_cast<std::size_t>(f) * n_ + x] = std::polar(1.0, 2.0 * M_PI * ((f * x) % n_) / n_);
  }

  // unnormalized inverse transform of the piece, component by component
  void separable(const Piece& piece, const Plan& p, int ti) {
    ensure_phases();
    const std::size_t n = n_;
    const std::size_t N = n * n * n;
    std::vector<cd> s2(p.a01.size() * n), s1(p.a0.size() * n * n);
    for (int c = 0; c < NC; ++c) {
      std::fill(s2.begin(), s2.end(), cd(0.0, 0.0));
      for (std::size_t e = 0; e < piece.entries.size(); ++e) {
        const auto& [a, w] = piece.entries[e];
        const cd v = w * s_.at(ti, a, c);
        cd* row = s2.data() + p.entry[e][0] * n;
        for (std::size_t l = 0; l < n; ++l) row[l] += v * phase(p.entry[e][1], static_cast<int>(l));
      }
      std::fill(s1.begin(), s1.end(), cd(0.0, 0.0));
      for (std::size_t q = 0; q < p.a01.size(); ++q) {
        const cd* src = s2.data() + q * n;
        cd* dst = s1.data() + p.a01[q][0] * n * n;
        for (std::size_t j = 0; j < n; ++j) {
          const cd ph = phase(p.a01[q][1], static_cast<int>(j));
          for (std::size_t l = 0; l < n; ++l) dst[j * n + l] += ph * src[l];
        }
      }
      cd* out = buf_.data() + c * N;
      std::fill(out, out + N, cd(0.0, 0.0));
      for (std::size_t r = 0; r < p.a0.size(); ++r) {
        const cd* src = s1.data() + r * n * n;
        for (std::size_t i = 0; i < n; ++i) {
          const cd ph = phase(p.a0[r], static_cast<int>(i));
          cd* dst = out + i * n * n;
          for (std::size_t q = 0; q < n * n; ++q) dst[q] += ph * src[q];
        }
      }
    }
  }

  const ModeSeries<NC>& s_;
  int n_;
  AlignedCVec buf_;
  std::vector<cd> phases_;
};

/// Both localized norms (l^2 over pieces of the per-piece space-time norms).
template <int NC>
PieceNorms localized_strichartz_pair(const ModeSeries<NC>& s, int k, int l, int kp) {
  const auto pieces = localization_pieces(s, k, l, kp);
  PieceEvaluator<NC> ev(s);
  double a = 0.0, b = 0.0;
  for (const auto& p : pieces) {
    const PieceNorms v = ev.norms(p);
    a += v.l3l6 * v.l3l6;
    b += v.l6l3 * v.l6l3;
  }
  return {std::sqrt(a), std::sqrt(b)};
}

template <int NC>
double localized_strichartz_norm(const SpaceTimeField<NC>& f, int k, int l, int kp, ExponentPair pq) {
  pq.validate();
  const PieceNorms v = localized_strichartz_pair(mode_series(f), k, l, kp);
  return pq.p == 3 ? v.l3l6 : v.l6l3;
}

/// Plain ||f||_{L^p_t L^q_x} on the grid.
template <int NC>
double strichartz_norm(const SpaceTimeField<NC>& f, ExponentPair pq) {
  pq.validate();
  const double h3 = f.lattice().cell_volume();
  double acc = 0.0;
  for (int i = 0; i < f.nt(); ++i) {
    const Field<NC> g = f.slice(i).as(Rep::physical);
    double s = 0.0;
    for (std::size_t x = 0; x < g.points(); ++x) {
      double m2 = 0.0;
      for (int c = 0; c < NC; ++c) m2 += std::norm(g.at(c, x));
      s += std::pow(m2, 0.5 * pq.q);
    }
    acc += std::pow(h3 * s, static_cast<double>(pq.p) / pq.q);
  }
  return std::pow(acc * f.dt(), 1.0 / pq.p);
}

// ---------------------------------------------------------------------------
// S_k norms

struct LocalizedEntry {
  int kp = 0, l = 0;
  double l3l6 = 0.0, l6l3 = 0.0;
  double weighted = 0.0;  // 2^{-(k'+k)/3} l3l6 + 2^{-(k'+k)/6} l6l3
};

struct NormReport {
  int k = 0;
  Sign sign = Sign::plus;
  double mass = 1.0;
  double linf_l2 = 0.0;
  double xnorm = 0.0;  // X^{+-,1/2,infty}
  int j_lo = 0, j_hi = 0;
  std::vector<LocalizedEntry> localized;
  double strichartz_sup = 0.0;
  double aggregate = 0.0;

  static double weight(int k, int kp, int p) { return std::pow(2.0, -static_cast<double>(kp + k) / p); }
  double recompute() const {
    double sup = 0.0;
    for (const auto& e : localized)
      sup = std::max(sup, weight(k, e.kp, 3) * e.l3l6 + weight(k, e.kp, 6) * e.l6l3);
    return linf_l2 + xnorm + sup;
  }
};

template <int NC>
NormReport sk_norm_report(const ModeSeries<NC>& s, int k, Sign sign, double mass) {
  if (k < 0) throw std::invalid_argument("S_k norm: k must be nonnegative");
  NormReport r;
  r.k = k;
  r.sign = sign;
  r.mass = mass;
  r.linf_l2 = linf_l2_norm(s);
  XNormResult x = modulation_profile(s, sign, mass);
  r.xnorm = combine_xnorm(x, 0.5, std::numeric_limits<double>::infinity());
  r.j_lo = x.j_lo;
  r.j_hi = x.j_hi;
  PieceEvaluator<NC> ev(s);
  for (int kp = 0; kp <= k; ++kp)
    for (int l = 0; l <= k; ++l) {
      LocalizedEntry e;
      e.kp = kp;
      e.l = l;
      double a = 0.0, b = 0.0;
      for (const auto& p : localization_pieces(s, k, l, kp)) {
        const PieceNorms v = ev.norms(p);
        a += v.l3l6 * v.l3l6;
        b += v.l6l3 * v.l6l3;
      }
      e.l3l6 = std::sqrt(a);
      e.l6l3 = std::sqrt(b);
      e.weighted = NormReport::weight(k, kp, 3) * e.l3l6 + NormReport::weight(k, kp, 6) * e.l6l3;
      r.strichartz_sup = std::max(r.strichartz_sup, e.weighted);
      r.localized.push_back(e);
    }
  r.aggregate = r.linf_l2 + r.xnorm + r.strichartz_sup;
  return r;
}

template <int NC>
NormReport sk_norm_report(const SpaceTimeField<NC>& f, int k, Sign sign, double mass) {
  return sk_norm_report(mode_series(f), k, sign, mass);
}

template <int NC>
double sk_norm(const SpaceTimeField<NC>& f, int k, Sign sign, double mass) {
  return sk_norm_report(f, k, sign, mass).aggregate;
}

/// P_k applied mode by mode.
template <int NC>
ModeSeries<NC> lp_restrict(const ModeSeries<NC>& s, int k) {
  ModeSeries<NC> out;
  out.lat = s.lat;
  out.nt = s.nt;
  out.T = s.T;
  std::vector<std::pair<std::size_t, double>> keep;
  for (std::size_t a = 0; a < s.count(); ++a) {
    const double w = lp_symbol(k, s.lat->xi(s.modes[a]).norm());
    if (w > 0.0) keep.push_back({a, w});
  }
  for (const auto& kv : keep) out.modes.push_back(s.modes[kv.first]);
  out.data.assign(static_cast<std::size_t>(out.nt) * keep.size() * NC, cd(0.0, 0.0));
  for (int i = 0; i < s.nt; ++i)
    for (std::size_t b = 0; b < keep.size(); ++b)
      for (int c = 0; c < NC; ++c) out.at(i, b, c) = keep[b].second * s.at(i, keep[b].first, c);
  return out;
}

struct SigmaNormReport {
  double sigma = 0.0;
  double low = 0.0;                // ||P_0 f||_{S_0}
  std::vector<double> shells;      // ||P_k f||_{S_k}, k = 1..top
  double value = 0.0;
};

/// ||P_{<=0} f||_{S_{<=0}} + (sum_{k>=1} 2^{2 sigma k} ||P_k f||_{S_k}^2)^{1/2}.
template <int NC>
SigmaNormReport s_sigma_norm(const SpaceTimeField<NC>& f, Sign sign, double mass, double sigma) {
  SigmaNormReport r;
  r.sigma = sigma;
  const ModeSeries<NC> s = mode_series(f);
  r.low = sk_norm_report(lp_restrict(s, 0), 0, sign, mass).aggregate;
  const int top = lp_top_index(f.lattice());
  double acc = 0.0;
  for (int k = 1; k <= top; ++k) {
    const ModeSeries<NC> pk = lp_restrict(s, k);
    const double v = pk.count() ? sk_norm_report(pk, k, sign, mass).aggregate : 0.0;
    r.shells.push_back(v);
    acc += std::pow(2.0, 2.0 * sigma * k) * v * v;
  }
  r.value = r.low + std::sqrt(acc);
  return r;
}

// ---------------------------------------------------------------------------
// kernel decay

struct KernelOptions {
  std::vector<double> sigmas = {0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0};
  double tail_from = 32.0;    // decay exponent fitted over sigma >= tail_from
  double h = 1.0 / 32.0;      // quadrature spacing in the rescaled cube variable
  double period = 2.0;        // rescaled quadrature box (cube support is 4/3)
  double refine_factor = 1.5; // refinement divides h by this
  int candidates = 3;
  double resolved_tol = 0.05;
  bool strict = true;
  Sign sign = Sign::plus;
};

struct KernelSample {
  double sigma = 0.0;  // 2^{2k'-k} |t|
  double t = 0.0;
  double sup_abs = 0.0;  // sup_x |K| / 2^{3k'}
  double ratio = 0.0;    // sup_abs (1 + sigma)
};

struct KernelReport {
  int k = 0, kp = 0;
  Vec3 n = Vec3::Zero();
  std::vector<KernelSample> profile;
  double constant = 0.0;
  double refined_constant = 0.0;
  double refinement_change = 0.0;
  bool resolved = false;
  double decay_exponent = 0.0;  // slope of log sup|K| against log t over the tail
  double support_measure = 0.0; // int rho_k^2 gamma^2 / 2^{3k'}
};

class QuadratureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

// The kernel after the substitutions xi = 2^k eta, eta = a + 2^j zeta with
// j = k' - k, a = 2^-k n. With sigma = 2^{2j} s the phase is
// sigma Q(zeta) + Y . zeta up to a term linear in zeta (a translation in x).
class KernelQuadrature {
 public:
  KernelQuadrature(int k, int kp, const Vec3& n, double h, double period)
      : j_(kp - k), a_(std::ldexp(1.0, -k) * n) {
    M_ = static_cast<int>(std::ceil(period / h));
    if (M_ % 2) ++M_;
    h_ = period / M_;
    period_ = period;
    const double m2 = std::ldexp(1.0, -2 * k);
    const double A = std::sqrt(a_.squaredNorm() + m2);
    const double sj = std::ldexp(1.0, j_);
    zeta_.resize(M_);
    for (int i = 0; i < M_; ++i) zeta_[i] = (i - M_ / 2) * h_;
    lo_ = M_, hi_ = -1;
    for (int i = 0; i < M_; ++i)
      if (cube_bump_1d(zeta_[i]) > 0.0) {
        lo_ = std::min(lo_, i);
        hi_ = std::max(hi_, i);
      }
    const int B = hi_ - lo_ + 1;
    w_.assign(static_cast<std::size_t>(B) * B * B, 0.0);
    Q_.assign(w_.size(), 0.0);
    for (int i1 = 0; i1 < B; ++i1)
      for (int i2 = 0; i2 < B; ++i2)
        for (int i3 = 0; i3 < B; ++i3) {
          const Vec3 z(zeta_[lo_ + i1], zeta_[lo_ + i2], zeta_[lo_ + i3]);
          const double g = cube_bump_1d(z(0)) * cube_bump_1d(z(1)) * cube_bump_1d(z(2));
          const Vec3 eta = a_ + sj * z;
          const double rho = lp_symbol(k, std::ldexp(eta.norm(), k));
          const std::size_t id = (static_cast<std::size_t>(i1) * B + i2) * B + i3;
          w_[id] = h_ * h_ * h_ * rho * rho * g * g;
          const double Bb = std::sqrt(eta.squaredNorm() + m2);
          const double az = a_.dot(z), zz = z.squaredNorm();
          Q_[id] = (zz * A - az * (2.0 * az + sj * zz) / (A + Bb)) / (A * (A + Bb));
        }
    B_ = B;
  }

  double support_integral() const {
    double s = 0.0;
    for (double v : w_) s += v;
    return s;
  }

  /// sup over Y of |int e^{i(sigma Q + Y.zeta)} w dzeta|.
  double sup_abs(double sigma, int candidates, Sign sign) const {
    const double sg = sgn(sign);
    const std::size_t MM = static_cast<std::size_t>(M_) * M_ * M_;
    AlignedCVec grid(MM, cd(0.0, 0.0));
    amp_.resize(w_.size());
    for (std::size_t id = 0; id < w_.size(); ++id) amp_[id] = w_[id] * std::exp(cd(0.0, sg * sigma * Q_[id]));
    for (int i1 = 0; i1 < B_; ++i1)
      for (int i2 = 0; i2 < B_; ++i2)
        for (int i3 = 0; i3 < B_; ++i3)
          grid[(static_cast<std::size_t>(lo_ + i1) * M_ + (lo_ + i2)) * M_ + (lo_ + i3)] =
              amp_[(static_cast<std::size_t>(i1) * B_ + i2) * B_ + i3];
    fft3_inplace(grid.data(), M_, FFTW_BACKWARD);
    // coarse local maxima
    std::vector<std::pair<double, std::size_t>> peaks;
    for (std::size_t id = 0; id < MM; ++id) peaks.push_back({std::abs(grid[id]), id});
    const int c = std::min<int>(candidates, static_cast<int>(MM));
    std::partial_sort(peaks.begin(), peaks.begin() + c, peaks.end(),
                      [](const auto& x, const auto& y) { return x.first > y.first; });
    double best = peaks[0].first;
    const double dy = 2.0 * M_PI / period_;
    for (int p = 0; p < c; ++p) {
      const std::size_t id = peaks[p].second;
      const int i1 = static_cast<int>(id / (static_cast<std::size_t>(M_) * M_));
      const int i2 = static_cast<int>((id / M_) % M_);
      const int i3 = static_cast<int>(id % M_);
      auto wrap = [&](int i) { return (i < M_ / 2 ? i : i - M_) * dy; };
      best = std::max(best, refine(Vec3(wrap(i1), wrap(i2), wrap(i3)), 0.5 * dy));
    }
    return best;
  }

  double eval(const Vec3& Y) const {
    std::vector<cd> e1(B_), e2(B_), e3(B_);
    for (int i = 0; i < B_; ++i) {
      const double z = zeta_[lo_ + i];
      e1[i] = std::exp(cd(0.0, Y(0) * z));
      e2[i] = std::exp(cd(0.0, Y(1) * z));
      e3[i] = std::exp(cd(0.0, Y(2) * z));
    }
    cd tot(0.0, 0.0);
    for (int i1 = 0; i1 < B_; ++i1) {
      cd s2(0.0, 0.0);
      for (int i2 = 0; i2 < B_; ++i2) {
        const cd* row = amp_.data() + (static_cast<std::size_t>(i1) * B_ + i2) * B_;
        cd s3(0.0, 0.0);
        for (int i3 = 0; i3 < B_; ++i3) s3 += row[i3] * e3[i3];
        s2 += s3 * e2[i2];
      }
      tot += s2 * e1[i1];
    }
    return std::abs(tot);
  }

 private:
  double refine(const Vec3& start, double step) const {
    const gsl_multimin_fminimizer_type* type = gsl_multimin_fminimizer_nmsimplex2;
    gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(type, 3);
    gsl_multimin_function fn;
    fn.n = 3;
    fn.params = const_cast<KernelQuadrature*>(this);
    fn.f = [](const gsl_vector* v, void* p) {
      auto* self = static_cast<const KernelQuadrature*>(p);
      return -self->eval(Vec3(gsl_vector_get(v, 0), gsl_vector_get(v, 1), gsl_vector_get(v, 2)));
    };
    gsl_vector* x = gsl_vector_alloc(3);
    gsl_vector* ss = gsl_vector_alloc(3);
    for (int d = 0; d < 3; ++d) {
      gsl_vector_set(x, d, start(d));
      gsl_vector_set(ss, d, step);
    }
    gsl_multimin_fminimizer_set(s, &fn, x, ss);
    for (int it = 0; it < 200; ++it) {
      if (gsl_multimin_fminimizer_iterate(s)) break;
      if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), 1e-3) == GSL_SUCCESS) break;
    }
    const double v = -gsl_multimin_fminimizer_minimum(s);
    gsl_vector_free(x);
    gsl_vector_free(ss);
    gsl_multimin_fminimizer_free(s);
    return v;
  }

  int j_;
  Vec3 a_;
  int M_ = 0, B_ = 0, lo_ = 0, hi_ = 0;
  double h_ = 0.0, period_ = 0.0;
  std::vector<double> zeta_, w_, Q_;
  mutable std::vector<cd> amp_;
};

}  // namespace detail

/// Cube centers n in 2^{k'} Z^3 used for sampling: the cube through the
/// peak of the shell along a fixed direction.
inline Vec3 kernel_cube_center(int k, int kp, const Vec3& direction) {
  const Vec3 d = direction.normalized();
  Vec3 n;
  for (int a = 0; a < 3; ++a) n(a) = std::ldexp(std::round(std::ldexp(d(a), k - kp)), kp);
  return n;
}

/// Measures sup_t sup_x |K_{k',k;n}(t,x)| (1 + 2^{2k'-k}|t|) / 2^{3k'} and
/// repeats the sup at refined quadrature.
inline KernelReport kernel_decay_check(int k, int kp, const Vec3& n, const KernelOptions& opt = {}) {
  if (k < 0 || kp < 0 || kp > k) throw std::invalid_argument("kernel_decay_check: need 0 <= k' <= k");
  cube_index(kp, n);  // throws unless n is in 2^{k'} Z^3
  if (opt.sigmas.empty()) throw std::invalid_argument("kernel_decay_check: empty time grid");
  KernelReport r;
  r.k = k;
  r.kp = kp;
  r.n = n;
  detail::KernelQuadrature base(k, kp, n, opt.h, opt.period);
  r.support_measure = base.support_integral();
  if (r.support_measure == 0.0)
    throw std::invalid_argument("kernel_decay_check: cube does not meet the frequency shell");
  std::size_t arg = 0;
  for (double sg : opt.sigmas) {
    KernelSample ks;
    ks.sigma = sg;
    ks.t = sg * std::ldexp(1.0, k - 2 * kp);
    ks.sup_abs = base.sup_abs(sg, opt.candidates, opt.sign);
    ks.ratio = ks.sup_abs * (1.0 + sg);
    if (ks.ratio > r.constant) {
      r.constant = ks.ratio;
      arg = r.profile.size();
    }
    r.profile.push_back(ks);
  }
  // refinement at the maximizing time and at the largest time
  detail::KernelQuadrature fine(k, kp, n, opt.h / opt.refine_factor, opt.period);
  double change = 0.0;
  for (std::size_t i : {arg, r.profile.size() - 1}) {
    const KernelSample& ks = r.profile[i];
    const double v = fine.sup_abs(ks.sigma, opt.candidates, opt.sign) * (1.0 + ks.sigma);
    change = std::max(change, std::abs(v - ks.ratio) / ks.ratio);
    if (i == arg) r.refined_constant = v;
  }
  r.refinement_change = change;
  r.resolved = change <= opt.resolved_tol;
  // tail slope
  std::vector<double> lx, ly;
  for (const auto& ks : r.profile)
    if (ks.sigma >= opt.tail_from && ks.sup_abs > 0.0) {
      lx.push_back(std::log(ks.sigma));
      ly.push_back(std::log(ks.sup_abs));
    }
  if (lx.size() >= 2) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) mx += lx[i], my += ly[i];
    mx /= lx.size();
    my /= ly.size();
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) sxy += (lx[i] - mx) * (ly[i] - my), sxx += (lx[i] - mx) * (lx[i] - mx);
    r.decay_exponent = sxy / sxx;
  }
  if (opt.strict && !r.resolved)
    throw QuadratureError("kernel quadrature unresolved at k=" + std::to_string(k) + ", k'=" + std::to_string(kp) +
                          ": refinement changed the constant by " + std::to_string(100.0 * change) + "%");
  return r;
}

// ---------------------------------------------------------------------------
// multiplier stability

struct StabilitySymbols {
  double p11 = 0.0, p12 = 0.0, p2 = 0.0;
};

/// Operator norms at xi of the three parts of 2[Pi_s(xi) - Pi_s(2^k omega)],
/// without cutoffs.
inline StabilitySymbols stability_symbols(Sign s, int k, const Vec3& omega, const Vec3& xi, double mass) {
  const Vec3 w = omega.normalized();
  const double r = xi.norm(), R = std::ldexp(1.0, k);
  const double bx = bracket(r, mass), bR = bracket(R, mass);
  Mat4 a11 = Mat4::Zero(), a12 = Mat4::Zero();
  for (int d = 0; d < 3; ++d) {
    a11 += ((r / bx - R / bR) * w(d)) * alpha(d + 1);
    if (r > 0.0) a12 += (r / bx * (xi(d) / r - w(d))) * alpha(d + 1);
  }
  const Mat4 a2 = (mass * (1.0 / bx - 1.0 / bR)) * beta();
  const double sg = sgn(s);
  return {op_norm(sg * a11), op_norm(sg * a12), op_norm(sg * a2)};
}

struct StabilityReport {
  int k = 0, l = 0;
  double sup_p11 = 0.0, sup_p12 = 0.0, sup_p2 = 0.0;
  double c11 = 0.0, c12 = 0.0, c2 = 0.0;  // sup * 2^k, sup * 2^l, sup * 2^k
  std::size_t samples = 0;
};

/// Widened cap cutoff: 1 within angle 2 * 2^-l of omega, 0 beyond 3 * 2^-l.
inline double widened_cap(int l, const Vec3& omega, const Vec3& xi) {
  const double r = std::ldexp(1.0, -l);
  const double th = angle(omega, xi);
  return 1.0 - smooth_step((th - 2.0 * r) / r);
}

/// Sweeps the support of the widened shell times widened cap around omega.
inline StabilityReport symbol_stability_check(Sign s, int k, int l, const Vec3& omega, double mass = 1.0,
                                              int n_r = 64, int n_theta = 32, int n_phi = 16) {
  if (k < 0) throw std::invalid_argument("symbol_stability_check: k must be nonnegative");
  if (l < 1 || l > k + 10) throw std::invalid_argument("symbol_stability_check: need 1 <= l <= k + 10");
  StabilityReport rep;
  rep.k = k;
  rep.l = l;
  const Vec3 w = omega.normalized();
  Vec3 e1 = w.unitOrthogonal(), e2 = w.cross(e1);
  const auto [lo, hi] = tilde_support(k);
  const double thmax = std::min(M_PI, 3.0 * std::ldexp(1.0, -l));
  for (int ir = 0; ir <= n_r; ++ir) {
    const double r = lo + (hi - lo) * ir / n_r;
    const double cut_r = lp_tilde_symbol(k, r);
    if (cut_r == 0.0) continue;
    for (int it = 0; it <= n_theta; ++it) {
      const double th = thmax * it / n_theta;
      for (int ip = 0; ip < (it == 0 ? 1 : n_phi); ++ip) {
        const double ph = 2.0 * M_PI * ip / n_phi;
        const Vec3 xi = r * (std::cos(th) * w + std::sin(th) * (std::cos(ph) * e1 + std::sin(ph) * e2));
        const double cut = cut_r * widened_cap(l, w, xi);
        if (cut == 0.0) continue;
        const StabilitySymbols v = stability_symbols(s, k, w, xi, mass);
        rep.sup_p11 = std::max(rep.sup_p11, cut * v.p11);
        rep.sup_p12 = std::max(rep.sup_p12, cut * v.p12);
        rep.sup_p2 = std::max(rep.sup_p2, cut * v.p2);
        ++rep.samples;
      }
    }
  }
  rep.c11 = std::ldexp(rep.sup_p11, k);
  rep.c12 = std::ldexp(rep.sup_p12, l);
  rep.c2 = std::ldexp(rep.sup_p2, k);
  return rep;
}

// ---------------------------------------------------------------------------
// random frequency-localized space-time fields

/// Window and lattice for the space-time harness. Fields are limited to
/// |a|_inf <= index_limit in lattice index and |m| <= tau_limit in
/// time-frequency index; with both at most (n - 1) / 3 the trilinear sum on
/// the grid is the exact integral over the periodic window. The default
/// spacing dk = 3.5 places shells k = 0..4 inside the index box of a 16^3
/// lattice.
struct SpaceTimeSetup {
  int n = 16;
  double L = 4.0 * M_PI / 7.0;
  int nt = 8;
  double T = M_PI / 2;
  int index_limit = 5;
  int tau_limit = 2;
  double dressing = 0.5;  // amplitude of random modulation dressing
  int dressing_modes = 2;
  int modes = 0;  // spatial modes per field; 0 keeps the whole shell

  void validate() const {
    if (n < 4 || nt < 2 || !(L > 0) || !(T > 0)) throw std::invalid_argument("space-time setup: bad grid");
    if (index_limit < 0 || index_limit >= n / 2) throw std::invalid_argument("space-time setup: index_limit out of range");
    if (tau_limit < 0 || tau_limit >= nt / 2) throw std::invalid_argument("space-time setup: tau_limit out of range");
    if (modes < 0) throw std::invalid_argument("space-time setup: modes must be nonnegative");
  }
  bool alias_free() const { return 3 * index_limit < n && 3 * tau_limit < nt; }
  double dk() const { return 2.0 * M_PI / L; }
  double dtau() const { return 2.0 * M_PI / T; }
};

/// Lattice indices inside the setup's index box where P_k is nonzero.
inline std::vector<std::size_t> shell_modes(const SpaceTimeSetup& st, const FrequencyLattice& lat, int k) {
  std::vector<std::size_t> out;
  for (std::size_t q = 0; q < lat.size(); ++q) {
    int i, j, l;
    lat.unravel(q, i, j, l);
    if (std::max({std::abs(lat.freq_index(i)), std::abs(lat.freq_index(j)), std::abs(lat.freq_index(l))}) >
        st.index_limit)
      continue;
    if (lp_symbol(k, lat.xi(q).norm()) > 0.0) out.push_back(q);
  }
  return out;
}

/// Shells are resolvable when the peak radius 2^k of P_k lies inside the
/// admissible index box and the shell carries at least one mode.
inline bool shell_resolvable(const SpaceTimeSetup& st, int k) {
  if (k < 0) return false;
  if (k >= 1 && std::ldexp(1.0, k) > st.dk() * st.index_limit + 1e-12) return false;
  for (int a = -st.index_limit; a <= st.index_limit; ++a)
    for (int b = -st.index_limit; b <= st.index_limit; ++b)
      for (int c = -st.index_limit; c <= st.index_limit; ++c)
        if (lp_symbol(k, st.dk() * std::sqrt(double(a * a + b * b + c * c))) > 0.0) return true;
  return false;
}

/// Random subset of size st.modes (all when st.modes is 0 or exceeds the pool).
inline std::vector<std::size_t> pick_modes(const SpaceTimeSetup& st, std::vector<std::size_t> pool, Rng& rng) {
  if (st.modes == 0 || static_cast<std::size_t>(st.modes) >= pool.size()) return pool;
  for (std::size_t i = 0; i < static_cast<std::size_t>(st.modes); ++i) {
    std::uniform_int_distribution<std::size_t> u(i, pool.size() - 1);
    std::swap(pool[i], pool[u(rng)]);
  }
  pool.resize(st.modes);
  std::sort(pool.begin(), pool.end());
  return pool;
}

/// A free wave of random P_k-localized data (projected by Pi_sign for
/// spinors), multiplied in time by 1 + random dressing, truncated to the
/// setup's time-frequency box and normalized to unit space-time L^2 norm.
/// The spatial support is `support` when given, else st.modes random shell
/// modes (or the whole shell).
template <int NC>
SpaceTimeField<NC> random_localized_field(const SpaceTimeSetup& st, int k, Sign sign, double mass, Rng& rng,
                                          const std::vector<std::size_t>* support = nullptr) {
  st.validate();
  if (!shell_resolvable(st, k)) throw std::invalid_argument("unresolvable shell k=" + std::to_string(k));
  auto lat = make_lattice(st.n, st.L);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> mshift(1, std::max(1, st.tau_limit / 2));
  std::vector<std::pair<int, cd>> dress;
  for (int r = 0; r < st.dressing_modes; ++r) {
    const int m = mshift(rng) * (g(rng) > 0 ? 1 : -1);
    dress.push_back({m, st.dressing * cd(g(rng), g(rng)) / std::sqrt(2.0)});
  }
  const std::vector<std::size_t> modes = support ? *support : pick_modes(st, shell_modes(st, *lat, k), rng);
  SpaceTimeField<NC> f(lat, st.nt, st.T);
  std::vector<std::pair<std::size_t, Eigen::Matrix<cd, NC, 1>>> data;
  for (std::size_t q : modes) {
    const Vec3 xi = lat->xi(q);
    const double w = lp_symbol(k, xi.norm());
    if (w == 0.0) continue;
    Eigen::Matrix<cd, NC, 1> v;
    for (int c = 0; c < NC; ++c) v(c) = cd(g(rng), g(rng));
    if constexpr (NC == 4) v = projector(sign, mass, xi) * v;
    data.push_back({q, w * v});
  }
  for (int i = 0; i < st.nt; ++i) {
    const double t = f.time(i);
    cd d(1.0, 0.0);
    for (const auto& [m, c] : dress) d += c * std::exp(cd(0.0, m * st.dtau() * t));
    Field<NC>& sl = f.slice(i);
    sl.relabel(Rep::fourier);
    sl.set_zero();
    for (const auto& [q, v] : data) {
      const cd ph = d * std::exp(cd(0.0, -sgn(sign) * bracket(lat->xi(q), mass) * t));
      for (int c = 0; c < NC; ++c) sl.at(c, q) = v(c) * ph;
    }
  }
  // time truncation
  for (int i = 0; i < st.nt; ++i) f.slice(i).fft_inverse();
  f.to_fourier();
  for (int m = 0; m < st.nt; ++m)
    if (std::abs(f.tau_index(m)) > st.tau_limit) f.slice(m).set_zero();
  f.to_physical();
  const double nrm = f.l2_norm();
  if (nrm > 0.0) f *= cd(1.0 / nrm, 0.0);
  return f;
}

/// int phi <psi1, beta psi2> dx dt with <u, v> = sum_c u_c conj(v_c), by the
/// space-time grid sum.
inline cd trilinear_integral(const SpaceTimeField<1>& phi, const SpaceTimeField<4>& psi1,
                             const SpaceTimeField<4>& psi2) {
  if (phi.nt() != psi1.nt() || phi.nt() != psi2.nt() || phi.window() != psi1.window() ||
      phi.window() != psi2.window())
    throw std::invalid_argument("trilinear_integral: window mismatch");
  const double h3 = phi.lattice().cell_volume();
  cd acc(0.0, 0.0);
  for (int i = 0; i < phi.nt(); ++i) {
    const ScalarField a = phi.slice(i).as(Rep::physical);
    const SpinorField b = psi1.slice(i).as(Rep::physical);
    const SpinorField c = psi2.slice(i).as(Rep::physical);
    for (std::size_t x = 0; x < a.points(); ++x) {
      // beta = diag(1, 1, -1, -1)
      const cd bil = b.at(0, x) * std::conj(c.at(0, x)) + b.at(1, x) * std::conj(c.at(1, x)) -
                     b.at(2, x) * std::conj(c.at(2, x)) - b.at(3, x) * std::conj(c.at(3, x));
      acc += a.at(0, x) * bil;
    }
  }
  return acc * h3 * phi.dt();
}

// ---------------------------------------------------------------------------
// dyadic weight and summation condition

constexpr int kSimGap = 2;  // max ~ med means max - med <= kSimGap

inline bool max_sim_med(int k, int k1, int k2) {
  std::array<int, 3> v{k, k1, k2};
  std::sort(v.begin(), v.end());
  return v[2] - v[1] <= kSimGap;
}

inline double jbracket(double x) { return std::sqrt(1.0 + x * x); }

/// G(k, k1, k2) = 2^{k/2} <min>^3 2^{-(max - min)/6}.
inline double g_weight(int k, int k1, int k2) {
  if (k < 0 || k1 < 0 || k2 < 0) throw std::invalid_argument("g_weight: indices must be nonnegative");
  const int mn = std::min({k, k1, k2}), mx = std::max({k, k1, k2});
  return std::pow(2.0, 0.5 * k) * std::pow(jbracket(mn), 3) * std::pow(2.0, -(mx - mn) / 6.0);
}

/// Summand weight G / (2^{k/2} (min + 1)^10).
inline double g_kernel(int k, int k1, int k2) {
  const int mn = std::min({k, k1, k2});
  return g_weight(k, k1, k2) / (std::pow(2.0, 0.5 * k) * std::pow(mn + 1.0, 10));
}

struct GSumResult {
  double lhs = 0.0;
  double norms = 0.0;  // ||a|| ||b|| ||c||
  double ratio = 0.0;
};

inline GSumResult g_summation(const std::vector<double>& a, const std::vector<double>& b, const std::vector<double>& c) {
  for (const auto* v : {&a, &b, &c})
    for (double x : *v)
      if (x < 0.0 || !std::isfinite(x)) throw std::invalid_argument("g_summation: sequences must be finite and nonnegative");
  GSumResult r;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k] == 0.0) continue;
    for (std::size_t k1 = 0; k1 < b.size(); ++k1) {
      if (b[k1] == 0.0) continue;
      for (std::size_t k2 = 0; k2 < c.size(); ++k2) {
        if (c[k2] == 0.0 || !max_sim_med(int(k), int(k1), int(k2))) continue;
        r.lhs += g_kernel(int(k), int(k1), int(k2)) * a[k] * b[k1] * c[k2];
      }
    }
  }
  auto nrm = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  };
  r.norms = nrm(a) * nrm(b) * nrm(c);
  r.ratio = r.norms > 0.0 ? r.lhs / r.norms : 0.0;
  return r;
}

/// (sum of squared summand weights)^{1/2}: by Cauchy-Schwarz an upper bound
/// for every summation ratio.
inline double g_hilbert_schmidt(int kmax) {
  double s = 0.0;
  for (int k = 0; k <= kmax; ++k)
    for (int k1 = 0; k1 <= kmax; ++k1)
      for (int k2 = 0; k2 <= kmax; ++k2)
        if (max_sim_med(k, k1, k2)) s += std::pow(g_kernel(k, k1, k2), 2);
  return std::sqrt(s);
}

/// Lower bound for the norm of the trilinear form by alternating
/// maximization over nonnegative unit sequences.
inline double g_form_norm(int kmax, int iterations = 200) {
  const int n = kmax + 1;
  std::vector<double> a(n, 1.0 / std::sqrt(n)), b = a, c = a;
  double val = 0.0;
  auto normalize = [](std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    s = std::sqrt(s);
    if (s > 0) for (double& x : v) x /= s;
  };
  for (int it = 0; it < iterations; ++it) {
    std::vector<double> na(n, 0.0), nb(n, 0.0), nc(n, 0.0);
    for (int k = 0; k < n; ++k)
      for (int k1 = 0; k1 < n; ++k1)
        for (int k2 = 0; k2 < n; ++k2)
          if (max_sim_med(k, k1, k2)) na[k] += g_kernel(k, k1, k2) * b[k1] * c[k2];
    a = na;
    normalize(a);
    for (int k = 0; k < n; ++k)
      for (int k1 = 0; k1 < n; ++k1)
        for (int k2 = 0; k2 < n; ++k2)
          if (max_sim_med(k, k1, k2)) nb[k1] += g_kernel(k, k1, k2) * a[k] * c[k2];
    b = nb;
    normalize(b);
    for (int k = 0; k < n; ++k)
      for (int k1 = 0; k1 < n; ++k1)
        for (int k2 = 0; k2 < n; ++k2)
          if (max_sim_med(k, k1, k2)) nc[k2] += g_kernel(k, k1, k2) * a[k] * b[k1];
    c = nc;
    normalize(c);
    val = g_summation(a, b, c).ratio;
  }
  return val;
}

struct GCheckReport {
  int kmax = 64;
  int triples = 0;
  double max_ratio = 0.0;
  double hilbert_schmidt = 0.0;
  double form_norm = 0.0;
  std::vector<double> ratios;
};

/// Ratios for random nonnegative l^2 sequences: a third exponentially
/// decaying with random rate, a third sparse spikes, a third dense noise.
inline GCheckReport g_summation_check(int kmax = 64, int triples = 100, std::uint64_t seed = 1) {
  if (kmax < 0 || triples < 1) throw std::invalid_argument("g_summation_check: bad parameters");
  GCheckReport r;
  r.kmax = kmax;
  r.triples = triples;
  r.hilbert_schmidt = g_hilbert_schmidt(kmax);
  r.form_norm = g_form_norm(kmax);
  for (int t = 0; t < triples; ++t) {
    Rng rng(shard_seed(seed, t));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto draw = [&]() {
      std::vector<double> v(kmax + 1, 0.0);
      switch (t % 3) {
        case 0: {
          const double rate = 0.05 + 0.5 * u(rng);
          for (int k = 0; k <= kmax; ++k) v[k] = std::pow(2.0, -rate * k) * u(rng);
          break;
        }
        case 1:
          for (int s = 0; s < 3; ++s) v[static_cast<int>(u(rng) * (kmax + 1)) % (kmax + 1)] += u(rng);
          break;
        default:
          for (int k = 0; k <= kmax; ++k) v[k] = u(rng);
      }
      return v;
    };
    auto a = draw(), b = draw(), c = draw();
    const double q = g_summation(a, b, c).ratio;
    r.ratios.push_back(q);
    r.max_ratio = std::max(r.max_ratio, q);
  }
  return r;
}

// ---------------------------------------------------------------------------
// trilinear harness

/// Harness defaults: 16^3 lattice with dk = 3.5, eight time samples on a
/// window of length pi/2, 24 spatial modes per field.
inline SpaceTimeSetup trilinear_setup() {
  SpaceTimeSetup st;
  st.modes = 24;
  return st;
}

struct TrilinearOptions {
  int trials = 50;
  std::uint64_t seed = 1;
  SpaceTimeSetup setup = trilinear_setup();
  MassParams masses;
};

struct TrilinearTriple {
  int k = 0, k1 = 0, k2 = 0;
  Sign s1 = Sign::plus, s2 = Sign::plus;
  double g = 0.0;
  double max_ratio = 0.0;
  double max_abs_integral = 0.0;
  int nonzero = 0;  // trials with a nonzero integral
  std::vector<double> ratios;
};

namespace detail {

struct TrilinearPool {
  std::map<int, std::unique_ptr<SpaceTimeField<1>>> phi;
  std::map<std::pair<int, int>, std::unique_ptr<SpaceTimeField<4>>> psi;  // (k, sign)
  std::map<int, double> phi_norm;
  std::map<std::pair<int, int>, double> psi_norm;
};

// One trial: the spinor fields of shell k (both signs) share a random
// support; the scalar support of shell k is drawn from the differences
// xi2 - xi1 of spinor supports that can pair with it, so the integrals see
// the convolution constraint.
inline TrilinearPool build_pool(const std::vector<int>& ks, const TrilinearOptions& opt, int trial) {
  const SpaceTimeSetup& st = opt.setup;
  auto lat = make_lattice(st.n, st.L);
  const std::uint64_t base = shard_seed(opt.seed, static_cast<std::uint64_t>(trial));
  std::map<int, std::vector<std::size_t>> supp;
  for (int k : ks) {
    Rng rng(shard_seed(base, 100 + k));
    supp[k] = pick_modes(st, shell_modes(st, *lat, k), rng);
  }
  TrilinearPool pool;
  for (int k : ks) {
    std::vector<std::size_t> diffs;
    for (int k1 : ks)
      for (int k2 : ks) {
        if (!max_sim_med(k, k1, k2)) continue;
        for (std::size_t q1 : supp[k1])
          for (std::size_t q2 : supp[k2]) {
            int i1, j1, l1, i2, j2, l2;
            lat->unravel(q1, i1, j1, l1);
            lat->unravel(q2, i2, j2, l2);
            const int a = lat->freq_index(i2) - lat->freq_index(i1), b = lat->freq_index(j2) - lat->freq_index(j1),
                      c = lat->freq_index(l2) - lat->freq_index(l1);
            if (std::max({std::abs(a), std::abs(b), std::abs(c)}) > st.index_limit) continue;
            const std::size_t q = lat->linear(lat->wrap(a), lat->wrap(b), lat->wrap(c));
            if (lp_symbol(k, lat->xi(q).norm()) > 0.0) diffs.push_back(q);
          }
      }
    std::sort(diffs.begin(), diffs.end());
    diffs.erase(std::unique(diffs.begin(), diffs.end()), diffs.end());
    Rng rng(shard_seed(base, 200 + k));
    std::vector<std::size_t> sp = diffs.empty() ? supp[k] : pick_modes(st, diffs, rng);
    if (sp.empty()) sp = pick_modes(st, shell_modes(st, *lat, k), rng);
    pool.phi[k] = std::make_unique<SpaceTimeField<1>>(
        random_localized_field<1>(st, k, Sign::plus, opt.masses.m, rng, &sp));
    pool.phi_norm[k] = sk_norm(*pool.phi[k], k, Sign::plus, opt.masses.m);
    for (Sign s : {Sign::plus, Sign::minus}) {
      Rng r2(shard_seed(base, 300 + 2 * k + (s == Sign::minus)));
      auto f = std::make_unique<SpaceTimeField<4>>(random_localized_field<4>(st, k, s, opt.masses.M, r2, &supp[k]));
      pool.psi_norm[{k, sgn(s)}] = sk_norm(*f, k, s, opt.masses.M);
      pool.psi[{k, sgn(s)}] = std::move(f);
    }
  }
  return pool;
}

}  // namespace detail

/// Every (k, k1, k2, s1, s2) with entries in ks and max ~ med (or the listed
/// triples), measured on the same per-trial fields. Each trial depends only
/// on (seed, trial, ks).
inline std::vector<TrilinearTriple> trilinear_sweep(const std::vector<int>& ks,
                                                    const std::vector<std::pair<Sign, Sign>>& signs,
                                                    const TrilinearOptions& opt,
                                                    const std::vector<std::array<int, 3>>& only = {}) {
  opt.setup.validate();
  if (!opt.setup.alias_free()) throw std::invalid_argument("trilinear: setup is not alias free");
  if (opt.trials < 1) throw std::invalid_argument("trilinear: need at least one trial");
  for (int k : ks)
    if (!shell_resolvable(opt.setup, k)) throw std::invalid_argument("unresolvable shell k=" + std::to_string(k));
  std::vector<TrilinearTriple> out;
  auto wanted = [&](int k, int k1, int k2) {
    if (only.empty()) return max_sim_med(k, k1, k2);
    for (const auto& t : only)
      if (t[0] == k && t[1] == k1 && t[2] == k2) return true;
    return false;
  };
  for (int k : ks)
    for (int k1 : ks)
      for (int k2 : ks)
        if (wanted(k, k1, k2))
          for (const auto& [s1, s2] : signs) {
            TrilinearTriple t;
            t.k = k, t.k1 = k1, t.k2 = k2, t.s1 = s1, t.s2 = s2;
            t.g = g_weight(k, k1, k2);
            out.push_back(t);
          }
  for (int trial = 0; trial < opt.trials; ++trial) {
    const detail::TrilinearPool pool = detail::build_pool(ks, opt, trial);
    for (auto& t : out) {
      const auto& a = *pool.phi.at(t.k);
      const auto& b = *pool.psi.at({t.k1, sgn(t.s1)});
      const auto& c = *pool.psi.at({t.k2, sgn(t.s2)});
      const double I = std::abs(trilinear_integral(a, b, c));
      const double den = t.g * pool.phi_norm.at(t.k) * pool.psi_norm.at({t.k1, sgn(t.s1)}) *
                         pool.psi_norm.at({t.k2, sgn(t.s2)});
      const double ratio = I / den;
      t.ratios.push_back(ratio);
      t.max_ratio = std::max(t.max_ratio, ratio);
      t.max_abs_integral = std::max(t.max_abs_integral, I);
      if (I > 1e-12 * den) ++t.nonzero;
    }
  }
  return out;
}

inline TrilinearTriple trilinear_ratio(int k, int k1, int k2, Sign s1, Sign s2, const TrilinearOptions& opt) {
  std::vector<int> ks{k};
  for (int v : {k1, k2})
    if (std::find(ks.begin(), ks.end(), v) == ks.end()) ks.push_back(v);
  std::sort(ks.begin(), ks.end());
  return trilinear_sweep(ks, {{s1, s2}}, opt, {{k, k1, k2}}).at(0);
}

// ---------------------------------------------------------------------------
// sparse space-time spectra

/// Trigonometric polynomial sum_e v_e exp(i (tau_e t + xi_e . x)) with
/// tau_e = m_e dtau and xi_e = dk a_e on the window [0, T) x [0, L)^3.
template <int NC>
struct SparseSpectrum {
  struct Entry {
    long long m = 0;
    std::array<int, 3> a{};
    Eigen::Matrix<cd, NC, 1> v;
  };
  double dk = 1.0, dtau = 1.0;
  std::vector<Entry> entries;

  double period() const { return 2.0 * M_PI / dtau; }
  double box() const { return 2.0 * M_PI / dk; }
  Vec3 xi(const Entry& e) const { return dk * Vec3(e.a[0], e.a[1], e.a[2]); }
  double tau(const Entry& e) const { return dtau * static_cast<double>(e.m); }
  double l2_norm() const {
    double s = 0.0;
    for (const auto& e : entries) s += e.v.squaredNorm();
    return std::sqrt(s * period() * std::pow(box(), 3));
  }
};

namespace detail {
struct ZetaKey {
  long long m;
  int a0, a1, a2;
  bool operator==(const ZetaKey& o) const { return m == o.m && a0 == o.a0 && a1 == o.a1 && a2 == o.a2; }
};
struct ZetaHash {
  std::size_t operator()(const ZetaKey& z) const {
    std::uint64_t h = static_cast<std::uint64_t>(z.m) * 0x9e3779b97f4a7c15ULL;
    h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(z.a0)) * 0xbf58476d1ce4e5b9ULL;
    h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(z.a1)) * 0x94d049bb133111ebULL;
    h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(z.a2)) * 0x2545f4914f6cdd1dULL;
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};
}  // namespace detail

/// Exact int phi <u1, beta u2> dx dt over one period: only triples with
/// zeta_phi = zeta_2 - zeta_1 contribute.
inline cd sparse_trilinear(const SparseSpectrum<1>& phi, const SparseSpectrum<4>& u1, const SparseSpectrum<4>& u2) {
  if (phi.dk != u1.dk || phi.dk != u2.dk || phi.dtau != u1.dtau || phi.dtau != u2.dtau)
    throw std::invalid_argument("sparse_trilinear: spectra live on different lattices");
  std::unordered_map<detail::ZetaKey, cd, detail::ZetaHash> table;
  for (const auto& e : phi.entries) table[{e.m, e.a[0], e.a[1], e.a[2]}] += e.v(0);
  const Mat4 B = beta();
  cd acc(0.0, 0.0);
  for (const auto& e1 : u1.entries)
    for (const auto& e2 : u2.entries) {
      auto it = table.find({e2.m - e1.m, e2.a[0] - e1.a[0], e2.a[1] - e1.a[1], e2.a[2] - e1.a[2]});
      if (it == table.end()) continue;
      const Spinor bv = B * e2.v;
      cd pair(0.0, 0.0);
      for (int c = 0; c < 4; ++c) pair += e1.v(c) * std::conj(bv(c));
      acc += it->second * pair;
    }
  return acc * phi.period() * std::pow(phi.box(), 3);
}

/// Random spinor spectrum on the shell band of k and the modulation band of
/// j around tau = -s <xi>_mass, projected by Pi_s.
inline SparseSpectrum<4> random_band_spectrum(int k, int j, Sign s, double mass, double dk, double dtau, int count, Rng& rng) {
  SparseSpectrum<4> out;
  out.dk = dk;
  out.dtau = dtau;
  const auto [r0, r1] = shell_band(k);
  const auto [b0, b1] = modulation_band(j);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int amax = static_cast<int>(std::ceil(r1 / dk));
  for (int tries = 0; static_cast<int>(out.entries.size()) < count && tries < 200 * count; ++tries) {
    std::array<int, 3> a;
    for (int d = 0; d < 3; ++d) a[d] = static_cast<int>(std::floor((2 * u(rng) - 1) * (amax + 1)));
    const Vec3 xi = dk * Vec3(a[0], a[1], a[2]);
    const double r = xi.norm();
    if (!(r > r0 && r < r1)) continue;
    const double lam = (b0 + (b1 - b0) * u(rng)) * (u(rng) < 0.5 ? -1.0 : 1.0);
    const double tau = lam - sgn(s) * bracket(r, mass);
    const long long m = std::llround(tau / dtau);
    const double mod = std::abs(m * dtau + sgn(s) * bracket(r, mass));
    if (!(mod > b0 && mod < b1)) continue;
    SparseSpectrum<4>::Entry e;
    e.m = m;
    e.a = a;
    e.v = projector(s, mass, xi) * random_spinor(rng);
    out.entries.push_back(e);
  }
  return out;
}

/// Scalar spectrum holding every difference zeta_2 - zeta_1 that lies in the
/// shell band of k and the modulation band of j for the + sign.
inline SparseSpectrum<1> difference_spectrum(const SparseSpectrum<4>& u1, const SparseSpectrum<4>& u2, int k, int j,
                                             double mass, Rng& rng) {
  SparseSpectrum<1> out;
  out.dk = u1.dk;
  out.dtau = u1.dtau;
  const auto [r0, r1] = shell_band(k);
  const auto [b0, b1] = modulation_band(j);
  std::normal_distribution<double> g(0.0, 1.0);
  std::unordered_map<detail::ZetaKey, std::size_t, detail::ZetaHash> seen;
  for (const auto& e1 : u1.entries)
    for (const auto& e2 : u2.entries) {
      SparseSpectrum<1>::Entry e;
      e.m = e2.m - e1.m;
      for (int d = 0; d < 3; ++d) e.a[d] = e2.a[d] - e1.a[d];
      const Vec3 xi = out.xi(e);
      const double r = xi.norm();
      if (!(r > r0 && r < r1)) continue;
      const double mod = std::abs(out.tau(e) + bracket(r, mass));
      if (!(mod > b0 && mod < b1)) continue;
      detail::ZetaKey key{e.m, e.a[0], e.a[1], e.a[2]};
      if (seen.count(key)) continue;
      seen[key] = out.entries.size();
      e.v(0) = cd(g(rng), g(rng));
      out.entries.push_back(e);
    }
  return out;
}

struct VanishingTrial {
  std::size_t phi_entries = 0;
  double integral = 0.0;
  double norms = 0.0;  // product of L^2 norms
  double relative = 0.0;
};

/// Builds u1, u2 in their bands and phi from all admissible differences,
/// then evaluates the integral exactly.
inline VanishingTrial sparse_vanishing_trial(int k, int k1, int k2, int j, int j1, int j2, Sign s1, Sign s2, double M,
                                             double m, int count, std::uint64_t seed) {
  Rng rng(seed);
  const int jmin = std::min({j, j1, j2});
  const double dtau = std::ldexp(1.0, jmin) / 16.0;
  const double dk = std::ldexp(1.0, std::min({k, k1, k2})) / 8.0;
  auto u1 = random_band_spectrum(k1, j1, s1, M, dk, dtau, count, rng);
  auto u2 = random_band_spectrum(k2, j2, s2, M, dk, dtau, count, rng);
  auto ph = difference_spectrum(u1, u2, k, j, m, rng);
  VanishingTrial r;
  r.phi_entries = ph.entries.size();
  r.integral = std::abs(sparse_trilinear(ph, u1, u2));
  r.norms = ph.l2_norm() * u1.l2_norm() * u2.l2_norm();
  r.relative = r.norms > 0.0 ? r.integral / r.norms : 0.0;
  return r;
}

// ---------------------------------------------------------------------------
// disposability

enum class DisposabilityRegime { uniform, log_loss };

inline const char* to_string(DisposabilityRegime r) { return r == DisposabilityRegime::uniform ? "uniform" : "log"; }

constexpr int kLogSlack = 2;  // j >= -k' - kLogSlack counts as j succeq -k'

struct DisposabilityReport {
  int k = 0, kp = 0, l = 0, j = 0;
  DisposabilityRegime regime = DisposabilityRegime::uniform;
  double ratio_le = 0.0;       // max over trials, Q_{<=j}
  double ratio_gt = 0.0;       // max over trials, Q_{>j}
  double ratio = 0.0;          // max of the two
  double normalized = 0.0;     // ratio / <k'> in the log regime, ratio otherwise
  double relative_to_f = 0.0;  // max localized(Q_{<=j} f) / localized(f)
  std::vector<double> sk_norms;
};

template <int NC>
double weighted_localized(const ModeSeries<NC>& s, int k, int l, int kp) {
  const PieceNorms v = localized_strichartz_pair(s, k, l, kp);
  return NormReport::weight(k, kp, 3) * v.l3l6 + NormReport::weight(k, kp, 6) * v.l6l3;
}

/// Localized norms of Q_{<=j} f and Q_{>j} f against ||f||_{S_k} for random
/// P_k-localized spinor fields of the given sign.
inline DisposabilityReport disposability_check(int k, int kp, int l, int j, Sign sign, const SpaceTimeSetup& st,
                                               int trials = 3, std::uint64_t seed = 1, double mass = 1.0) {
  if (kp < 0 || kp > k || l < 0 || l > k) throw std::invalid_argument("disposability_check: need 0 <= k', l <= k");
  DisposabilityReport r;
  r.k = k, r.kp = kp, r.l = l, r.j = j;
  if (j >= 2 * kp - k) r.regime = DisposabilityRegime::uniform;
  else if (j >= -kp - kLogSlack) r.regime = DisposabilityRegime::log_loss;
  else throw std::invalid_argument("disposability_check: j=" + std::to_string(j) + " is below both regimes for k'=" +
                                   std::to_string(kp));
  if (j < lowest_resolvable_j(st.T)) throw std::invalid_argument("disposability_check: window does not resolve 2^j");
  for (int t = 0; t < trials; ++t) {
    Rng rng(shard_seed(seed, t));
    const auto f = random_localized_field<4>(st, k, sign, mass, rng);
    const auto sf = mode_series(f);
    const double sk = sk_norm_report(sf, k, sign, mass).aggregate;
    r.sk_norms.push_back(sk);
    const auto le = modulation_project(f, sign, mass, ModulationRange::le(j));
    const auto gt = modulation_project(f, sign, mass, ModulationRange::gt(j));
    const double vle = weighted_localized(mode_series(le), k, l, kp);
    const double vgt = weighted_localized(mode_series(gt), k, l, kp);
    const double vf = weighted_localized(sf, k, l, kp);
    r.ratio_le = std::max(r.ratio_le, vle / sk);
    r.ratio_gt = std::max(r.ratio_gt, vgt / sk);
    if (vf > 0.0) r.relative_to_f = std::max(r.relative_to_f, vle / vf);
  }
  r.ratio = std::max(r.ratio_le, r.ratio_gt);
  r.normalized = r.regime == DisposabilityRegime::log_loss ? r.ratio / jbracket(kp) : r.ratio;
  return r;
}

}  // namespace dkg
