#pragma once

// Resonance function of the half-wave interaction, sampled certification of
// its lower bounds, and the support-emptiness checker for modulation and
// cap constraints.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <gsl/gsl_multimin.h>

#include "dkg/decomposition.hpp"
#include "dkg/dirac_algebra.hpp"
#include "dkg/lattice.hpp"
#include "dkg/random.hpp"

namespace dkg {

/// mu^{s1,s2}(xi1, xi2) = <xi1 - xi2>_m + s1 <xi1>_M - s2 <xi2>_M.
inline double mu(Sign s1, Sign s2, const Vec3& xi1, const Vec3& xi2, const MassParams& ms) {
  return bracket(xi1 - xi2, ms.m) + sgn(s1) * bracket(xi1, ms.M) - sgn(s2) * bracket(xi2, ms.M);
}

/// Same function in reduced variables: radii and the angle between xi1 and xi2.
inline double mu_reduced(Sign s1, Sign s2, double r1, double r2, double theta, const MassParams& ms) {
  const double d2 = std::max(0.0, r1 * r1 + r2 * r2 - 2.0 * r1 * r2 * std::cos(theta));
  return std::sqrt(ms.m * ms.m + d2) + sgn(s1) * bracket(r1, ms.M) - sgn(s2) * bracket(r2, ms.M);
}

/// Residual of <a>_M <b>_M - (|a||b| + M^2) = M^2 (|a|-|b|)^2 / (<a>_M <b>_M + |a||b| + M^2),
/// relative to the size <a>_M <b>_M of the cancelling terms.
inline double check_d_identity(const Vec3& xi1, const Vec3& xi2, double M) {
  const long double a = xi1.norm(), b = xi2.norm();
  const long double ba = std::sqrt(static_cast<long double>(M) * M + a * a);
  const long double bb = std::sqrt(static_cast<long double>(M) * M + b * b);
  const long double m2 = static_cast<long double>(M) * M;
  const long double lhs = ba * bb - (a * b + m2);
  const long double rhs = m2 * (a - b) * (a - b) / (ba * bb + a * b + m2);
  const long double scale = std::max<long double>(ba * bb, 1e-300L);
  return static_cast<double>(std::abs(lhs - rhs) / scale);
}

// ---------------------------------------------------------------------------
// case labels and bound ratios

enum class ResonanceCase { c1a, c1b, c2a, c2b };

inline const char* to_string(ResonanceCase c) {
  switch (c) {
    case ResonanceCase::c1a: return "1a";
    case ResonanceCase::c1b: return "1b";
    case ResonanceCase::c2a: return "2a";
    case ResonanceCase::c2b: return "2b";
  }
  return "?";
}

/// "much less than" with the 2^-10 convention.
constexpr double kMuchLess = 1.0 / 1024.0;

inline ResonanceCase classify(Sign s1, Sign s2, const Vec3& xi1, const Vec3& xi2, const MassParams& ms) {
  if (s1 == Sign::plus && s2 == Sign::minus) return ResonanceCase::c1a;
  if (s1 == s2) return ResonanceCase::c2a;
  const double lhs = bracket(xi1 - xi2, ms.m);
  const double rhs = std::min(bracket(xi1, ms.M), bracket(xi2, ms.M));
  return lhs <= kMuchLess * rhs ? ResonanceCase::c1b : ResonanceCase::c2b;
}

inline bool is_case1(ResonanceCase c) { return c == ResonanceCase::c1a || c == ResonanceCase::c1b; }

enum class Bound { high_mod = 0, mod_angle = 1, gen_lb = 2, non_res = 3 };
constexpr int kBounds = 4;
inline const char* to_string(Bound b) {
  switch (b) {
    case Bound::high_mod: return "high_mod";
    case Bound::mod_angle: return "mod_angle";
    case Bound::gen_lb: return "gen_lb";
    case Bound::non_res: return "non_res";
  }
  return "?";
}

struct ResonanceSample {
  Sign s1 = Sign::plus, s2 = Sign::plus;
  Vec3 xi1 = Vec3::Zero(), xi2 = Vec3::Zero();
  double mu = 0.0;
  double angle = std::numeric_limits<double>::quiet_NaN();  // angle(s1 xi1, s2 xi2)
  ResonanceCase label = ResonanceCase::c2a;
  /// |mu| / rhs per bound; +inf when the bound does not apply or its rhs vanishes.
  std::array<double, kBounds> ratio{};
};

inline ResonanceSample evaluate_sample(Sign s1, Sign s2, const Vec3& xi1, const Vec3& xi2, const MassParams& ms) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  ResonanceSample r;
  r.s1 = s1;
  r.s2 = s2;
  r.xi1 = xi1;
  r.xi2 = xi2;
  r.mu = mu(s1, s2, xi1, xi2, ms);
  r.label = classify(s1, s2, xi1, xi2, ms);
  const double a = std::abs(r.mu);
  const double b1 = bracket(xi1, 1.0), b2 = bracket(xi2, 1.0), b12 = bracket(xi1 - xi2, 1.0);
  r.ratio.fill(inf);
  if (is_case1(r.label)) r.ratio[0] = a / std::max({b12, b1, b2});
  r.ratio[3] = a * std::min({b12, b1, b2});
  if (xi1.squaredNorm() > 0.0 && xi2.squaredNorm() > 0.0) {
    r.angle = angle(sgn(s1) * xi1, sgn(s2) * xi2);
    const double th2 = r.angle * r.angle;
    if (th2 > 0.0) {
      if (!is_case1(r.label)) r.ratio[1] = a / (b1 * b2 / b12 * th2);
      r.ratio[2] = a / (std::min(b1, b2) * th2);
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// certification

struct BoundCertificate {
  double infimum = std::numeric_limits<double>::infinity();
  std::optional<ResonanceSample> worst;
  std::size_t applicable = 0;
};

struct CertifyReport {
  MassParams masses;
  std::size_t samples = 0;
  /// Indexed [sign pair][bound]; sign pair index = 2*(s1==minus) + (s2==minus).
  std::array<std::array<BoundCertificate, kBounds>, 4> per_pair;
  std::array<BoundCertificate, kBounds> overall;

  bool all_positive() const {
    for (const auto& c : overall)
      if (c.applicable > 0 && !(c.infimum > 0.0)) return false;
    return true;
  }
};

inline int sign_pair_index(Sign s1, Sign s2) {
  return 2 * (s1 == Sign::minus ? 1 : 0) + (s2 == Sign::minus ? 1 : 0);
}
inline std::pair<Sign, Sign> sign_pair(int idx) {
  return {idx / 2 ? Sign::minus : Sign::plus, idx % 2 ? Sign::minus : Sign::plus};
}

/// Draws (xi1, xi2); may return zero vectors.
using PairSampler = std::function<std::pair<Vec3, Vec3>(Rng&)>;

/// Radii log-uniform on [2^-6, 2^12], directions uniform.
inline PairSampler default_pair_sampler() {
  return [](Rng& rng) {
    const double lo = std::ldexp(1.0, -6), hi = std::ldexp(1.0, 12);
    return std::make_pair(random_log_vector(rng, lo, hi), random_log_vector(rng, lo, hi));
  };
}

struct CertifyOptions {
  std::size_t samples = 100000;
  std::uint64_t seed = 1;
  int shards = 16;
  unsigned threads = 0;  // 0: hardware concurrency
  int refine_top = 16;   // Nelder-Mead restarts per (pair, bound)
  double log_r_min = std::log(std::ldexp(1.0, -6));
  double log_r_max = std::log(std::ldexp(1.0, 12));
  std::vector<int> pairs = {0, 1, 2, 3};
  bool probes = true;  // deterministic low-frequency and collinear probes
};

namespace detail {

inline void absorb(BoundCertificate& c, const ResonanceSample& s, double v) {
  if (!std::isfinite(v)) return;
  ++c.applicable;
  if (v < c.infimum) {
    c.infimum = v;
    c.worst = s;
  }
}

struct NmContext {
  Sign s1, s2;
  int bound;
  MassParams ms;
  double lo, hi;
};

inline void reduced_vectors(const gsl_vector* x, double lo, double hi, Vec3& xi1, Vec3& xi2) {
  const double l1 = std::clamp(gsl_vector_get(x, 0), lo, hi);
  const double l2 = std::clamp(gsl_vector_get(x, 1), lo, hi);
  const double th = M_PI * 0.5 * (1.0 - std::cos(gsl_vector_get(x, 2)));
  xi1 = Vec3(0.0, 0.0, std::exp(l1));
  xi2 = std::exp(l2) * Vec3(std::sin(th), 0.0, std::cos(th));
}

inline double nm_objective(const gsl_vector* x, void* p) {
  const auto* c = static_cast<const NmContext*>(p);
  Vec3 a, b;
  reduced_vectors(x, c->lo, c->hi, a, b);
  const double v = evaluate_sample(c->s1, c->s2, a, b, c->ms).ratio[c->bound];
  return std::isfinite(v) ? v : 1e300;
}

/// Local Nelder-Mead descent in (log r1, log r2, angle) from a sample.
inline ResonanceSample refine(const ResonanceSample& start, int bound, const MassParams& ms, double lo, double hi) {
  const double r1 = start.xi1.norm(), r2 = start.xi2.norm();
  if (r1 == 0.0 || r2 == 0.0) return start;
  NmContext ctx{start.s1, start.s2, bound, ms, lo, hi};
  const double th = angle(start.xi1, start.xi2);
  gsl_vector* x = gsl_vector_alloc(3);
  gsl_vector_set(x, 0, std::log(r1));
  gsl_vector_set(x, 1, std::log(r2));
  gsl_vector_set(x, 2, std::acos(std::clamp(1.0 - 2.0 * th / M_PI, -1.0, 1.0)));
  gsl_vector* step = gsl_vector_alloc(3);
  gsl_vector_set_all(step, 0.3);
  gsl_multimin_function f{&nm_objective, 3, &ctx};
  gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 3);
  gsl_multimin_fminimizer_set(s, &f, x, step);
  for (int it = 0; it < 400; ++it) {
    if (gsl_multimin_fminimizer_iterate(s)) break;
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), 1e-10) == GSL_SUCCESS) break;
  }
  Vec3 a, b;
  reduced_vectors(s->x, lo, hi, a, b);
  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(step);
  gsl_vector_free(x);
  const ResonanceSample out = evaluate_sample(start.s1, start.s2, a, b, ms);
  return out.ratio[bound] < start.ratio[bound] ? out : start;
}

}  // namespace detail

/// Samples the four bounds for every requested sign pair, then refines the
/// worst samples locally. Returns per-bound infima of |mu| / rhs.
inline CertifyReport certify_bounds(const MassParams& ms, const CertifyOptions& opt = {},
                                    PairSampler sampler = default_pair_sampler()) {
  ms.validate();
  if (opt.shards < 1) throw std::invalid_argument("certify_bounds: need at least one shard");
  CertifyReport rep;
  rep.masses = ms;

  struct ShardResult {
    std::array<std::array<BoundCertificate, kBounds>, 4> best;
    std::array<std::array<std::vector<ResonanceSample>, kBounds>, 4> worst_list;
    std::size_t zero_angle_samples = 0;
  };
  std::vector<ShardResult> shards(opt.shards);
  const int keep = std::max(1, opt.refine_top);

  auto run_shard = [&](int sh) {
    Rng rng(shard_seed(opt.seed, static_cast<std::uint64_t>(sh)));
    const std::size_t per = opt.samples / opt.shards + (static_cast<std::size_t>(sh) < opt.samples % opt.shards);
    ShardResult& res = shards[sh];
    auto consider = [&](const ResonanceSample& s) {
      const int p = sign_pair_index(s.s1, s.s2);
      for (int b = 0; b < kBounds; ++b) {
        detail::absorb(res.best[p][b], s, s.ratio[b]);
        if (!std::isfinite(s.ratio[b])) continue;
        auto& lst = res.worst_list[p][b];
        lst.push_back(s);
        std::sort(lst.begin(), lst.end(),
                  [b](const ResonanceSample& x, const ResonanceSample& y) { return x.ratio[b] < y.ratio[b]; });
        if (static_cast<int>(lst.size()) > keep) lst.pop_back();
      }
    };
    for (std::size_t i = 0; i < per; ++i) {
      const auto [a, b] = sampler(rng);
      for (int p : opt.pairs) {
        const auto [s1, s2] = sign_pair(p);
        consider(evaluate_sample(s1, s2, a, b, ms));
      }
    }
    if (sh == 0 && opt.probes) {
      // deterministic probes around the low-frequency corner and collinear configurations
      const std::vector<std::pair<Vec3, Vec3>> probes = {
          {Vec3::Zero(), Vec3::Zero()},         {Vec3(0, 0, 1e-3), Vec3::Zero()},
          {Vec3::Zero(), Vec3(0, 0, 1e-3)},     {Vec3(0, 0, 1), Vec3(0, 0, 1)},
          {Vec3(0, 0, 1), Vec3(0, 0, -1)},      {Vec3(0, 0, 64), Vec3(0, 0, 64.5)},
          {Vec3(0, 0, 4096), Vec3(0, 0, -4096)}, {Vec3(0, 0, 4096), Vec3(0, 1, 4096)}};
      for (const auto& pr : probes)
        for (int p : opt.pairs) {
          const auto [s1, s2] = sign_pair(p);
          consider(evaluate_sample(s1, s2, pr.first, pr.second, ms));
        }
    }
  };

  unsigned nthreads = opt.threads ? opt.threads : std::max(1u, std::thread::hardware_concurrency());
  nthreads = std::min<unsigned>(nthreads, static_cast<unsigned>(opt.shards));
  {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (unsigned t = 0; t < nthreads; ++t)
      pool.emplace_back([&] {
        for (int sh = next++; sh < opt.shards; sh = next++) run_shard(sh);
      });
    for (auto& th : pool) th.join();
  }

  rep.samples = opt.samples;
  for (int p = 0; p < 4; ++p)
    for (int b = 0; b < kBounds; ++b) {
      BoundCertificate c;
      std::vector<ResonanceSample> cand;
      for (const auto& s : shards) {
        c.applicable += s.best[p][b].applicable;
        if (s.best[p][b].infimum < c.infimum) {
          c.infimum = s.best[p][b].infimum;
          c.worst = s.best[p][b].worst;
        }
        cand.insert(cand.end(), s.worst_list[p][b].begin(), s.worst_list[p][b].end());
      }
      std::sort(cand.begin(), cand.end(),
                [b](const ResonanceSample& x, const ResonanceSample& y) { return x.ratio[b] < y.ratio[b]; });
      if (static_cast<int>(cand.size()) > keep) cand.resize(keep);
      for (const auto& s : cand) {
        const ResonanceSample r = detail::refine(s, b, ms, opt.log_r_min, opt.log_r_max);
        if (r.ratio[b] < c.infimum) {
          c.infimum = r.ratio[b];
          c.worst = r;
        }
      }
      rep.per_pair[p][b] = c;
      auto& o = rep.overall[b];
      o.applicable += c.applicable;
      if (c.infimum < o.infimum) {
        o.infimum = c.infimum;
        o.worst = c.worst;
      }
    }
  for (int b = 1; b <= 2; ++b)
    if (rep.overall[b].applicable == 0)
      throw std::invalid_argument("certify_bounds: degenerate sampler, no sample with two nonzero frequencies");
  return rep;
}

// ---------------------------------------------------------------------------
// support emptiness under modulation constraints

/// Closed radial band [lo, hi] of the widened shell (tilde support).
inline std::pair<double, double> shell_band(int k) { return tilde_support(k); }

/// Closed band [2^{j-2}, 2^{j+2}] of a widened modulation cutoff.
inline std::pair<double, double> modulation_band(int j) {
  return {std::ldexp(1.0, j - 2), std::ldexp(1.0, j + 2)};
}

/// Attainable values of c - b + a with |a|, |b|, |c| in the three bands:
/// a union of eight closed intervals.
inline std::vector<std::pair<double, double>> feasible_mu_set(int j, int j1, int j2) {
  const auto A = modulation_band(j1), B = modulation_band(j2), C = modulation_band(j);
  std::vector<std::pair<double, double>> out;
  for (int sa : {-1, 1})
    for (int sb : {-1, 1})
      for (int sc : {-1, 1}) {
        auto iv = [](int s, std::pair<double, double> band) {
          return s > 0 ? band : std::make_pair(-band.second, -band.first);
        };
        const auto a = iv(sa, A), b = iv(sb, B), c = iv(sc, C);
        out.push_back({a.first + b.first + c.first, a.second + b.second + c.second});
      }
  return out;
}

struct SupportWitness {
  Vec3 xi1, xi2;
  double tau1 = 0.0, tau2 = 0.0;
  double mu = 0.0;
  double a = 0.0, b = 0.0, c = 0.0;  // tau1 + s1<xi1>, tau2 + s2<xi2>, tau2 - tau1 + <xi2 - xi1>
};

struct SupportResult {
  bool empty = true;
  std::optional<SupportWitness> witness;
  /// Smallest distance between the attainable mu range and the feasible set
  /// (0 when nonempty); a margin diagnostic.
  double gap = std::numeric_limits<double>::infinity();
};

struct CapConstraint {
  Vec3 omega1, omega2;  // cap centers (unit)
  double rho = 0.0;     // angular support radius of each widened cap
};

struct SupportSearchOptions {
  int radial = 96;
  int refine_cells = 6;
  int refine_radial = 24;
  MassParams masses{1.0, 1.0};
};

namespace detail {

inline std::vector<double> band_grid(std::pair<double, double> band, int n) {
  std::vector<double> g;
  if (band.first <= 0.0) {
    g.push_back(0.0);
    const double lo = std::ldexp(1.0, -8);
    for (int i = 0; i < n; ++i) g.push_back(lo * std::pow(band.second / lo, i / double(n - 1)));
  } else {
    for (int i = 0; i < n; ++i) g.push_back(band.first * std::pow(band.second / band.first, i / double(n - 1)));
  }
  return g;
}

/// Splits mu = c - b + a for a target inside one of the eight intervals.
inline bool split_mu(double target, int j, int j1, int j2, double& a, double& b, double& c) {
  const auto A = modulation_band(j1), B = modulation_band(j2), C = modulation_band(j);
  for (int sa : {-1, 1})
    for (int sb : {-1, 1})
      for (int sc : {-1, 1}) {
        auto iv = [](int s, std::pair<double, double> band) {
          return s > 0 ? band : std::make_pair(-band.second, -band.first);
        };
        const auto ia = iv(sa, A), ib = iv(sb, B), ic = iv(sc, C);
        const double lo = ia.first + ib.first + ic.first, hi = ia.second + ib.second + ic.second;
        if (target < lo || target > hi) continue;
        // x = a, y = -b, z = c with x in ia, y in ib, z in ic (ib used as the sign of -b)
        double x = ia.first, y = ib.first, z = ic.first, slack = target - lo;
        const double dx = std::min(slack, ia.second - ia.first);
        x += dx;
        slack -= dx;
        const double dy = std::min(slack, ib.second - ib.first);
        y += dy;
        slack -= dy;
        z += slack;
        a = x;
        b = -y;
        c = z;
        return true;
      }
  return false;
}

}  // namespace detail

/// Decides whether frequencies xi1 in A~_{k1}, xi2 in A~_{k2}, xi2 - xi1 in A~_k
/// and times tau1, tau2 exist with
///   |tau2 - tau1 + <xi2 - xi1>| in [2^{j-2}, 2^{j+2}],
///   |tau1 + s1 <xi1>| in [2^{j1-2}, 2^{j1+2}], |tau2 + s2 <xi2>| in [2^{j2-2}, 2^{j2+2}],
/// optionally with s_i xi_i restricted to angular caps. The tau variables
/// eliminate to mu^{s1,s2}(xi1, xi2) lying in the feasible set; for fixed
/// radii mu is monotone in the angle, so the angular direction is handled
/// exactly and the radii are grid searched with local refinement.
inline SupportResult find_support(int k, int k1, int k2, int j, int j1, int j2, Sign s1, Sign s2,
                                  const std::optional<CapConstraint>& caps, const SupportSearchOptions& opt = {}) {
  const MassParams& ms = opt.masses;
  const auto F = feasible_mu_set(j, j1, j2);
  const auto B1 = shell_band(k1), B2 = shell_band(k2), Bk = shell_band(k);
  double cap_lo = 0.0, cap_hi = M_PI;  // range of angle(s1 xi1, s2 xi2)
  double center_angle = 0.0;
  if (caps) {
    center_angle = angle(sgn(s1) * caps->omega1, sgn(s2) * caps->omega2);
    cap_lo = std::max(0.0, center_angle - 2.0 * caps->rho);
    cap_hi = std::min(M_PI, center_angle + 2.0 * caps->rho);
  }
  const bool same = s1 == s2;

  SupportResult res;
  struct Cell {
    double gap;
    double r1, r2;
  };
  std::vector<Cell> cells;

  // theta = angle(xi1, xi2) range for given radii, or false when empty
  auto theta_range = [&](double r1, double r2, double& tlo, double& thi) {
    double lo = 0.0, hi = M_PI;
    if (caps && r1 > 0.0 && r2 > 0.0) {
      if (same) {
        lo = cap_lo;
        hi = cap_hi;
      } else {
        lo = M_PI - cap_hi;
        hi = M_PI - cap_lo;
      }
    }
    if (r1 == 0.0 || r2 == 0.0) {
      const double d = r1 + r2;
      if (d < Bk.first || d > Bk.second) return false;
      tlo = thi = 0.0;
      return true;
    }
    // |xi1 - xi2| in [Bk.first, Bk.second]
    auto cos_for = [&](double d) { return (r1 * r1 + r2 * r2 - d * d) / (2.0 * r1 * r2); };
    const double c_hi = cos_for(Bk.first);   // largest cos allowed
    const double c_lo = cos_for(Bk.second);  // smallest cos allowed
    const double tmin = c_hi >= 1.0 ? 0.0 : (c_hi <= -1.0 ? M_PI + 1.0 : std::acos(c_hi));
    const double tmax = c_lo <= -1.0 ? M_PI : (c_lo >= 1.0 ? -1.0 : std::acos(c_lo));
    tlo = std::max(lo, tmin);
    thi = std::min(hi, tmax);
    return tlo <= thi;
  };

  auto try_radii = [&](double r1, double r2, bool record) -> bool {
    double tlo, thi;
    if (!theta_range(r1, r2, tlo, thi)) return false;
    const double mlo = mu_reduced(s1, s2, r1, r2, tlo, ms);
    const double mhi = mu_reduced(s1, s2, r1, r2, thi, ms);
    double best_gap = std::numeric_limits<double>::infinity();
    for (const auto& iv : F) {
      const double lo = std::max(mlo, iv.first), hi = std::min(mhi, iv.second);
      if (lo <= hi) {
        // witness: bisection on theta for the target value lo
        const double target = lo;
        double th = tlo;
        if (mhi > mlo) {
          double a = tlo, b = thi;
          for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (a + b);
            if (mu_reduced(s1, s2, r1, r2, mid, ms) < target) a = mid;
            else b = mid;
          }
          th = b;
        }
        SupportWitness w;
        // place xi1, xi2 so that angle(xi1, xi2) = th and s_i xi_i respect the caps
        if (caps && r1 > 0.0 && r2 > 0.0) {
          const Vec3 u1 = sgn(s1) * caps->omega1.normalized();
          const Vec3 u2 = sgn(s2) * caps->omega2.normalized();
          const double phi = same ? th : M_PI - th;  // angle(s1 xi1, s2 xi2)
          // rotate u1 and u2 toward or away from each other along their great circle
          Vec3 axis = u1.cross(u2);
          if (axis.norm() < 1e-12) axis = u1.unitOrthogonal();
          axis.normalize();
          const double shift = 0.5 * (center_angle - phi);  // positive: move toward each other
          const Eigen::AngleAxisd ra(shift, axis), rb(-shift, axis);
          const Vec3 v1 = ra * u1, v2 = rb * u2;
          w.xi1 = sgn(s1) * r1 * v1;
          w.xi2 = sgn(s2) * r2 * v2;
        } else {
          w.xi1 = Vec3(0.0, 0.0, r1);
          w.xi2 = r2 * Vec3(std::sin(th), 0.0, std::cos(th));
        }
        w.mu = mu(s1, s2, w.xi1, w.xi2, ms);
        double a, b, c;
        if (!detail::split_mu(w.mu, j, j1, j2, a, b, c)) {
          // numerical edge of an interval: fall back to the exact target
          if (!detail::split_mu(target, j, j1, j2, a, b, c)) continue;
        }
        w.a = a;
        w.b = b;
        w.c = c;
        w.tau1 = a - sgn(s1) * bracket(w.xi1, ms.M);
        w.tau2 = b - sgn(s2) * bracket(w.xi2, ms.M);
        res.empty = false;
        res.witness = w;
        res.gap = 0.0;
        return true;
      }
      const double g = lo - hi;
      best_gap = std::min(best_gap, g);
    }
    res.gap = std::min(res.gap, best_gap);
    if (record) cells.push_back({best_gap, r1, r2});
    return false;
  };

  const auto g1 = detail::band_grid(B1, opt.radial), g2 = detail::band_grid(B2, opt.radial);
  for (double r1 : g1)
    for (double r2 : g2)
      if (try_radii(r1, r2, true)) return res;

  // refine around the cells closest to feasibility
  std::sort(cells.begin(), cells.end(), [](const Cell& x, const Cell& y) { return x.gap < y.gap; });
  const int ncell = std::min<int>(opt.refine_cells, static_cast<int>(cells.size()));
  for (int c = 0; c < ncell; ++c) {
    auto local = [&](double r, std::pair<double, double> band, int n) {
      std::vector<double> out;
      const double f = std::pow(2.0, 8.0 / opt.radial);
      const double lo = std::max(band.first, r / f), hi = std::min(band.second, std::max(r, 1e-3) * f);
      for (int i = 0; i < n; ++i) out.push_back(lo + (hi - lo) * i / double(n - 1));
      return out;
    };
    for (double r1 : local(cells[c].r1, B1, opt.refine_radial))
      for (double r2 : local(cells[c].r2, B2, opt.refine_radial))
        if (try_radii(r1, r2, false)) return res;
  }
  return res;
}

inline SupportResult vanishing_support_check(int k, int k1, int k2, int j, int j1, int j2, Sign s1, Sign s2,
                                             const SupportSearchOptions& opt = {}) {
  if (k < 0 || k1 < 0 || k2 < 0) throw std::invalid_argument("frequency indices must be nonnegative");
  return find_support(k, k1, k2, j, j1, j2, s1, s2, std::nullopt, opt);
}

/// Caps of level l with centers omega1, omega2. The widened cap operators
/// have angular support radius 2 * 2^-l, and the caps count as separated when
/// those supports of s1 kappa1 and s2 kappa2 are at least 2^-l apart.
inline SupportResult cap_vanishing_check(int k, int k1, int k2, int l, const Vec3& omega1, const Vec3& omega2, int j,
                                         int j1, int j2, Sign s1, Sign s2, const SupportSearchOptions& opt = {}) {
  if (k < 0 || k1 < 0 || k2 < 0) throw std::invalid_argument("frequency indices must be nonnegative");
  if (l < 1) throw std::invalid_argument("cap_vanishing_check: l must be >= 1");
  if (l > std::min(k1, k2) + 10) throw std::invalid_argument("cap_vanishing_check: l exceeds min(k1,k2)+10");
  const double R = std::ldexp(1.0, -l);
  const CapConstraint cc{omega1.normalized(), omega2.normalized(), 2.0 * R};
  const double sep = angle(sgn(s1) * cc.omega1, sgn(s2) * cc.omega2) - 2.0 * cc.rho;
  if (sep < R * (1.0 - 1e-12)) throw std::invalid_argument("cap_vanishing_check: caps not separated");
  return find_support(k, k1, k2, j, j1, j2, s1, s2, cc, opt);
}

/// Hypothesis tests of the vanishing lemma with the 2^-10 margin for "<<".
constexpr int kPrecMargin = 10;
inline bool prec(int a, int b) { return a <= b - kPrecMargin; }

inline bool vanishing_hypothesis_i(int k, int k1, int k2, int j, int j1, int j2) {
  return prec(std::max({j, j1, j2}), -std::min({k, k1, k2}));
}

inline bool vanishing_hypothesis_ii_case1(int k, int k1, int k2, int j, int j1, int j2, Sign s1, Sign s2) {
  const bool signs = (s1 == Sign::plus && s2 == Sign::minus) ||
                     (s1 == Sign::minus && s2 == Sign::plus && prec(k, std::min(k1, k2)));
  return signs && prec(std::max({j, j1, j2}), std::max({k, k1, k2}));
}

inline bool case2_signs(int k, int k1, int k2, Sign s1, Sign s2) {
  return s1 == s2 || (s1 == Sign::minus && s2 == Sign::plus && !prec(k, std::min(k1, k2)));
}

inline bool vanishing_hypothesis_ii_case2(int k, int k1, int k2, int l, int j, int j1, int j2, Sign s1, Sign s2) {
  return case2_signs(k, k1, k2, s1, s2) && l >= 1 && prec(std::max({j, j1, j2}), k1 + k2 - k - 2 * l);
}

}  // namespace dkg
