#pragma once

// Time integration of the half-wave Dirac-Klein-Gordon system in the
// interaction picture, an independent second-order reference integrator,
// Picard iteration of the Duhamel map, and pullback scattering diagnostics.

#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dkg/dirac_algebra.hpp"
#include "dkg/field.hpp"
#include "dkg/lattice.hpp"
#include "dkg/random.hpp"

namespace dkg {

/// Fields in the Fourier representation.
struct DKGState {
  double t = 0.0;
  SpinorField psi_p, psi_m;
  ScalarField phi_p;
  MassParams masses;

  const FrequencyLattice& lattice() const { return psi_p.lattice(); }
  SpinorField psi() const { return psi_p + psi_m; }
  double charge() const { return psi().l2_norm(); }
};

struct SecondOrderState {
  double t = 0.0;
  SpinorField psi;
  ScalarField phi, phi_t;
};

// ---------------------------------------------------------------------------
// data

struct DataParams {
  double delta = 0.01;
  std::uint64_t seed = 1;
  double eps = 0.1;
  double width = 1.0;           // Gaussian envelope width in x
  double spectral_width = 1.0;  // width of the random modulation in xi
};

/// Norms in which the data size delta is measured: H^eps, H^{1/2+eps}, H^{-1/2+eps}.
inline std::array<double, 3> data_norms(const SecondOrderState& s, double eps) {
  return {sobolev_norm(s.psi, eps), sobolev_norm(s.phi, 0.5 + eps), sobolev_norm(s.phi_t, eps - 0.5)};
}

/// Localized random data: a Gaussian envelope centred in the box times a
/// random smooth field; each of the three components is scaled to delta.
inline SecondOrderState make_initial_data(const LatticePtr& lat, const DataParams& p) {
  if (!(p.delta >= 0.0)) throw std::invalid_argument("data.delta must be nonnegative");
  Rng rng(p.seed);
  std::normal_distribution<double> nd;
  const double L = lat->box_length();
  const Vec3 centre = Vec3::Constant(0.5 * L);
  std::vector<double> env(lat->size());
  for (std::size_t q = 0; q < lat->size(); ++q) {
    Vec3 d = lat->x(q) - centre;
    for (int a = 0; a < 3; ++a) d(a) -= L * std::round(d(a) / L);
    env[q] = std::exp(-d.squaredNorm() / (2.0 * p.width * p.width));
  }
  auto random_smooth = [&](auto& f) {
    f.ensure(Rep::fourier);
    for (int c = 0; c < std::decay_t<decltype(f)>::components; ++c)
      for (std::size_t q = 0; q < f.points(); ++q) {
        const double w = std::exp(-lat->xi(q).squaredNorm() / (2.0 * p.spectral_width * p.spectral_width));
        f.at(c, q) = w * cd(nd(rng), nd(rng));
      }
    f.fft_inverse();
  };
  SecondOrderState s;
  s.psi = SpinorField(lat);
  s.phi = ScalarField(lat);
  s.phi_t = ScalarField(lat);
  random_smooth(s.psi);
  random_smooth(s.phi);
  random_smooth(s.phi_t);
  for (std::size_t q = 0; q < lat->size(); ++q) {
    for (int c = 0; c < 4; ++c) s.psi.at(c, q) *= env[q];
    s.phi.at(0, q) = env[q] * s.phi.at(0, q).real();
    s.phi_t.at(0, q) = env[q] * s.phi_t.at(0, q).real();
  }
  mask_nyquist(s.psi);
  mask_nyquist(s.phi);
  mask_nyquist(s.phi_t);
  const auto n = data_norms(s, p.eps);
  s.psi *= n[0] > 0 ? p.delta / n[0] : 0.0;
  s.phi *= n[1] > 0 ? p.delta / n[1] : 0.0;
  s.phi_t *= n[2] > 0 ? p.delta / n[2] : 0.0;
  return s;
}

// ---------------------------------------------------------------------------
// half-wave split

inline DKGState split_initial_data(const SpinorField& psi0, const ScalarField& phi0, const ScalarField& phi1,
                                   const MassParams& ms, double t = 0.0) {
  if (psi0.lattice() != phi0.lattice() || psi0.lattice() != phi1.lattice())
    throw std::invalid_argument("split_initial_data: lattice mismatch");
  const FrequencyLattice& lat = psi0.lattice();
  DKGState s;
  s.t = t;
  s.masses = ms;
  SpinorField p = psi0.as(Rep::fourier);
  s.psi_p = p;
  apply_matrix_table(s.psi_p, projector_table(lat, Sign::plus, ms.M));
  s.psi_m = p - s.psi_p;
  const auto brm = lat.bracket_table(ms.m);
  ScalarField f0 = phi0.as(Rep::fourier), f1 = phi1.as(Rep::fourier);
  s.phi_p = ScalarField(psi0.lattice_ptr(), Rep::fourier);
  for (std::size_t q = 0; q < lat.size(); ++q) s.phi_p.at(0, q) = f0.at(0, q) + cd(0.0, 1.0) * f1.at(0, q) / brm[q];
  return s;
}

inline DKGState split_initial_data(const SecondOrderState& s, const MassParams& ms) {
  return split_initial_data(s.psi, s.phi, s.phi_t, ms, s.t);
}

/// Inverse of the split: psi = psi_+ + psi_-, phi = Re phi_+, phi_t = Im <D>_m phi_+.
inline SecondOrderState reconstruct(const DKGState& s) {
  SecondOrderState o;
  o.t = s.t;
  o.psi = s.psi().as(Rep::physical);
  const auto brm = s.lattice().bracket_table(s.masses.m);
  ScalarField a = s.phi_p.as(Rep::physical);
  ScalarField b = s.phi_p;
  apply_scalar_table(b, brm);
  b.ensure(Rep::physical);
  o.phi = ScalarField(s.psi_p.lattice_ptr());
  o.phi_t = ScalarField(s.psi_p.lattice_ptr());
  for (std::size_t q = 0; q < a.points(); ++q) {
    o.phi.at(0, q) = a.at(0, q).real();
    o.phi_t.at(0, q) = b.at(0, q).imag();
  }
  return o;
}

/// Relative L2 distance of (psi_+, psi_-, phi_+) from b.
inline double relative_difference(const DKGState& a, const DKGState& b) {
  const double num = std::pow(l2_distance(a.psi_p, b.psi_p), 2) + std::pow(l2_distance(a.psi_m, b.psi_m), 2) +
                     std::pow(l2_distance(a.phi_p, b.phi_p), 2);
  const double den = b.psi_p.norm_sq() + b.psi_m.norm_sq() + b.phi_p.norm_sq();
  if (den == 0.0) return std::sqrt(num);
  return std::sqrt(num / den);
}

/// max_s ||(I - Pi_s) psi_s||_2
inline double projector_residual(const DKGState& s) {
  SpinorField a = s.psi_p.as(Rep::fourier), b = s.psi_m.as(Rep::fourier);
  apply_matrix_table(a, projector_table(s.lattice(), Sign::minus, s.masses.M));
  apply_matrix_table(b, projector_table(s.lattice(), Sign::plus, s.masses.M));
  return std::max(a.l2_norm(), b.l2_norm());
}

/// Pointwise psi^dagger beta psi in physical space (real up to storage type).
inline ScalarField scalar_source(const SpinorField& psi) {
  const SpinorField x = psi.as(Rep::physical);
  ScalarField F(psi.lattice_ptr(), Rep::physical);
  for (std::size_t q = 0; q < x.points(); ++q)
    F.at(0, q) = std::norm(x.at(0, q)) + std::norm(x.at(1, q)) - std::norm(x.at(2, q)) - std::norm(x.at(3, q));
  return F;
}

// ---------------------------------------------------------------------------
// first-order system

struct Derivative {
  SpinorField dpsi_p, dpsi_m;
  ScalarField dphi_p;
};

/// Precomputed symbols and workspace for one lattice and mass pair.
class DKGSystem {
 public:
  DKGSystem(LatticePtr lat, const MassParams& ms, bool coupling = true)
      : lat_(std::move(lat)), ms_(ms), coupling_(coupling) {
    ms_.validate();
    brM_ = lat_->bracket_table(ms_.M);
    brm_ = lat_->bracket_table(ms_.m);
    pplus_ = projector_table(*lat_, Sign::plus, ms_.M);
    work_psi_ = SpinorField(lat_);
    work_phi_ = ScalarField(lat_);
    work_src_ = ScalarField(lat_);
  }

  const MassParams& masses() const { return ms_; }
  const LatticePtr& lattice_ptr() const { return lat_; }
  bool coupling() const { return coupling_; }

  DKGState zero_state() const {
    DKGState s;
    s.masses = ms_;
    s.psi_p = SpinorField(lat_, Rep::fourier);
    s.psi_m = SpinorField(lat_, Rep::fourier);
    s.phi_p = ScalarField(lat_, Rep::fourier);
    return s;
  }

  /// Nonlinear part: (i Pi_+ (Re phi_+ beta psi), i Pi_- (Re phi_+ beta psi), i <D>_m^{-1} <psi, beta psi>).
  void nonlinear(const DKGState& s, Derivative& out) {
    ensure_shape(out);
    if (!coupling_) {
      out.dpsi_p.set_zero();
      out.dpsi_m.set_zero();
      out.dphi_p.set_zero();
      return;
    }
    const std::size_t N = lat_->size();
    // psi and phi_+ to physical space
    auto& wp = work_psi_.raw();
    const auto& a = s.psi_p.raw();
    const auto& b = s.psi_m.raw();
    if (s.psi_p.rep() != Rep::fourier || s.psi_m.rep() != Rep::fourier || s.phi_p.rep() != Rep::fourier)
      throw std::logic_error("DKGSystem: state must be in Fourier representation");
    force_rep(work_psi_, Rep::fourier);
    for (std::size_t i = 0; i < wp.size(); ++i) wp[i] = a[i] + b[i];
    work_psi_.fft_inverse();
    force_rep(work_phi_, Rep::fourier);
    work_phi_.raw() = s.phi_p.raw();
    work_phi_.fft_inverse();
    force_rep(work_src_, Rep::physical);
    cd* p0 = work_psi_.component(0);
    cd* p1 = work_psi_.component(1);
    cd* p2 = work_psi_.component(2);
    cd* p3 = work_psi_.component(3);
    const cd* ph = work_phi_.component(0);
    cd* src = work_src_.component(0);
    for (std::size_t q = 0; q < N; ++q) {
      src[q] = std::norm(p0[q]) + std::norm(p1[q]) - std::norm(p2[q]) - std::norm(p3[q]);
      const double r = ph[q].real();
      p0[q] *= r;
      p1[q] *= r;
      p2[q] *= -r;
      p3[q] *= -r;
    }
    work_psi_.fft_forward();
    work_src_.fft_forward();
    const cd I(0.0, 1.0);
    for (std::size_t q = 0; q < N; ++q) {
      Spinor v;
      for (int c = 0; c < 4; ++c) v(c) = work_psi_.at(c, q);
      const Spinor up = pplus_[q] * v;
      for (int c = 0; c < 4; ++c) {
        out.dpsi_p.at(c, q) = I * up(c);
        out.dpsi_m.at(c, q) = I * (v(c) - up(c));
      }
      out.dphi_p.at(0, q) = I * work_src_.at(0, q) / brm_[q];
    }
  }

  /// Full right-hand side: linear part plus nonlinear part.
  Derivative rhs(const DKGState& s) {
    Derivative d;
    nonlinear(s, d);
    const cd I(0.0, 1.0);
    const std::size_t N = lat_->size();
    for (int c = 0; c < 4; ++c)
      for (std::size_t q = 0; q < N; ++q) {
        d.dpsi_p.at(c, q) += -I * brM_[q] * s.psi_p.at(c, q);
        d.dpsi_m.at(c, q) += I * brM_[q] * s.psi_m.at(c, q);
      }
    for (std::size_t q = 0; q < N; ++q) d.dphi_p.at(0, q) += -I * brm_[q] * s.phi_p.at(0, q);
    return d;
  }

  /// Free flow e^{h L}: psi_s -> e^{-ish<D>_M} psi_s, phi_+ -> e^{-ih<D>_m} phi_+.
  void free_flow(DKGState& s, double h) const {
    const Phases& ph = phases(h);
    const std::size_t N = lat_->size();
    for (int c = 0; c < 4; ++c) {
      cd* a = s.psi_p.component(c);
      cd* b = s.psi_m.component(c);
      for (std::size_t q = 0; q < N; ++q) {
        a[q] *= ph.eM[q];
        b[q] *= std::conj(ph.eM[q]);
      }
    }
    cd* f = s.phi_p.component(0);
    for (std::size_t q = 0; q < N; ++q) f[q] *= ph.em[q];
    s.t += h;
  }

  void free_flow(Derivative& d, double h) const {
    DKGState tmp;
    tmp.psi_p = std::move(d.dpsi_p);
    tmp.psi_m = std::move(d.dpsi_m);
    tmp.phi_p = std::move(d.dphi_p);
    free_flow(tmp, h);
    d.dpsi_p = std::move(tmp.psi_p);
    d.dpsi_m = std::move(tmp.psi_m);
    d.dphi_p = std::move(tmp.phi_p);
  }

  /// Exact free solution from s over time h (no coupling).
  DKGState free_evolve(DKGState s, double h) const {
    free_flow(s, h);
    return s;
  }

  /// One step of fourth-order Lawson (integrating-factor) Runge-Kutta.
  void step(DKGState& u, double h) {
    if (h == 0.0) throw std::invalid_argument("step: dt must be nonzero");
    auto& [k1, k2, k3, k4] = k_;
    const double t0 = u.t;
    nonlinear(u, k1);
    // stage 2: E(h/2)(u + h/2 k1)
    s_ = u;
    axpy(s_, 0.5 * h, k1);
    free_flow(s_, 0.5 * h);
    nonlinear(s_, k2);
    // stage 3: E(h/2) u + h/2 k2
    uh_ = u;
    free_flow(uh_, 0.5 * h);
    s_ = uh_;
    axpy(s_, 0.5 * h, k2);
    nonlinear(s_, k3);
    // stage 4: E(h) u + h E(h/2) k3
    free_flow(k3, 0.5 * h);
    free_flow(uh_, 0.5 * h);
    s_ = uh_;
    axpy(s_, h, k3);
    nonlinear(s_, k4);
    // E(h) u + h/6 (E(h) k1 + 2 E(h/2)(k2 + k3) + k4), k3 already carries E(h/2)
    free_flow(k2, 0.5 * h);
    free_flow(k1, h);
    axpy(uh_, h / 6.0, k1);
    axpy(uh_, h / 3.0, k2);
    axpy(uh_, h / 3.0, k3);
    axpy(uh_, h / 6.0, k4);
    std::swap(u, uh_);
    u.t = t0 + h;
  }

  static void axpy(DKGState& s, double a, const Derivative& d) {
    s.psi_p.axpy(a, d.dpsi_p);
    s.psi_m.axpy(a, d.dpsi_m);
    s.phi_p.axpy(a, d.dphi_p);
  }

 private:
  struct Phases {
    double h = std::numeric_limits<double>::quiet_NaN();
    std::vector<cd> eM, em;
  };

  const Phases& phases(double h) const {
    for (auto& p : phase_cache_)
      if (p.h == h) return p;
    Phases& p = phase_cache_[phase_next_];
    phase_next_ = (phase_next_ + 1) % phase_cache_.size();
    p.h = h;
    p.eM.resize(lat_->size());
    p.em.resize(lat_->size());
    for (std::size_t q = 0; q < lat_->size(); ++q) {
      p.eM[q] = std::exp(cd(0.0, -h * brM_[q]));
      p.em[q] = std::exp(cd(0.0, -h * brm_[q]));
    }
    return p;
  }

  void ensure_shape(Derivative& d) const {
    if (d.dpsi_p.empty()) d.dpsi_p = SpinorField(lat_, Rep::fourier);
    if (d.dpsi_m.empty()) d.dpsi_m = SpinorField(lat_, Rep::fourier);
    if (d.dphi_p.empty()) d.dphi_p = ScalarField(lat_, Rep::fourier);
  }

  template <int NC>
  static void force_rep(Field<NC>& f, Rep r) {
    f.relabel(r);
  }

  LatticePtr lat_;
  MassParams ms_;
  bool coupling_;
  std::vector<double> brM_, brm_;
  std::vector<Mat4> pplus_;
  SpinorField work_psi_;
  ScalarField work_phi_, work_src_;
  std::array<Derivative, 4> k_;
  DKGState s_, uh_;
  mutable std::array<Phases, 4> phase_cache_;
  mutable std::size_t phase_next_ = 0;
};

// ---------------------------------------------------------------------------
// trajectories

struct SolveOptions {
  double T = 1.0;
  double dt = 1e-3;
  int output_every = 100;  // steps between recorded states
  bool coupling = true;
  bool keep_states = true;
  double blowup_factor = 1e6;
  double eps = 0.1;
};

struct Diagnostic {
  double t = 0.0;
  double charge = 0.0;
  double charge_drift = 0.0;  // relative to t = 0
  double h_eps_psi = 0.0;
  double h_phi = 0.0;
  double projector_residual = 0.0;
};

struct Trajectory {
  std::vector<DKGState> states;
  std::vector<Diagnostic> diagnostics;
  double box_length = 0.0;
  double max_charge_drift() const {
    double m = 0.0;
    for (const auto& d : diagnostics) m = std::max(m, d.charge_drift);
    return m;
  }
};

class BlowUpError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline int step_count(double T, double dt) {
  if (!(dt != 0.0) || !std::isfinite(dt)) throw std::invalid_argument("time.dt must be finite and nonzero");
  const double r = T / dt;
  const long n = std::lround(r);
  if (n < 0 || std::abs(r - n) > 1e-6 * std::max(1.0, std::abs(r)))
    throw std::invalid_argument("time.T must be a nonnegative multiple of time.dt");
  return static_cast<int>(n);
}

inline Diagnostic diagnose(const DKGState& s, double charge0, double eps) {
  Diagnostic d;
  d.t = s.t;
  const SpinorField psi = s.psi();
  d.charge = psi.l2_norm();
  d.charge_drift = charge0 > 0.0 ? std::abs(d.charge - charge0) / charge0 : d.charge;
  d.h_eps_psi = sobolev_norm(psi, eps);
  ScalarField re = s.phi_p.as(Rep::physical);
  for (std::size_t q = 0; q < re.points(); ++q) re.at(0, q) = re.at(0, q).real();
  d.h_phi = sobolev_norm(re, 0.5 + eps);
  d.projector_residual = projector_residual(s);
  return d;
}

/// Integrates from a first-order state; calls observer at every output.
inline Trajectory solve(const DKGState& initial, const SolveOptions& opt,
                        const std::function<void(const DKGState&, const Diagnostic&)>& observer = {}) {
  const int nsteps = step_count(opt.T, opt.dt);
  if (opt.output_every < 1) throw std::invalid_argument("output.every must be >= 1");
  DKGSystem sys(initial.psi_p.lattice_ptr(), initial.masses, opt.coupling);
  DKGState u = initial;
  u.psi_p.ensure(Rep::fourier);
  u.psi_m.ensure(Rep::fourier);
  u.phi_p.ensure(Rep::fourier);
  Trajectory tr;
  tr.box_length = u.lattice().box_length();
  const double charge0 = u.charge();
  const double size0 = std::sqrt(u.psi_p.norm_sq() + u.psi_m.norm_sq() + u.phi_p.norm_sq());
  auto record = [&] {
    const Diagnostic d = diagnose(u, charge0, opt.eps);
    tr.diagnostics.push_back(d);
    if (opt.keep_states) tr.states.push_back(u);
    if (observer) observer(u, d);
  };
  record();
  for (int n = 1; n <= nsteps; ++n) {
    sys.step(u, opt.dt);
    u.t = initial.t + n * opt.dt;
    const double size = std::sqrt(u.psi_p.norm_sq() + u.psi_m.norm_sq() + u.phi_p.norm_sq());
    if (!std::isfinite(size)) {
      std::ostringstream os;
      os << "non-finite state at t=" << u.t << " (step " << n << ")";
      throw BlowUpError(os.str());
    }
    if (size0 > 0.0 && size > opt.blowup_factor * size0) {
      std::ostringstream os;
      os << "norm grew by " << size / size0 << " at t=" << u.t << " (step " << n << ")";
      throw BlowUpError(os.str());
    }
    if (n % opt.output_every == 0 || n == nsteps) record();
  }
  return tr;
}

inline Trajectory solve(const SecondOrderState& initial, const MassParams& ms, const SolveOptions& opt) {
  return solve(split_initial_data(initial, ms), opt);
}

// ---------------------------------------------------------------------------
// second-order reference

/// Dirac part: i psi_t = (-i alpha.grad + M beta) psi - phi beta psi by classical RK4,
/// with phi at the half step from quadratic interpolation of three levels.
/// Klein-Gordon part: two-step Gautschi-type leapfrog, exact for the free flow.
class SecondOrderSolver {
 public:
  SecondOrderSolver(LatticePtr lat, const MassParams& ms, double dt, bool coupling = true)
      : lat_(std::move(lat)), ms_(ms), h_(dt), coupling_(coupling) {
    ms_.validate();
    if (!(dt > 0.0)) throw std::invalid_argument("reference solver: dt must be positive");
    const auto brm = lat_->bracket_table(ms_.m);
    double wmax = 0.0;
    for (double w : brm) wmax = std::max(wmax, w);
    for (double w : lat_->bracket_table(ms_.M)) wmax = std::max(wmax, w);
    if (dt * wmax > 2.0) {
      std::ostringstream os;
      os << "reference solver CFL violated: dt * max<xi> = " << dt * wmax << " > 2";
      throw std::invalid_argument(os.str());
    }
    const std::size_t N = lat_->size();
    om_ = brm;
    cos_.resize(N);
    sin_over_.resize(N);
    one_minus_cos_.resize(N);
    vel_.resize(N);
    for (std::size_t q = 0; q < N; ++q) {
      const double w = om_[q], c = std::cos(h_ * w), s = std::sin(h_ * w);
      cos_[q] = c;
      sin_over_[q] = s / w;
      one_minus_cos_[q] = (1.0 - c) / (w * w);
      vel_[q] = w / (2.0 * s);
    }
    H_.resize(N);
    for (std::size_t q = 0; q < N; ++q) H_[q] = dirac_symbol(lat_->xi(q), ms_.M);
  }

  /// Integrates to T, recording every output_every steps.
  std::vector<SecondOrderState> run(const SecondOrderState& init, double T, int output_every) {
    const int nsteps = step_count(T, h_);
    const std::size_t N = lat_->size();
    SpinorField psi = init.psi.as(Rep::fourier);
    ScalarField phi = init.phi.as(Rep::fourier);
    const ScalarField phit = init.phi_t.as(Rep::fourier);
    ScalarField F = source(psi);
    ScalarField prev(lat_, Rep::fourier), next(lat_, Rep::fourier);
    for (std::size_t q = 0; q < N; ++q) {
      const cd a = cos_[q] * phi.at(0, q), b = sin_over_[q] * phit.at(0, q), c = one_minus_cos_[q] * F.at(0, q);
      prev.at(0, q) = a - b + c;
    }
    std::vector<SecondOrderState> out;
    for (int n = 0; n <= nsteps; ++n) {
      // next = 2 cos phi - prev + 2 (1 - cos)/w^2 F
      for (std::size_t q = 0; q < N; ++q)
        next.at(0, q) = 2.0 * cos_[q] * phi.at(0, q) - prev.at(0, q) + 2.0 * one_minus_cos_[q] * F.at(0, q);
      if (n % output_every == 0 || n == nsteps) {
        SecondOrderState s;
        s.t = init.t + n * h_;
        s.psi = psi.as(Rep::physical);
        s.phi = phi.as(Rep::physical);
        ScalarField v(lat_, Rep::fourier);
        for (std::size_t q = 0; q < N; ++q) v.at(0, q) = vel_[q] * (next.at(0, q) - prev.at(0, q));
        s.phi_t = v.as(Rep::physical);
        out.push_back(std::move(s));
      }
      if (n == nsteps) break;
      // Dirac RK4 with phi at t, t + h/2, t + h
      ScalarField half(lat_, Rep::fourier);
      for (std::size_t q = 0; q < N; ++q)
        half.at(0, q) = (-prev.at(0, q) + 6.0 * phi.at(0, q) + 3.0 * next.at(0, q)) / 8.0;
      const ScalarField x0 = phi.as(Rep::physical), xh = half.as(Rep::physical), x1 = next.as(Rep::physical);
      const SpinorField k1 = dirac_rhs(psi, x0);
      SpinorField tmp = psi;
      tmp.axpy(0.5 * h_, k1);
      const SpinorField k2 = dirac_rhs(tmp, xh);
      tmp = psi;
      tmp.axpy(0.5 * h_, k2);
      const SpinorField k3 = dirac_rhs(tmp, xh);
      tmp = psi;
      tmp.axpy(h_, k3);
      const SpinorField k4 = dirac_rhs(tmp, x1);
      psi.axpy(h_ / 6.0, k1);
      psi.axpy(h_ / 3.0, k2);
      psi.axpy(h_ / 3.0, k3);
      psi.axpy(h_ / 6.0, k4);
      prev = std::move(phi);
      phi = next;
      F = source(psi);
      if (!psi.finite() || !phi.finite()) throw BlowUpError("reference solver: non-finite state");
    }
    return out;
  }

 private:
  /// psi^dagger beta psi, returned in Fourier space (zero without coupling).
  ScalarField source(const SpinorField& psi) const {
    if (!coupling_) return ScalarField(lat_, Rep::fourier);
    ScalarField F = scalar_source(psi);
    F.fft_forward();
    return F;
  }

  /// -i H(xi) psi + i (phi beta psi)^
  SpinorField dirac_rhs(const SpinorField& psi, const ScalarField& phi_x) const {
    SpinorField out(lat_, Rep::fourier);
    const cd I(0.0, 1.0);
    for (std::size_t q = 0; q < lat_->size(); ++q) out.set_spinor(q, -I * (H_[q] * psi.spinor(q)));
    if (!coupling_) return out;
    SpinorField x = psi.as(Rep::physical);
    for (std::size_t q = 0; q < lat_->size(); ++q) {
      const double r = phi_x.at(0, q).real();
      x.at(0, q) *= r;
      x.at(1, q) *= r;
      x.at(2, q) *= -r;
      x.at(3, q) *= -r;
    }
    x.fft_forward();
    out.axpy(I, x);
    return out;
  }

  LatticePtr lat_;
  MassParams ms_;
  double h_;
  bool coupling_;
  std::vector<double> om_, cos_, sin_over_, one_minus_cos_, vel_;
  std::vector<Mat4> H_;
};

inline std::vector<SecondOrderState> solve_second_order_reference(const SecondOrderState& init, const MassParams& ms,
                                                                  double T, double dt, int output_every,
                                                                  bool coupling = true) {
  SecondOrderSolver s(init.psi.lattice_ptr(), ms, dt, coupling);
  return s.run(init, T, output_every);
}

// ---------------------------------------------------------------------------
// Picard iteration

struct PicardOptions {
  double T = 5.0;
  int nt = 50;  // trapezoid intervals
  int n_iter = 6;
  bool coupling = true;
  double divergence_factor = 1e6;
};

struct PicardResult {
  std::vector<double> distances;  // sup_t ||u^{(n+1)}(t) - u^{(n)}(t)||_2, n = 0, 1, ...
  std::vector<double> ratios;     // distances[n] / distances[n-1]
  bool diverged = false;
  std::string message;
};

/// Iterates u^{(n+1)}(t) = E(t) u0 + int_0^t E(t - s) N(u^{(n)}(s)) ds starting from the
/// free evolution. Works with interaction variables w = E(-t) u on a uniform grid
/// with the trapezoid rule, updating the stored iterate in place.
inline PicardResult picard_iterate(const DKGState& u0, const PicardOptions& opt) {
  if (opt.nt < 1 || opt.n_iter < 1) throw std::invalid_argument("picard: nt and n_iter must be positive");
  DKGSystem sys(u0.psi_p.lattice_ptr(), u0.masses, opt.coupling);
  const double h = opt.T / opt.nt;
  DKGState w0 = u0;
  w0.psi_p.ensure(Rep::fourier);
  w0.psi_m.ensure(Rep::fourier);
  w0.phi_p.ensure(Rep::fourier);
  w0.t = 0.0;
  std::vector<DKGState> w(opt.nt + 1, w0);
  for (int i = 0; i <= opt.nt; ++i) w[i].t = i * h;
  // g(s) = E(-s) N(E(s) w(s))
  auto g = [&](const DKGState& wi, Derivative& out) {
    DKGState u = wi;
    u.t = 0.0;
    sys.free_flow(u, wi.t);
    sys.nonlinear(u, out);
    sys.free_flow(out, -wi.t);
  };
  PicardResult res;
  const double scale0 = std::sqrt(w0.psi_p.norm_sq() + w0.psi_m.norm_sq() + w0.phi_p.norm_sq());
  for (int it = 0; it < opt.n_iter; ++it) {
    Derivative gprev, gcur;
    g(w[0], gprev);
    DKGState acc = w0;  // running value of the new iterate
    double dmax = 0.0;
    for (int i = 1; i <= opt.nt; ++i) {
      g(w[i], gcur);
      DKGSystem::axpy(acc, 0.5 * h, gprev);
      DKGSystem::axpy(acc, 0.5 * h, gcur);
      const double d = std::sqrt(std::pow(l2_distance(acc.psi_p, w[i].psi_p), 2) +
                                 std::pow(l2_distance(acc.psi_m, w[i].psi_m), 2) +
                                 std::pow(l2_distance(acc.phi_p, w[i].phi_p), 2));
      dmax = std::max(dmax, d);
      std::swap(gprev, gcur);
      const double t = w[i].t;
      w[i] = acc;
      w[i].t = t;
    }
    res.distances.push_back(dmax);
    if (it > 0) {
      const double prev = res.distances[it - 1];
      res.ratios.push_back(prev > 0.0 ? dmax / prev : 0.0);
    }
    if (!std::isfinite(dmax) || (scale0 > 0.0 && dmax > opt.divergence_factor * scale0)) {
      res.diverged = true;
      res.message = "Picard iteration diverged at iterate " + std::to_string(it + 1);
      break;
    }
  }
  if (!res.diverged && res.distances.size() >= 3 && res.distances.back() > res.distances.front())
    res.message = "distances did not decrease";
  return res;
}

// ---------------------------------------------------------------------------
// scattering

struct ScatteringProfile {
  std::vector<double> times;            // trajectory times
  std::vector<double> pullback_drift;   // ||W(t) - W(t0)||
  std::vector<double> dyadic_times;     // t with both t and t/2 present, increasing
  std::vector<double> cauchy;           // ||W(t) - W(t/2)||
  double two_variation = 0.0;           // sum ||W(t_{i+1}) - W(t_i)||^2
  bool wrap_warning = false;            // window exceeds L/4
};

/// Pullback W_s = e^{+ist<D>_M} psi_s, V = e^{it<D>_m} phi_+.
inline DKGState pullback(const DKGState& s) {
  DKGState w = s;
  w.psi_p.ensure(Rep::fourier);
  w.psi_m.ensure(Rep::fourier);
  w.phi_p.ensure(Rep::fourier);
  const FrequencyLattice& lat = s.lattice();
  const auto bM = lat.bracket_table(s.masses.M), bm = lat.bracket_table(s.masses.m);
  for (std::size_t q = 0; q < lat.size(); ++q) {
    const cd e = std::exp(cd(0.0, s.t * bM[q]));
    for (int c = 0; c < 4; ++c) {
      w.psi_p.at(c, q) *= e;
      w.psi_m.at(c, q) *= std::conj(e);
    }
    w.phi_p.at(0, q) *= std::exp(cd(0.0, s.t * bm[q]));
  }
  return w;
}

inline double state_distance(const DKGState& a, const DKGState& b) {
  return std::sqrt(std::pow(l2_distance(a.psi_p, b.psi_p), 2) + std::pow(l2_distance(a.psi_m, b.psi_m), 2) +
                   std::pow(l2_distance(a.phi_p, b.phi_p), 2));
}

inline ScatteringProfile scattering_profile(const std::vector<DKGState>& traj) {
  ScatteringProfile p;
  if (traj.empty()) return p;
  std::vector<DKGState> W;
  W.reserve(traj.size());
  for (const auto& s : traj) W.push_back(pullback(s));
  for (std::size_t i = 0; i < W.size(); ++i) {
    p.times.push_back(traj[i].t);
    p.pullback_drift.push_back(state_distance(W[i], W[0]));
    if (i > 0) p.two_variation += std::pow(state_distance(W[i], W[i - 1]), 2);
  }
  const double t0 = traj.front().t, tmax = traj.back().t;
  auto find = [&](double t) -> int {
    for (std::size_t i = 0; i < traj.size(); ++i)
      if (std::abs(traj[i].t - t) <= 1e-9 * std::max(1.0, std::abs(t))) return static_cast<int>(i);
    return -1;
  };
  std::vector<std::pair<double, double>> pts;
  for (double t = tmax; t - t0 > 0.0; t *= 0.5) {
    const int a = find(t), b = find(t0 + 0.5 * (t - t0));
    if (a < 0 || b < 0 || a == b) break;
    pts.push_back({t, state_distance(W[a], W[b])});
  }
  for (auto it = pts.rbegin(); it != pts.rend(); ++it) {
    p.dyadic_times.push_back(it->first);
    p.cauchy.push_back(it->second);
  }
  p.wrap_warning = (tmax - t0) > 0.25 * traj.front().lattice().box_length();
  return p;
}

}  // namespace dkg
