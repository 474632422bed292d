#pragma once

// Value-semantic multi-component fields on a periodic lattice with a
// physical/Fourier representation flag, plus Fourier multipliers.
//
// Normalization: the discrete transform is unitary, so sqrt(h^3 sum |v|^2)
// is the L2 norm in either representation. A unit plane wave e^{i xi0 x}
// therefore maps to sqrt(n^3) at xi0.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <type_traits>
#include <vector>

#include "dkg/dirac_algebra.hpp"
#include "dkg/fft.hpp"
#include "dkg/lattice.hpp"

namespace dkg {

enum class Rep { physical, fourier };

inline const char* to_string(Rep r) { return r == Rep::physical ? "physical" : "fourier"; }

template <int NC>
class Field {
  static_assert(NC >= 1, "at least one component");

 public:
  static constexpr int components = NC;

  Field() = default;
  explicit Field(LatticePtr lattice, Rep rep = Rep::physical)
      : lat_(std::move(lattice)), rep_(rep) {
    if (!lat_) throw std::invalid_argument("field: null lattice");
    data_.assign(static_cast<std::size_t>(NC) * lat_->size(), cd(0.0, 0.0));
  }

  const FrequencyLattice& lattice() const { return *lat_; }
  const LatticePtr& lattice_ptr() const { return lat_; }
  Rep rep() const { return rep_; }
  std::size_t points() const { return lat_->size(); }
  bool empty() const { return !lat_; }

  cd& at(int c, std::size_t q) { return data_[static_cast<std::size_t>(c) * points() + q]; }
  const cd& at(int c, std::size_t q) const {
    return data_[static_cast<std::size_t>(c) * points() + q];
  }
  cd* component(int c) { return data_.data() + static_cast<std::size_t>(c) * points(); }
  const cd* component(int c) const {
    return data_.data() + static_cast<std::size_t>(c) * points();
  }
  AlignedCVec& raw() { return data_; }
  const AlignedCVec& raw() const { return data_; }

  Spinor spinor(std::size_t q) const {
    static_assert(NC == 4, "spinor access needs four components");
    Spinor v;
    for (int c = 0; c < 4; ++c) v(c) = at(c, q);
    return v;
  }
  void set_spinor(std::size_t q, const Spinor& v) {
    static_assert(NC == 4, "spinor access needs four components");
    for (int c = 0; c < 4; ++c) at(c, q) = v(c);
  }

  void fft_forward() {
    if (rep_ != Rep::physical) throw std::logic_error("fft_forward: field is not in physical representation");
    transform(FFTW_FORWARD);
    rep_ = Rep::fourier;
  }
  void fft_inverse() {
    if (rep_ != Rep::fourier) throw std::logic_error("fft_inverse: field is not in Fourier representation");
    transform(FFTW_BACKWARD);
    rep_ = Rep::physical;
  }
  /// Converts to the requested representation if needed.
  void ensure(Rep r) {
    if (rep_ == r) return;
    if (r == Rep::fourier) fft_forward();
    else fft_inverse();
  }
  /// Relabels the representation without transforming; for buffers about to be overwritten.
  void relabel(Rep r) { rep_ = r; }
  Field as(Rep r) const {
    Field f = *this;
    f.ensure(r);
    return f;
  }

  double norm_sq() const {
    double s = 0.0;
    for (const cd& v : data_) s += std::norm(v);
    return s * lat_->cell_volume();
  }
  double l2_norm() const { return std::sqrt(norm_sq()); }
  double max_abs() const {
    double m = 0.0;
    for (const cd& v : data_) m = std::max(m, std::abs(v));
    return m;
  }
  bool finite() const {
    for (const cd& v : data_)
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
    return true;
  }

  void set_zero() { std::fill(data_.begin(), data_.end(), cd(0.0, 0.0)); }

  Field& operator+=(const Field& o) {
    check_compatible(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Field& operator-=(const Field& o) {
    check_compatible(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Field& operator*=(cd a) {
    for (cd& v : data_) v *= a;
    return *this;
  }
  /// this += a * o
  Field& axpy(cd a, const Field& o) {
    check_compatible(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += a * o.data_[i];
    return *this;
  }
  friend Field operator+(Field a, const Field& b) { return a += b; }
  friend Field operator-(Field a, const Field& b) { return a -= b; }
  friend Field operator*(cd s, Field a) { return a *= s; }

  void check_compatible(const Field& o) const {
    if (!lat_ || !o.lat_ || *lat_ != *o.lat_) throw std::invalid_argument("field: lattice mismatch");
    if (rep_ != o.rep_) throw std::invalid_argument("field: representation mismatch");
  }

 private:
  void transform(int sign) {
    const int n = lat_->n();
    const double scale = 1.0 / std::sqrt(static_cast<double>(points()));
    for (int c = 0; c < NC; ++c) {
      fft3_inplace(component(c), n, sign);
    }
    for (cd& v : data_) v *= scale;
  }

  LatticePtr lat_;
  AlignedCVec data_;
  Rep rep_ = Rep::physical;
};

using SpinorField = Field<4>;
using ScalarField = Field<1>;

/// L2 norm of a - b.
template <int NC>
double l2_distance(const Field<NC>& a, const Field<NC>& b) {
  a.check_compatible(b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.raw().size(); ++i) s += std::norm(a.raw()[i] - b.raw()[i]);
  return std::sqrt(s * a.lattice().cell_volume());
}

/// Multiply every component by a scalar symbol table indexed by mode.
/// The field keeps its representation.
template <int NC>
void apply_scalar_table(Field<NC>& f, const std::vector<cd>& table) {
  if (table.size() != f.points()) throw std::invalid_argument("multiplier table size mismatch");
  const Rep r = f.rep();
  f.ensure(Rep::fourier);
  for (int c = 0; c < NC; ++c) {
    cd* p = f.component(c);
    for (std::size_t q = 0; q < f.points(); ++q) p[q] *= table[q];
  }
  f.ensure(r);
}

template <int NC>
void apply_scalar_table(Field<NC>& f, const std::vector<double>& table) {
  if (table.size() != f.points()) throw std::invalid_argument("multiplier table size mismatch");
  const Rep r = f.rep();
  f.ensure(Rep::fourier);
  for (int c = 0; c < NC; ++c) {
    cd* p = f.component(c);
    for (std::size_t q = 0; q < f.points(); ++q) p[q] *= table[q];
  }
  f.ensure(r);
}

/// Tabulate a symbol over all modes of a lattice.
template <class Symbol>
auto tabulate(const FrequencyLattice& lat, Symbol&& symbol) {
  using T = std::decay_t<decltype(symbol(std::declval<const Vec3&>()))>;
  std::vector<T> t(lat.size());
  for (std::size_t q = 0; q < lat.size(); ++q) t[q] = symbol(lat.xi(q));
  return t;
}

/// Pointwise multiplication by symbol(xi) in the Fourier representation.
template <int NC, class Symbol>
Field<NC> apply_scalar_multiplier(Field<NC> f, Symbol&& symbol) {
  const auto t = tabulate(f.lattice(), std::forward<Symbol>(symbol));
  if constexpr (std::is_same_v<typename decltype(t)::value_type, cd>) {
    apply_scalar_table(f, t);
  } else {
    std::vector<double> d(t.begin(), t.end());
    apply_scalar_table(f, d);
  }
  return f;
}

/// Per-mode 4x4 product with a tabulated matrix symbol.
inline void apply_matrix_table(SpinorField& f, const std::vector<Mat4>& table) {
  if (table.size() != f.points()) throw std::invalid_argument("multiplier table size mismatch");
  const Rep r = f.rep();
  f.ensure(Rep::fourier);
  for (std::size_t q = 0; q < f.points(); ++q) f.set_spinor(q, table[q] * f.spinor(q));
  f.ensure(r);
}

template <class Symbol>
SpinorField apply_matrix_multiplier(SpinorField f, Symbol&& symbol) {
  std::vector<Mat4> t(f.points());
  for (std::size_t q = 0; q < f.points(); ++q) t[q] = symbol(f.lattice().xi(q));
  apply_matrix_table(f, t);
  return f;
}

/// Projector tables Pi^M_s(xi) for every lattice mode.
inline std::vector<Mat4> projector_table(const FrequencyLattice& lat, Sign s, double mass) {
  std::vector<Mat4> t(lat.size());
  for (std::size_t q = 0; q < lat.size(); ++q) t[q] = projector(s, mass, lat.xi(q));
  return t;
}

/// Zero the unpaired Nyquist planes.
template <int NC>
void mask_nyquist(Field<NC>& f) {
  const Rep r = f.rep();
  f.ensure(Rep::fourier);
  for (std::size_t q = 0; q < f.points(); ++q)
    if (f.lattice().is_nyquist(q))
      for (int c = 0; c < NC; ++c) f.at(c, q) = 0.0;
  f.ensure(r);
}

/// Fill a field with a plane wave amp * v * e^{i xi0 . x}, xi0 = dk * (a, b, c).
template <int NC>
Field<NC> plane_wave(LatticePtr lat, int a, int b, int c, const Eigen::Matrix<cd, NC, 1>& v) {
  Field<NC> f(lat, Rep::physical);
  const Vec3 xi0 = lat->dk() * Vec3(a, b, c);
  for (std::size_t q = 0; q < f.points(); ++q) {
    const cd ph = std::exp(cd(0.0, xi0.dot(lat->x(q))));
    for (int k = 0; k < NC; ++k) f.at(k, q) = v(k) * ph;
  }
  return f;
}

/// Weighted Sobolev norm ||<D>^s f||_2 (mass 1 bracket).
template <int NC>
double sobolev_norm(const Field<NC>& f, double s) {
  Field<NC> g = f.as(Rep::fourier);
  const FrequencyLattice& lat = g.lattice();
  double acc = 0.0;
  for (std::size_t q = 0; q < g.points(); ++q) {
    const double w = std::pow(bracket(lat.xi(q), 1.0), 2.0 * s);
    for (int c = 0; c < NC; ++c) acc += w * std::norm(g.at(c, q));
  }
  return std::sqrt(acc * lat.cell_volume());
}

}  // namespace dkg
