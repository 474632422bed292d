#pragma once

// Thin RAII layer over FFTW3 complex transforms. Plans are cached per
// (shape, direction); planning is serialized, execution is reentrant.

#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <new>
#include <stdexcept>
#include <tuple>
#include <vector>

#include <fftw3.h>

namespace dkg {

/// Allocator returning FFTW-aligned storage so that SIMD plans apply.
template <class T>
struct FftwAllocator {
  using value_type = T;
  FftwAllocator() = default;
  template <class U>
  FftwAllocator(const FftwAllocator<U>&) {}
  T* allocate(std::size_t n) {
    void* p = fftw_malloc(n * sizeof(T));
    if (!p && n) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) { fftw_free(p); }
  template <class U>
  bool operator==(const FftwAllocator<U>&) const { return true; }
  template <class U>
  bool operator!=(const FftwAllocator<U>&) const { return false; }
};

using AlignedCVec = std::vector<std::complex<double>, FftwAllocator<std::complex<double>>>;

namespace detail {

class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache c;
    return c;
  }

  /// Plan for an in-place rank-d transform of the given shape.
  fftw_plan get(const std::vector<int>& shape, int sign, bool aligned) {
    std::lock_guard<std::mutex> lock(mu_);
    auto key = std::make_tuple(shape, sign, aligned);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    std::size_t total = 1;
    for (int s : shape) total *= static_cast<std::size_t>(s);
    fftw_complex* buf = fftw_alloc_complex(total);
    fftw_plan p = fftw_plan_dft(static_cast<int>(shape.size()), shape.data(), buf, buf, sign,
                                aligned ? FFTW_ESTIMATE : (FFTW_ESTIMATE | FFTW_UNALIGNED));
    fftw_free(buf);
    if (!p) throw std::runtime_error("fftw planning failed");
    plans_.emplace(key, p);
    return p;
  }

  PlanCache(const PlanCache&) = delete;
  PlanCache& operator=(const PlanCache&) = delete;

 private:
  PlanCache() = default;
  ~PlanCache() {
    for (auto& kv : plans_) fftw_destroy_plan(kv.second);
  }
  std::mutex mu_;
  std::map<std::tuple<std::vector<int>, int, bool>, fftw_plan> plans_;
};

}  // namespace detail

/// Unnormalized in-place transform; sign = FFTW_FORWARD (-1) or FFTW_BACKWARD (+1).
inline void fft_inplace(std::complex<double>* data, const std::vector<int>& shape, int sign) {
  auto* d = reinterpret_cast<fftw_complex*>(data);
  const bool aligned = fftw_alignment_of(reinterpret_cast<double*>(data)) == 0;
  fftw_plan p = detail::PlanCache::instance().get(shape, sign, aligned);
  fftw_execute_dft(p, d, d);
}

inline void fft3_inplace(std::complex<double>* data, int n, int sign) {
  fft_inplace(data, {n, n, n}, sign);
}

inline void fft1_inplace(std::complex<double>* data, int n, int sign) {
  fft_inplace(data, {n}, sign);
}

}  // namespace dkg
