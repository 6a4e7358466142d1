// FFTW-backed 4D complex transforms with a process-wide plan cache.
#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <new>
#include <utility>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif
#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace dkg {

namespace detail {
/// Field buffers are multi-megabyte and short-lived; keeping them on the heap
/// instead of fresh mmaps avoids a page-fault storm on every transform.
inline void tune_allocator() {
  [[maybe_unused]] static const bool once = [] {
#ifdef __GLIBC__
    mallopt(M_MMAP_THRESHOLD, 512 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
    return true;
  }();
}
}  // namespace detail

/// Allocator returning FFTW-aligned storage so plans can run on any field buffer.
template <class T>
struct FftwAllocator {
  using value_type = T;
  FftwAllocator() = default;
  template <class U>
  FftwAllocator(const FftwAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) {
    if (n == 0) return nullptr;
    detail::tune_allocator();
    void* p = fftw_malloc(n * sizeof(T));
    if (!p) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) noexcept { fftw_free(p); }
  template <class U>
  bool operator==(const FftwAllocator<U>&) const noexcept { return true; }
};

template <class T>
using aligned_vector = std::vector<T, FftwAllocator<T>>;

namespace detail {

struct PlanPair {
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
};

class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  void set_threads(int t) {
    std::lock_guard lock(mu_);
    threads_ = t < 1 ? 1 : t;
#ifdef _OPENMP
    omp_set_num_threads(threads_);
#endif
  }
  int threads() const { return threads_; }

  PlanPair get(int n) {
    std::lock_guard lock(mu_);
    const auto key = std::make_pair(n, threads_);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
#ifdef DKG_FFTW_THREADS
    if (!threads_initialized_) {
      fftw_init_threads();
      threads_initialized_ = true;
    }
    fftw_plan_with_nthreads(threads_);
#endif
    const std::size_t m = static_cast<std::size_t>(n);
    const std::size_t total = m * m * m * m;
    aligned_vector<std::complex<double>> scratch(total);
    auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
    const int dims[4] = {n, n, n, n};
    PlanPair p;
    p.forward = fftw_plan_dft(4, dims, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
    p.backward = fftw_plan_dft(4, dims, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
    plans_.emplace(key, p);
    return p;
  }

  ~PlanCache() {
    for (auto& [k, p] : plans_) {
      fftw_destroy_plan(p.forward);
      fftw_destroy_plan(p.backward);
    }
  }

 private:
  PlanCache() = default;
  std::mutex mu_;
  int threads_ = 1;
  bool threads_initialized_ = false;
  std::map<std::pair<int, int>, PlanPair> plans_;
};

}  // namespace detail

/// Worker threads for FFTs and per-mode loops. Results are bit-reproducible
/// for a fixed thread count.
inline void set_threads(int t) { detail::PlanCache::instance().set_threads(t); }
inline int threads() { return detail::PlanCache::instance().threads(); }

/// Unnormalized in-place 4D DFT (FFTW sign conventions) on an n^4 buffer.
inline void fft4_forward(int n, std::complex<double>* data) {
  const auto p = detail::PlanCache::instance().get(n);
  auto* d = reinterpret_cast<fftw_complex*>(data);
  fftw_execute_dft(p.forward, d, d);
}

inline void fft4_backward(int n, std::complex<double>* data) {
  const auto p = detail::PlanCache::instance().get(n);
  auto* d = reinterpret_cast<fftw_complex*>(data);
  fftw_execute_dft(p.backward, d, d);
}

}  // namespace dkg
