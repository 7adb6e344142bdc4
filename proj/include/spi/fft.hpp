#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <tuple>

#include "spi/field.hpp"

namespace spi::fft {

namespace detail {

struct FftwDeleter {
  void operator()(fftw_complex* p) const noexcept { fftw_free(p); }
};
using Buffer = std::unique_ptr<fftw_complex[], FftwDeleter>;

/// Process-wide plan cache. FFTW planning is not thread-safe; execution with
/// the new-array interface is, provided buffers share the planning alignment,
/// which holds because every buffer comes from fftw_malloc.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(std::size_t rows, std::size_t cols, int sign) {
    std::lock_guard lock(mutex_);
    const auto key = std::make_tuple(rows, cols, sign);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    Buffer scratch(fftw_alloc_complex(rows * cols));
    fftw_plan p = fftw_plan_dft_2d(static_cast<int>(rows), static_cast<int>(cols), scratch.get(), scratch.get(),
                                   sign, FFTW_ESTIMATE);
    plans_.emplace(key, p);
    return p;
  }

  PlanCache(const PlanCache&) = delete;
  PlanCache& operator=(const PlanCache&) = delete;

 private:
  PlanCache() = default;
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  std::mutex mutex_;
  std::map<std::tuple<std::size_t, std::size_t, int>, fftw_plan> plans_;
};

inline void transform(std::span<Complex> data, std::size_t rows, std::size_t cols, int sign) {
  Buffer buf(fftw_alloc_complex(rows * cols));
  auto* raw = reinterpret_cast<Complex*>(buf.get());
  std::copy(data.begin(), data.end(), raw);
  fftw_execute_dft(PlanCache::instance().get(rows, cols, sign), buf.get(), buf.get());
  std::copy(raw, raw + rows * cols, data.begin());
}

}  // namespace detail

/// In-place unnormalised forward 2D DFT of a row-major rows x cols array.
inline void forward(std::span<Complex> data, std::size_t rows, std::size_t cols) {
  detail::transform(data, rows, cols, FFTW_FORWARD);
}

/// In-place inverse 2D DFT including the 1/(rows*cols) factor.
inline void inverse(std::span<Complex> data, std::size_t rows, std::size_t cols) {
  detail::transform(data, rows, cols, FFTW_BACKWARD);
  const double scale = 1.0 / static_cast<double>(rows * cols);
  for (auto& v : data) v *= scale;
}

/// Signed frequency index of DFT bin k for a transform of length n.
constexpr long signed_bin(std::size_t k, std::size_t n) noexcept {
  return k < (n + 1) / 2 ? static_cast<long>(k) : static_cast<long>(k) - static_cast<long>(n);
}

}  // namespace spi::fft
