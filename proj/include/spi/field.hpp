#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "spi/error.hpp"

namespace spi {

using Complex = std::complex<double>;

constexpr bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

/// Sampling geometry shared by every grid: pixel counts and pixel pitch in meters.
struct GridShape {
  std::size_t width = 0;
  std::size_t height = 0;
  double pitch = 1.0;

  std::size_t size() const noexcept { return width * height; }
  bool same_samples(const GridShape& o) const noexcept { return width == o.width && height == o.height; }
  friend bool operator==(const GridShape&, const GridShape&) = default;
};

inline std::string describe(const GridShape& s) {
  return std::to_string(s.width) + "x" + std::to_string(s.height);
}

/// Row-major 2D array of samples on a uniform grid. Index (x, y) maps to y*width + x.
template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(std::size_t width, std::size_t height, double pitch = 1.0, T fill = T{})
      : shape_{width, height, pitch}, values_(width * height, fill) {
    check_shape();
  }
  Grid(GridShape shape, std::vector<T> values) : shape_(shape), values_(std::move(values)) {
    check_shape();
    if (values_.size() != shape_.size())
      throw Error(ErrorKind::dimension, "value count " + std::to_string(values_.size()) + " does not match grid " +
                                            describe(shape_));
  }

  const GridShape& shape() const noexcept { return shape_; }
  std::size_t width() const noexcept { return shape_.width; }
  std::size_t height() const noexcept { return shape_.height; }
  double pitch() const noexcept { return shape_.pitch; }
  std::size_t size() const noexcept { return values_.size(); }

  T& operator()(std::size_t x, std::size_t y) noexcept { return values_[y * shape_.width + x]; }
  const T& operator()(std::size_t x, std::size_t y) const noexcept { return values_[y * shape_.width + x]; }
  T& operator[](std::size_t i) noexcept { return values_[i]; }
  const T& operator[](std::size_t i) const noexcept { return values_[i]; }

  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }
  const std::vector<T>& data() const noexcept { return values_; }

 protected:
  std::vector<T>& mutable_data() noexcept { return values_; }

 private:
  void check_shape() const {
    if (shape_.width == 0 || shape_.height == 0)
      throw Error(ErrorKind::dimension, "grid must have at least one pixel");
    if (!(shape_.pitch > 0.0) || !std::isfinite(shape_.pitch))
      throw Error(ErrorKind::parameter, "pixel pitch must be positive and finite");
  }

  GridShape shape_{};
  std::vector<T> values_;
};

/// Unconstrained real grid: phases, masks, signed reconstruction estimates.
using RealGrid = Grid<double>;

namespace detail {

inline void require_fft_shape(const GridShape& s, const char* what) {
  if (s.width < 2 || s.height < 2 || !is_power_of_two(s.width) || !is_power_of_two(s.height))
    throw Error(ErrorKind::dimension,
                std::string(what) + " dimensions must be powers of two >= 2, got " + describe(s));
}

inline bool finite(const Complex& c) noexcept { return std::isfinite(c.real()) && std::isfinite(c.imag()); }

}  // namespace detail

/// Sampled complex scalar field. Dimensions are powers of two and every value is finite.
class ComplexField : public Grid<Complex> {
 public:
  ComplexField(std::size_t width, std::size_t height, double pitch, Complex fill = {})
      : Grid<Complex>(width, height, pitch, fill) {
    detail::require_fft_shape(shape(), "field");
    if (!detail::finite(fill)) throw Error(ErrorKind::invalid_field, "non-finite fill value");
  }
  ComplexField(GridShape shape, std::vector<Complex> values) : Grid<Complex>(shape, std::move(values)) {
    detail::require_fft_shape(this->shape(), "field");
    for (const auto& v : this->values())
      if (!detail::finite(v)) throw Error(ErrorKind::invalid_field, "field contains NaN or Inf");
  }
};

/// Nonnegative finite intensity samples on a power-of-two grid.
class IntensityImage : public Grid<double> {
 public:
  IntensityImage(std::size_t width, std::size_t height, double pitch, double fill = 0.0)
      : Grid<double>(width, height, pitch, fill) {
    detail::require_fft_shape(shape(), "image");
    if (!(fill >= 0.0) || !std::isfinite(fill)) throw Error(ErrorKind::invalid_field, "intensity must be >= 0");
  }
  IntensityImage(GridShape shape, std::vector<double> values) : Grid<double>(shape, std::move(values)) {
    detail::require_fft_shape(this->shape(), "image");
    for (double v : this->values())
      if (!(v >= 0.0) || !std::isfinite(v))
        throw Error(ErrorKind::invalid_field, "intensity values must be finite and >= 0");
  }
  /// Clamps negative samples of a real grid to zero.
  static IntensityImage clamped(const RealGrid& g) {
    std::vector<double> v(g.data());
    for (auto& x : v) {
      if (!std::isfinite(x)) throw Error(ErrorKind::invalid_field, "non-finite sample");
      x = std::max(x, 0.0);
    }
    return IntensityImage(g.shape(), std::move(v));
  }
};

inline ComplexField field_from_amplitude(const RealGrid& amplitude, const RealGrid& phase) {
  if (!amplitude.shape().same_samples(phase.shape()))
    throw Error(ErrorKind::dimension,
                "amplitude " + describe(amplitude.shape()) + " vs phase " + describe(phase.shape()));
  std::vector<Complex> out(amplitude.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(amplitude[i] >= 0.0)) throw Error(ErrorKind::parameter, "amplitude must be >= 0");
    out[i] = std::polar(amplitude[i], phase[i]);
  }
  return ComplexField(amplitude.shape(), std::move(out));
}

/// Zero-phase field, the binary amplitude object case.
inline ComplexField field_from_amplitude(const RealGrid& amplitude) {
  return field_from_amplitude(amplitude, RealGrid(amplitude.width(), amplitude.height(), amplitude.pitch()));
}

inline IntensityImage intensity(const ComplexField& field) {
  std::vector<double> out(field.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::norm(field[i]);
  return IntensityImage(field.shape(), std::move(out));
}

/// Scales so the maximum is exactly 1.
inline IntensityImage normalize(const IntensityImage& image) {
  const auto vals = image.values();
  const double peak = *std::max_element(vals.begin(), vals.end());
  if (!(peak > 0.0)) throw Error(ErrorKind::degenerate, "cannot normalize an all-zero image");
  std::vector<double> out(vals.begin(), vals.end());
  for (auto& v : out) v /= peak;
  return IntensityImage(image.shape(), std::move(out));
}

/// Elementwise square root; maps an intensity to its zero-phase amplitude.
inline RealGrid amplitude_of(const IntensityImage& image) {
  std::vector<double> out(image.data());
  for (auto& v : out) v = std::sqrt(v);
  return RealGrid(image.shape(), std::move(out));
}

}  // namespace spi
