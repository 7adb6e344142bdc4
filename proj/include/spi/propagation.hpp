#pragma once

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include "spi/fft.hpp"
#include "spi/field.hpp"

namespace spi {

/// What happens to plane-wave components outside the unit circle u^2 + v^2 > 1.
///  - automatic: attenuate for d >= 0, zero for d < 0
///  - attenuate: exp(-k|d| sqrt(u^2+v^2-1)) regardless of direction
///  - zero:      drop evanescent components
///  - clamp:     exact exp(-k d sqrt(u^2+v^2-1)) for signed d, capped at gain_cap
enum class EvanescentPolicy { automatic, attenuate, zero, clamp };

struct PropagationSpec {
  double wavelength = 0.0;  // meters
  double distance = 0.0;    // meters; negative backpropagates
  EvanescentPolicy evanescent = EvanescentPolicy::automatic;
  double gain_cap = 1.0;    // only used by clamp
  bool band_limit = false;  // circular low-pass at the alias-free limit for |d|
  bool zero_pad = false;    // 2x zero padding before the transform

  double wavenumber() const { return 2.0 * std::numbers::pi / wavelength; }

  EvanescentPolicy resolved_policy() const {
    if (evanescent != EvanescentPolicy::automatic) return evanescent;
    return distance < 0.0 ? EvanescentPolicy::zero : EvanescentPolicy::attenuate;
  }

  void validate() const {
    if (!(wavelength > 0.0) || !std::isfinite(wavelength))
      throw Error(ErrorKind::parameter, "wavelength must be positive");
    if (!std::isfinite(distance)) throw Error(ErrorKind::parameter, "propagation distance must be finite");
    if (evanescent == EvanescentPolicy::clamp && !(gain_cap >= 1.0))
      throw Error(ErrorKind::parameter, "gain_cap must be >= 1 for the clamp policy");
  }
};

struct PropagationReport {
  bool gain_capped = false;   // clamp policy limited at least one bin
  std::size_t capped_bins = 0;
};

/// Angular-spectrum operator for a fixed grid and PropagationSpec. The transfer
/// function is evaluated once; forward(), adjoint() and split() reuse it.
class AngularSpectrum {
 public:
  AngularSpectrum(const GridShape& shape, const PropagationSpec& spec) : shape_(shape), spec_(spec) {
    spec_.validate();
    detail::require_fft_shape(shape_, "field");
    const std::size_t pad = spec_.zero_pad ? 2 : 1;
    cols_ = shape_.width * pad;
    rows_ = shape_.height * pad;
    off_x_ = (cols_ - shape_.width) / 2;
    off_y_ = (rows_ - shape_.height) / 2;
    build_transfer();
  }

  const GridShape& shape() const noexcept { return shape_; }
  const PropagationSpec& spec() const noexcept { return spec_; }
  const PropagationReport& report() const noexcept { return report_; }

  ComplexField forward(const ComplexField& field) const { return apply(field, false, Band::all); }

  /// Conjugate transpose of forward().
  ComplexField adjoint(const ComplexField& field) const { return apply(field, true, Band::all); }

  std::pair<ComplexField, ComplexField> split(const ComplexField& field) const {
    return {apply(field, false, Band::homogeneous), apply(field, false, Band::evanescent)};
  }

  /// Transfer factor at transform bin (kx, ky) and whether the bin is homogeneous.
  Complex transfer(std::size_t kx, std::size_t ky) const { return transfer_[ky * cols_ + kx]; }
  bool homogeneous_bin(std::size_t kx, std::size_t ky) const { return inside_[ky * cols_ + kx] != 0; }
  std::size_t transform_cols() const noexcept { return cols_; }
  std::size_t transform_rows() const noexcept { return rows_; }

 private:
  enum class Band { all, homogeneous, evanescent };

  void build_transfer() {
    transfer_.assign(rows_ * cols_, Complex{});
    inside_.assign(rows_ * cols_, 0);
    const double lambda = spec_.wavelength;
    const double d = spec_.distance;
    const double k = spec_.wavenumber();
    const double extent_x = static_cast<double>(cols_) * shape_.pitch;
    const double extent_y = static_cast<double>(rows_) * shape_.pitch;
    const auto policy = spec_.resolved_policy();
    // Alias-free limit of the band-limited angular spectrum method.
    const double limit_x = 1.0 / (lambda * std::sqrt(std::pow(2.0 * std::abs(d) / extent_x, 2) + 1.0));
    const double limit_y = 1.0 / (lambda * std::sqrt(std::pow(2.0 * std::abs(d) / extent_y, 2) + 1.0));

    for (std::size_t ky = 0; ky < rows_; ++ky) {
      const double fy = static_cast<double>(fft::signed_bin(ky, rows_)) / extent_y;
      for (std::size_t kx = 0; kx < cols_; ++kx) {
        const double fx = static_cast<double>(fft::signed_bin(kx, cols_)) / extent_x;
        const double u = lambda * fx;
        const double v = lambda * fy;
        const double rho2 = u * u + v * v;
        const std::size_t i = ky * cols_ + kx;
        Complex h;
        auto policy_case = policy;
        if (rho2 <= 1.0) {
          inside_[i] = 1;
          const double phase = k * d * std::sqrt(1.0 - rho2);
          h = {std::cos(phase), std::sin(phase)};
        } else {
          const double decay = k * std::sqrt(rho2 - 1.0);
          if (d == 0.0) policy_case = EvanescentPolicy::attenuate;
          switch (policy_case) {
            case EvanescentPolicy::zero: h = 0.0; break;
            case EvanescentPolicy::clamp: {
              const double gain = std::exp(-decay * d);
              if (gain > spec_.gain_cap) {
                h = spec_.gain_cap;
                report_.gain_capped = true;
                ++report_.capped_bins;
              } else {
                h = gain;
              }
              break;
            }
            default: h = std::exp(-decay * std::abs(d)); break;
          }
        }
        if (spec_.band_limit && d != 0.0) {
          const double ex = fx / limit_x;
          const double ey = fy / limit_y;
          if (ex * ex + ey * ey > 1.0) h = 0.0;
        }
        transfer_[i] = h;
      }
    }
  }

  ComplexField apply(const ComplexField& field, bool conjugate, Band band) const {
    if (!field.shape().same_samples(shape_))
      throw Error(ErrorKind::dimension, "field " + describe(field.shape()) + " vs operator " + describe(shape_));
    if (spec_.distance == 0.0 && band == Band::all) return field;

    std::vector<Complex> work(rows_ * cols_, Complex{});
    for (std::size_t y = 0; y < shape_.height; ++y)
      for (std::size_t x = 0; x < shape_.width; ++x) work[(y + off_y_) * cols_ + x + off_x_] = field(x, y);
    fft::forward(work, rows_, cols_);
    for (std::size_t i = 0; i < work.size(); ++i) {
      const bool keep = band == Band::all || (band == Band::homogeneous) == (inside_[i] != 0);
      work[i] = keep ? work[i] * (conjugate ? std::conj(transfer_[i]) : transfer_[i]) : Complex{};
    }
    fft::inverse(work, rows_, cols_);
    std::vector<Complex> out(shape_.size());
    for (std::size_t y = 0; y < shape_.height; ++y)
      for (std::size_t x = 0; x < shape_.width; ++x) out[y * shape_.width + x] = work[(y + off_y_) * cols_ + x + off_x_];
    return ComplexField(field.shape(), std::move(out));
  }

  GridShape shape_;
  PropagationSpec spec_;
  std::size_t cols_ = 0, rows_ = 0, off_x_ = 0, off_y_ = 0;
  std::vector<Complex> transfer_;
  std::vector<unsigned char> inside_;
  PropagationReport report_;
};

/// Angular-spectrum propagation E_h + E_e over spec.distance.
inline ComplexField propagate(const ComplexField& field, const PropagationSpec& spec,
                              PropagationReport* report = nullptr) {
  AngularSpectrum op(field.shape(), spec);
  if (report) *report = op.report();
  return op.forward(field);
}

/// Homogeneous (u^2+v^2 <= 1) and evanescent parts of propagate(field, spec).
inline std::pair<ComplexField, ComplexField> split_components(const ComplexField& field, const PropagationSpec& spec) {
  return AngularSpectrum(field.shape(), spec).split(field);
}

/// Applies the conjugate transpose of propagate(., spec) to an upstream gradient.
inline ComplexField transfer_gradient(const ComplexField& upstream, const PropagationSpec& spec) {
  return AngularSpectrum(upstream.shape(), spec).adjoint(upstream);
}

}  // namespace spi
