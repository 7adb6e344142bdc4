#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "spi/encoding.hpp"
#include "spi/field.hpp"

namespace spi {

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

namespace detail {

inline std::vector<double> gaussian_taps(int size, double sigma) {
  std::vector<double> taps(static_cast<std::size_t>(size));
  const double centre = 0.5 * (size - 1);
  for (int i = 0; i < size; ++i) taps[i] = std::exp(-0.5 * (i - centre) * (i - centre) / (sigma * sigma));
  const double sum = std::accumulate(taps.begin(), taps.end(), 0.0);
  for (auto& t : taps) t /= sum;
  return taps;
}

/// Separable 'valid' correlation of a w x h image with the outer product of taps.
inline std::vector<double> filter_valid(std::span<const double> img, std::size_t w, std::size_t h,
                                        const std::vector<double>& taps) {
  const std::size_t k = taps.size();
  const std::size_t ow = w - k + 1, oh = h - k + 1;
  std::vector<double> rows(oh * w, 0.0);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += taps[t] * img[(y + t) * w + x];
      rows[y * w + x] = acc;
    }
  std::vector<double> out(oh * ow, 0.0);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += taps[t] * rows[y * w + x + t];
      out[y * ow + x] = acc;
    }
  return out;
}

}  // namespace detail

/// Mean structural similarity over all windows that fit inside the image.
inline double ssim(const RealGrid& a, const RealGrid& b, const SsimParams& params = {}) {
  if (!a.shape().same_samples(b.shape()))
    throw Error(ErrorKind::dimension, "ssim inputs " + describe(a.shape()) + " vs " + describe(b.shape()));
  const auto win = static_cast<std::size_t>(params.window);
  if (a.width() < win || a.height() < win)
    throw Error(ErrorKind::dimension, "image smaller than the SSIM window");
  const std::size_t w = a.width(), h = a.height();
  const auto taps = detail::gaussian_taps(params.window, params.sigma);
  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = detail::filter_valid(a.values(), w, h, taps);
  const auto mu_b = detail::filter_valid(b.values(), w, h, taps);
  const auto e_aa = detail::filter_valid(aa, w, h, taps);
  const auto e_bb = detail::filter_valid(bb, w, h, taps);
  const auto e_ab = detail::filter_valid(ab, w, h, taps);
  const double c1 = std::pow(params.k1 * params.dynamic_range, 2);
  const double c2 = std::pow(params.k2 * params.dynamic_range, 2);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double mab = mu_a[i] * mu_b[i];
    const double maa = mu_a[i] * mu_a[i];
    const double mbb = mu_b[i] * mu_b[i];
    const double var_a = e_aa[i] - maa;
    const double var_b = e_bb[i] - mbb;
    const double cov = e_ab[i] - mab;
    total += ((2.0 * mab + c1) * (2.0 * cov + c2)) / ((maa + mbb + c1) * (var_a + var_b + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

struct SnrResult {
  double value = 0.0;
  bool infinite = false;  // background is exactly constant
};

/// mean(signal region) / std(background region), population standard deviation.
inline SnrResult snr(const RealGrid& image, const BinaryMask& signal_mask) {
  if (!image.shape().same_samples(signal_mask.shape()))
    throw Error(ErrorKind::dimension, "signal mask does not match image");
  double sig_sum = 0.0, bg_sum = 0.0;
  std::size_t sig_n = 0, bg_n = 0;
  for (std::size_t i = 0; i < image.size(); ++i) {
    if (signal_mask[i]) {
      sig_sum += image[i];
      ++sig_n;
    } else {
      bg_sum += image[i];
      ++bg_n;
    }
  }
  if (sig_n == 0) throw Error(ErrorKind::degenerate, "signal mask is empty");
  if (bg_n < 2) throw Error(ErrorKind::degenerate, "background region needs at least two pixels");
  const double bg_mean = bg_sum / static_cast<double>(bg_n);
  double var = 0.0;
  bool constant = true;
  double first = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < image.size(); ++i) {
    if (signal_mask[i]) continue;
    if (std::isnan(first)) first = image[i];
    constant = constant && image[i] == first;
    var += (image[i] - bg_mean) * (image[i] - bg_mean);
  }
  // the rounded mean of equal values can differ from them, so test equality directly
  if (constant) return {std::numeric_limits<double>::infinity(), true};
  const double sigma = std::sqrt(var / static_cast<double>(bg_n));
  const double mu = sig_sum / static_cast<double>(sig_n);
  return {mu / sigma, false};
}

enum class ProfileAxis { rows, cols };

/// Mean along the other axis (per column for cols, per row for rows), scaled to max 1.
inline std::vector<double> line_profile(const RealGrid& image, ProfileAxis axis) {
  const std::size_t w = image.width(), h = image.height();
  const bool per_col = axis == ProfileAxis::cols;
  std::vector<double> profile(per_col ? w : h, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) profile[per_col ? x : y] += image(x, y);
  const double count = static_cast<double>(per_col ? h : w);
  for (auto& v : profile) v /= count;
  const double peak = *std::max_element(profile.begin(), profile.end());
  if (!(peak > 0.0)) throw Error(ErrorKind::degenerate, "profile has no positive values");
  for (auto& v : profile) v /= peak;
  return profile;
}

/// Counts lobes of a profile separated by dips whose depth, relative to the
/// lower of the two neighbouring maxima, is at least dip_threshold.
inline int count_resolved_slits(std::span<const double> profile, double dip_threshold = 0.2) {
  if (profile.empty()) return 0;
  const double keep = 1.0 - dip_threshold;
  int lobes = 0;
  double peak = profile[0];
  double valley = profile[0];
  for (std::size_t i = 1; i < profile.size(); ++i) {
    const double v = profile[i];
    const double lower = std::min(peak, v);
    if (lower > 0.0 && v > valley && valley <= keep * lower) {
      ++lobes;
      peak = v;
      valley = v;
    } else if (v > peak) {
      peak = v;
      valley = v;
    } else {
      valley = std::min(valley, v);
    }
  }
  if (peak > 0.0) ++lobes;
  return lobes;
}

/// Half-open index range [begin, end).
struct Interval {
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Mean relative dip depth across the gaps between consecutive known slit
/// ranges: 1 - min(gap) / min(max(left slit), max(right slit)).
inline double slit_dip_contrast(std::span<const double> profile, std::span<const Interval> slits) {
  if (slits.size() < 2) throw Error(ErrorKind::parameter, "need at least two slits");
  double total = 0.0;
  for (std::size_t s = 0; s + 1 < slits.size(); ++s) {
    const auto peak_of = [&](const Interval& iv) {
      return *std::max_element(profile.begin() + static_cast<long>(iv.begin), profile.begin() + static_cast<long>(iv.end));
    };
    const double left = peak_of(slits[s]);
    const double right = peak_of(slits[s + 1]);
    const auto gap_begin = profile.begin() + static_cast<long>(slits[s].end);
    const auto gap_end = profile.begin() + static_cast<long>(slits[s + 1].begin);
    const double lower = std::min(left, right);
    if (gap_begin >= gap_end || !(lower > 0.0)) continue;
    total += 1.0 - *std::min_element(gap_begin, gap_end) / lower;
  }
  return total / static_cast<double>(slits.size() - 1);
}

}  // namespace spi
