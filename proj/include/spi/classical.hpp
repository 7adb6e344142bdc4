#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "spi/encoding.hpp"
#include "spi/measurement.hpp"

namespace spi {

enum class Method { hspi, dgi, cstv, untrained };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::hspi: return "hspi";
    case Method::dgi: return "dgi";
    case Method::cstv: return "cstv";
    case Method::untrained: return "untrained";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "hspi") return Method::hspi;
  if (s == "dgi") return Method::dgi;
  if (s == "cstv") return Method::cstv;
  if (s == "untrained") return Method::untrained;
  throw Error(ErrorKind::parameter, "unknown method '" + s + "'");
}

/// Output of every reconstructor. Linear methods may produce signed estimates,
/// so the image is a RealGrid; all values are finite.
struct ReconResult {
  RealGrid image;
  Method method = Method::hspi;
  int iterations_used = 0;
  std::vector<double> residual_history;
};

/// Maps a signed estimate to [0, 1] by min/max; a constant input maps to zeros.
inline RealGrid rescale_unit(const RealGrid& g) {
  const auto [lo, hi] = std::minmax_element(g.values().begin(), g.values().end());
  const double span = *hi - *lo;
  std::vector<double> out(g.size(), 0.0);
  if (span > 0.0)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (g[i] - *lo) / span;
  return RealGrid(g.shape(), std::move(out));
}

/// Partial inverse Hadamard transform O(p) = (1/N) sum_i I_i P_i(p); unmeasured
/// coefficients are zero.
inline ReconResult hspi_reconstruct(const Measurement& meas, const PatternSet& set, double pitch = 1.0) {
  check_consistent(meas, set);
  const std::size_t n = set.order();
  PatternOperator op(set, GridShape{n, n, pitch});
  auto values = op.spread(meas.readings);
  const double inv_n = 1.0 / static_cast<double>(set.pixels());
  for (auto& v : values) v *= inv_n;
  return {RealGrid(GridShape{n, n, pitch}, std::move(values)), Method::hspi, 1, {}};
}

/// Normalised differential signal I'_i = I_i - (<I>/<S>) S_i. The correction is
/// skipped for rows whose pattern sum is below 1e-9 N (balanced rows) and when
/// <S> itself vanishes.
inline std::vector<double> normalized_differential_signal(const Measurement& meas, const PatternSet& set) {
  const std::size_t m = set.count();
  const double n = static_cast<double>(set.pixels());
  std::vector<double> s(m);
  for (std::size_t i = 0; i < m; ++i) s[i] = pattern_total_intensity(set, i);
  const double mean_i = std::accumulate(meas.readings.begin(), meas.readings.end(), 0.0) / static_cast<double>(m);
  const double mean_s = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(m);
  std::vector<double> out(meas.readings);
  if (std::abs(mean_s) < 1e-9 * n) return out;
  for (std::size_t i = 0; i < m; ++i)
    if (std::abs(s[i]) >= 1e-9 * n) out[i] -= mean_i / mean_s * s[i];
  return out;
}

/// Raw differential ghost-imaging correlation <(P_i - <P>)(I'_i - <I'>)>.
inline RealGrid dgi_estimate(const Measurement& meas, const PatternSet& set, double pitch = 1.0) {
  check_consistent(meas, set);
  const std::size_t m = set.count();
  if (m < 2) throw Error(ErrorKind::insufficient, "differential ghost imaging needs at least two patterns");
  const std::size_t n = set.order();
  PatternOperator op(set, GridShape{n, n, pitch});
  const auto signal = normalized_differential_signal(meas, set);
  const double inv_m = 1.0 / static_cast<double>(m);
  const double mean_signal = std::accumulate(signal.begin(), signal.end(), 0.0) * inv_m;
  std::vector<double> centered(m);
  for (std::size_t i = 0; i < m; ++i) centered[i] = signal[i] - mean_signal;
  const double centered_sum = std::accumulate(centered.begin(), centered.end(), 0.0);
  const auto mean_pattern = op.spread(std::vector<double>(m, inv_m));
  auto corr = op.spread(centered);
  for (std::size_t p = 0; p < corr.size(); ++p) corr[p] = (corr[p] - mean_pattern[p] * centered_sum) * inv_m;
  return RealGrid(GridShape{n, n, pitch}, std::move(corr));
}

/// DGI estimate rescaled to [0, 1].
inline ReconResult dgi_reconstruct(const Measurement& meas, const PatternSet& set, double pitch = 1.0) {
  return {rescale_unit(dgi_estimate(meas, set, pitch)), Method::dgi, 1, {}};
}

/// Anisotropic total variation sum |dx| + |dy| over interior differences.
inline double total_variation(std::span<const double> x, std::size_t w, std::size_t h) {
  double tv = 0.0;
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      const double v = x[r * w + c];
      if (c + 1 < w) tv += std::abs(v - x[r * w + c + 1]);
      if (r + 1 < h) tv += std::abs(v - x[(r + 1) * w + c]);
    }
  return tv;
}

namespace detail {

/// Nonnegative anisotropic TV proximal step: argmin_{x>=0} 0.5|x-b|^2 + weight TV(x),
/// solved approximately by `iters` fast gradient-projection steps on the dual.
inline std::vector<double> tv_prox_nonneg(const std::vector<double>& b, std::size_t w, std::size_t h, double weight,
                                          int iters) {
  const auto project = [](std::vector<double>& x) {
    for (auto& v : x) v = std::max(v, 0.0);
  };
  if (weight <= 0.0) {
    auto x = b;
    project(x);
    return x;
  }
  // Dual fields: p on horizontal differences (h x (w-1)), q on vertical ((h-1) x w),
  // both stored on a full w x h lattice with unused borders left at zero.
  const std::size_t size = w * h;
  std::vector<double> p(size, 0.0), q(size, 0.0), r(size, 0.0), s(size, 0.0), p_old(size), q_old(size);
  std::vector<double> x(size);
  // x = P_C(b - weight * D^T(r, s)), D the forward-difference operator.
  const auto primal = [&](const std::vector<double>& pr, const std::vector<double>& ps) {
    for (std::size_t row = 0; row < h; ++row)
      for (std::size_t col = 0; col < w; ++col) {
        const std::size_t i = row * w + col;
        double div = 0.0;
        if (col + 1 < w) div += pr[i];
        if (col > 0) div -= pr[i - 1];
        if (row + 1 < h) div += ps[i];
        if (row > 0) div -= ps[i - w];
        x[i] = std::max(b[i] - weight * div, 0.0);
      }
  };
  double t = 1.0;
  const double step = 1.0 / (8.0 * weight);
  for (int k = 0; k < iters; ++k) {
    primal(r, s);
    p_old = p;
    q_old = q;
    for (std::size_t row = 0; row < h; ++row)
      for (std::size_t col = 0; col < w; ++col) {
        const std::size_t i = row * w + col;
        if (col + 1 < w) p[i] = std::clamp(r[i] + step * (x[i] - x[i + 1]), -1.0, 1.0);
        if (row + 1 < h) q[i] = std::clamp(s[i] + step * (x[i] - x[i + w]), -1.0, 1.0);
      }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double beta = (t - 1.0) / t_next;
    for (std::size_t i = 0; i < size; ++i) {
      r[i] = p[i] + beta * (p[i] - p_old[i]);
      s[i] = q[i] + beta * (q[i] - q_old[i]);
    }
    t = t_next;
  }
  primal(p, q);
  return x;
}

}  // namespace detail

struct CstvOptions {
  double tv_weight = -1.0;  // negative selects 1e-3 * max|I|
  int max_iters = 200;
  int power_iters = 20;
  int prox_iters = 10;
};

/// TV-regularised least squares, 0.5|I - A x|^2 + tv_weight TV(x) with x >= 0,
/// by monotone FISTA. A = m * (pattern integration) on the n x n pattern grid.
/// residual_history holds the objective after every iteration.
inline ReconResult cstv_reconstruct(const Measurement& meas, const PatternSet& set, CstvOptions opts = {},
                                    double pitch = 1.0) {
  check_consistent(meas, set);
  if (opts.max_iters < 1) throw Error(ErrorKind::parameter, "max_iters must be >= 1");
  const std::size_t n = set.order();
  const std::size_t size = n * n;
  const double m = set.modulation_depth();
  const auto& readings = meas.readings;
  double peak = 0.0;
  for (double r : readings) peak = std::max(peak, std::abs(r));
  const double lambda = opts.tv_weight < 0.0 ? 1e-3 * peak : opts.tv_weight;
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error(ErrorKind::parameter, "tv_weight must be >= 0");

  PatternOperator op(set, GridShape{n, n, pitch});
  const auto apply = [&](const std::vector<double>& x) {
    auto y = op.integrate(x);
    for (auto& v : y) v *= m;
    return y;
  };
  const auto apply_t = [&](const std::vector<double>& r) {
    auto y = op.spread(r);
    for (auto& v : y) v *= m;
    return y;
  };
  const auto objective = [&](const std::vector<double>& x) {
    const auto ax = apply(x);
    double data = 0.0;
    for (std::size_t i = 0; i < ax.size(); ++i) data += (readings[i] - ax[i]) * (readings[i] - ax[i]);
    return 0.5 * data + lambda * total_variation(x, n, n);
  };

  // Lipschitz constant of the data gradient: largest eigenvalue of A^T A.
  std::vector<double> v(size);
  for (std::size_t i = 0; i < size; ++i) v[i] = 1.0 + 0.5 * std::sin(0.7 * static_cast<double>(i) + 0.3);
  double lipschitz = 0.0;
  for (int k = 0; k < opts.power_iters; ++k) {
    const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    if (norm == 0.0) break;
    for (auto& e : v) e /= norm;
    v = apply_t(apply(v));
    lipschitz = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  }
  lipschitz *= 1.01;

  ReconResult result{RealGrid(n, n, pitch), Method::cstv, 0, {}};
  std::vector<double> x(size, 0.0), x_prev(size, 0.0), y(size, 0.0);
  const double initial = objective(x);
  if (lipschitz <= 0.0 || initial == 0.0) {
    result.residual_history.push_back(initial);
    result.iterations_used = 1;
    return result;
  }
  double fx = initial;
  double t = 1.0;
  for (int k = 0; k < opts.max_iters; ++k) {
    const auto ay = apply(y);
    std::vector<double> resid(ay.size());
    for (std::size_t i = 0; i < ay.size(); ++i) resid[i] = ay[i] - readings[i];
    const auto grad = apply_t(resid);
    std::vector<double> b(size);
    for (std::size_t i = 0; i < size; ++i) b[i] = y[i] - grad[i] / lipschitz;
    const auto z = detail::tv_prox_nonneg(b, n, n, lambda / lipschitz, opts.prox_iters);
    const double fz = objective(z);
    if (!std::isfinite(fz) || fz > 1e3 * initial)
      throw NumericalError("cstv", k, "objective diverged; step size too large");
    x_prev = x;
    if (fz <= fx) {
      x = z;
      fx = fz;
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    for (std::size_t i = 0; i < size; ++i)
      y[i] = x[i] + (t / t_next) * (z[i] - x[i]) + ((t - 1.0) / t_next) * (x[i] - x_prev[i]);
    t = t_next;
    result.residual_history.push_back(fx);
    result.iterations_used = k + 1;
  }
  result.image = RealGrid(GridShape{n, n, pitch}, std::move(x));
  return result;
}

}  // namespace spi
