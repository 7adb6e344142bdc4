#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "spi/classical.hpp"
#include "spi/encoding.hpp"
#include "spi/io.hpp"
#include "spi/measurement.hpp"
#include "spi/metrics.hpp"
#include "spi/network.hpp"
#include "spi/parallel.hpp"
#include "spi/pgm.hpp"
#include "spi/prior.hpp"
#include "spi/propagation.hpp"
#include "spi/scene.hpp"

namespace spi {

inline PatternSet scene_patterns(const SceneSpec& s) {
  s.validate();
  const std::size_t n = s.order();
  return walsh_hadamard_patterns(n, pattern_count_for_ratio(n, s.cr), s.ordering, s.modulation_depth);
}

inline PropagationSpec scene_propagation(const SceneSpec& s, double distance) {
  PropagationSpec p;
  p.wavelength = s.wavelength;
  p.distance = distance;
  return p;
}

struct Simulation {
  IntensityImage object;
  IntensityImage diffracted;
  Measurement measurement;
};

/// object -> zero-phase field -> propagate(d) -> intensity -> measure.
inline Simulation run_simulate(const SceneSpec& spec, const PatternSet& set) {
  spec.validate();
  if (spec.grid % set.order() != 0)
    throw Error(ErrorKind::dimension, "pattern order " + std::to_string(set.order()) + " does not divide grid " +
                                          std::to_string(spec.grid));
  if (std::abs(set.modulation_depth() - spec.modulation_depth) > 0.0)
    throw Error(ErrorKind::consistency, "pattern set modulation depth differs from the scene");
  auto object = build_scene(spec);
  auto diffracted =
      intensity(propagate(field_from_amplitude(amplitude_of(object)), scene_propagation(spec, spec.distance)));
  auto meas = measure(diffracted, set, spec.noise_sigma, spec.seed);
  return {std::move(object), std::move(diffracted), std::move(meas)};
}

/// Peak-normalised copy; an all-zero image stays zero.
inline RealGrid normalize_peak(const RealGrid& image) {
  double peak = 0.0;
  for (double v : image.values()) peak = std::max(peak, v);
  std::vector<double> out(image.size(), 0.0);
  if (peak > 0.0)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = image[i] / peak;
  return RealGrid(image.shape(), std::move(out));
}

/// Image used for metrics and files: negatives clamped, then scaled to peak 1.
inline RealGrid display_image(const RealGrid& image) {
  std::vector<double> v(image.data());
  for (auto& x : v) x = std::max(x, 0.0);
  return normalize_peak(RealGrid(image.shape(), std::move(v)));
}

/// Writes object.pgm, diffracted.pgm (peak-normalised) and measurement.csv.
inline void write_simulation(const Simulation& sim, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_pgm16((dir / "object.pgm").string(), sim.object);
  write_pgm16((dir / "diffracted.pgm").string(), normalize_peak(sim.diffracted));
  io::write_atomic(dir / "measurement.csv", encode_measurement_csv(sim.measurement));
}

struct ReconstructOptions {
  Method method = Method::untrained;
  double pitch = 1.0;
  double wavelength = 833.3e-6;
  double backprop_distance = 0.0;
  int iterations = 300;
  std::uint64_t init_seed = 7;
  double tv_weight = 1e-10;
  CstvOptions cstv{};
};

inline ReconstructOptions reconstruct_options(const SceneSpec& s, Method method) {
  ReconstructOptions o;
  o.method = method;
  o.pitch = s.pitch();
  o.wavelength = s.wavelength;
  o.backprop_distance = s.distance;
  o.iterations = s.iterations;
  o.init_seed = s.init_seed;
  o.tv_weight = s.tv_weight;
  return o;
}

struct Reconstruction {
  ReconResult result;
  RealGrid display;
  std::optional<GeneratorNet> net;  // untrained method only
};

inline Reconstruction run_reconstruct(const Measurement& meas, const PatternSet& set, const ReconstructOptions& o) {
  check_consistent(meas, set);
  Reconstruction out{};
  switch (o.method) {
    case Method::hspi: out.result = hspi_reconstruct(meas, set, o.pitch); break;
    case Method::dgi: out.result = dgi_reconstruct(meas, set, o.pitch); break;
    case Method::cstv: out.result = cstv_reconstruct(meas, set, o.cstv, o.pitch); break;
    case Method::untrained: {
      PropagationSpec prop;
      prop.wavelength = o.wavelength;
      prop.distance = o.backprop_distance;
      UntrainedOptions u;
      u.iterations = o.iterations;
      u.seed = o.init_seed;
      u.pitch = o.pitch;
      u.tv_weight = o.tv_weight;
      auto run = reconstruct_untrained_with_net(meas, set, prop, u);
      out.result = std::move(run.result);
      out.net = std::move(run.net);
      break;
    }
  }
  out.display = display_image(out.result.image);
  return out;
}

struct ImageMetrics {
  std::optional<double> ssim;
  bool ssim_degenerate = false;  // reconstruction is constant, SSIM is not meaningful
  std::optional<SnrResult> snr;
};

inline bool is_constant(const RealGrid& g) {
  const auto [lo, hi] = std::minmax_element(g.values().begin(), g.values().end());
  return *lo == *hi;
}

inline ImageMetrics evaluate_image(const RealGrid& display, const RealGrid* reference, const BinaryMask* signal) {
  ImageMetrics m;
  if (reference) {
    if (is_constant(display)) m.ssim_degenerate = true;
    else m.ssim = ssim(display, normalize_peak(*reference));
  }
  if (signal) m.snr = snr(display, *signal);
  return m;
}

inline std::string encode_metrics_csv(const ReconResult& r, const ImageMetrics& m) {
  std::ostringstream out;
  out << "metric,value\n";
  out << "method," << to_string(r.method) << "\n";
  out << "iterations," << r.iterations_used << "\n";
  if (m.ssim) out << "ssim," << io::format_double(*m.ssim) << "\n";
  if (m.ssim_degenerate) out << "ssim,degenerate\n";
  if (m.snr) out << "snr," << (m.snr->infinite ? std::string("inf") : io::format_double(m.snr->value)) << "\n";
  if (!r.residual_history.empty()) out << "final_loss," << io::format_double(r.residual_history.back()) << "\n";
  return out.str();
}

inline std::string encode_loss_csv(const ReconResult& r) {
  std::string out = "iteration,loss\n";
  for (std::size_t i = 0; i < r.residual_history.size(); ++i)
    out += std::to_string(i) + "," + io::format_double(r.residual_history[i]) + "\n";
  return out;
}

/// Writes recon.pgm, metrics.csv, and for iterative methods loss.csv; the
/// untrained method also leaves its generator in checkpoint.spin.
inline void write_reconstruction(const Reconstruction& rec, const ImageMetrics& metrics,
                                 const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_pgm16((dir / "recon.pgm").string(), rec.display);
  io::write_atomic(dir / "metrics.csv", encode_metrics_csv(rec.result, metrics));
  if (!rec.result.residual_history.empty()) io::write_atomic(dir / "loss.csv", encode_loss_csv(rec.result));
  if (rec.net) io::write_atomic(dir / "checkpoint.spin", encode_checkpoint(*rec.net));
}

struct BenchmarkRequest {
  std::vector<double> cr_list;
  std::vector<Method> methods;
  std::vector<double> noise_levels{0.0};
  int repeats = 1;
  bool reference_is_object = false;  // else the noiseless diffracted image
};

struct BenchmarkCell {
  Method method;
  double cr = 0.0;
  double noise_sigma = 0.0;
  std::vector<double> ssim;
  std::vector<double> snr;
};

inline double mean_of(const std::vector<double>& v) {
  return v.empty() ? std::numeric_limits<double>::quiet_NaN()
                   : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double std_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double mu = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - mu) * (x - mu);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

/// Grid of (method, cr, noise) cells, each repeated with seeds seed + r and
/// init_seed + r. Runs are independent and execute in parallel.
inline std::vector<BenchmarkCell> run_benchmark(const SceneSpec& spec, const BenchmarkRequest& req) {
  spec.validate();
  if (req.repeats < 1) throw Error(ErrorKind::parameter, "repeats must be >= 1");
  if (req.cr_list.empty() || req.methods.empty() || req.noise_levels.empty())
    throw Error(ErrorKind::parameter, "benchmark needs at least one cr, method and noise level");
  for (double cr : req.cr_list)
    if (!(cr > 0.0 && cr <= 1.0)) throw Error(ErrorKind::parameter, "cr values must lie in (0, 1]");

  const auto object = build_scene(spec);
  const auto diffracted =
      intensity(propagate(field_from_amplitude(amplitude_of(object)), scene_propagation(spec, spec.distance)));
  const RealGrid reference = req.reference_is_object ? RealGrid(object) : RealGrid(diffracted);
  const BinaryMask signal = object_mask(object);

  struct Job {
    std::size_t cell;
    int repeat;
  };
  std::vector<BenchmarkCell> cells;
  std::vector<Job> jobs;
  for (Method method : req.methods)
    for (double cr : req.cr_list)
      for (double sigma : req.noise_levels) {
        cells.push_back({method, cr, sigma, std::vector<double>(req.repeats), std::vector<double>(req.repeats)});
        for (int r = 0; r < req.repeats; ++r) jobs.push_back({cells.size() - 1, r});
      }

  parallel_for(jobs.size(), [&](std::size_t j) {
    auto& cell = cells[jobs[j].cell];
    const int r = jobs[j].repeat;
    SceneSpec s = spec;
    s.cr = cell.cr;
    const auto set = scene_patterns(s);
    const auto meas = measure(diffracted, set, cell.noise_sigma, spec.seed + static_cast<std::uint64_t>(r));
    auto opts = reconstruct_options(s, cell.method);
    opts.init_seed = spec.init_seed + static_cast<std::uint64_t>(r);
    const auto rec = run_reconstruct(meas, set, opts);
    if (rec.display.width() != reference.width())
      throw Error(ErrorKind::dimension, "pattern order must equal the grid for benchmarking");
    const auto m = evaluate_image(rec.display, &reference, &signal);
    cell.ssim[r] = m.ssim.value_or(std::numeric_limits<double>::quiet_NaN());
    cell.snr[r] = m.snr->value;
  });
  return cells;
}

inline std::string encode_benchmark_csv(const std::vector<BenchmarkCell>& cells) {
  std::string out = "method,cr,noise_sigma,repeats,ssim_mean,ssim_std,snr_mean,snr_std\n";
  for (const auto& c : cells)
    out += std::string(to_string(c.method)) + "," + io::format_double(c.cr) + "," + io::format_double(c.noise_sigma) +
           "," + std::to_string(c.ssim.size()) + "," + io::format_double(mean_of(c.ssim)) + "," +
           io::format_double(std_of(c.ssim)) + "," + io::format_double(mean_of(c.snr)) + "," +
           io::format_double(std_of(c.snr)) + "\n";
  return out;
}

/// Noise level at which the HSPI reconstruction of the scene reaches the target
/// SNR, found by bisection on log(sigma). Throws when the noiseless SNR is
/// already below the target.
inline double calibrate_noise_for_snr(const SceneSpec& spec, const PatternSet& set, double target_snr,
                                      int repeats = 4) {
  const auto object = build_scene(spec);
  const auto diffracted =
      intensity(propagate(field_from_amplitude(amplitude_of(object)), scene_propagation(spec, spec.distance)));
  const BinaryMask signal = object_mask(object);
  const auto hspi_snr = [&](double sigma) {
    double acc = 0.0;
    for (int r = 0; r < repeats; ++r) {
      const auto meas = measure(diffracted, set, sigma, spec.seed + static_cast<std::uint64_t>(r));
      acc += snr(display_image(hspi_reconstruct(meas, set, spec.pitch()).image), signal).value;
    }
    return acc / repeats;
  };
  if (hspi_snr(0.0) <= target_snr)
    throw Error(ErrorKind::range, "noiseless HSPI SNR is already below the target");
  double lo = 1e-6, hi = 1e6;
  for (int k = 0; k < 60; ++k) {
    const double mid = std::sqrt(lo * hi);
    (hspi_snr(mid) > target_snr ? lo : hi) = mid;
  }
  return std::sqrt(lo * hi);
}

}  // namespace spi
