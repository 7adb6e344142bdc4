#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "spi/encoding.hpp"
#include "spi/field.hpp"
#include "spi/io.hpp"
#include "spi/propagation.hpp"

namespace spi {

/// In-place Walsh-Hadamard transform in natural (Sylvester) order, unnormalised:
/// out[r] = sum_p (-1)^popcount(r & p) in[p].
inline void fwht(std::span<double> data) {
  const std::size_t n = data.size();
  for (std::size_t h = 1; h < n; h <<= 1)
    for (std::size_t i = 0; i < n; i += h << 1)
      for (std::size_t j = i; j < i + h; ++j) {
        const double a = data[j];
        const double b = data[j + h];
        data[j] = a + b;
        data[j + h] = a - b;
      }
}

/// Linear pattern-integration operator of a PatternSet on an image grid:
/// integrate(D)_i = sum_p D(p) P_i(p), with P_i pixel-replicated onto the grid.
/// Evaluated with one fast Walsh-Hadamard transform of the block-summed image.
class PatternOperator {
 public:
  PatternOperator(const PatternSet& set, const GridShape& image)
      : set_(set), image_(image), rep_(replication_factor(image.width, image.height, set.order(), set.order())) {}

  const PatternSet& patterns() const noexcept { return set_; }
  const GridShape& image_shape() const noexcept { return image_; }

  std::vector<double> integrate(std::span<const double> image) const {
    if (image.size() != image_.size()) throw Error(ErrorKind::dimension, "image size does not match operator grid");
    const std::size_t n = set_.order();
    std::vector<double> cells(n * n, 0.0);
    for (std::size_t y = 0; y < image_.height; ++y)
      for (std::size_t x = 0; x < image_.width; ++x)
        cells[(y / rep_.fy) * n + x / rep_.fx] += image[y * image_.width + x];
    fwht(cells);
    std::vector<double> out(set_.count());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = cells[set_.selection()[i]];
    return out;
  }

  /// Adjoint of integrate(): spread(r)(p) = sum_i r_i P_i(p).
  std::vector<double> spread(std::span<const double> coeffs) const {
    if (coeffs.size() != set_.count()) throw Error(ErrorKind::consistency, "coefficient count does not match set");
    const std::size_t n = set_.order();
    std::vector<double> cells(n * n, 0.0);
    for (std::size_t i = 0; i < coeffs.size(); ++i) cells[set_.selection()[i]] += coeffs[i];
    fwht(cells);
    std::vector<double> out(image_.size());
    for (std::size_t y = 0; y < image_.height; ++y)
      for (std::size_t x = 0; x < image_.width; ++x) out[y * image_.width + x] = cells[(y / rep_.fy) * n + x / rep_.fx];
    return out;
  }

 private:
  PatternSet set_;
  GridShape image_;
  Replication rep_;
};

struct Measurement {
  std::vector<double> readings;  // differential readings I_i = I_i^+ - I_i^-
  std::string pattern_ref;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  bool differential = true;
  double modulation_depth = 1.0;

  std::size_t size() const noexcept { return readings.size(); }
};

inline void check_consistent(const Measurement& meas, const PatternSet& set) {
  if (meas.readings.size() != set.count())
    throw Error(ErrorKind::consistency, "measurement has " + std::to_string(meas.readings.size()) +
                                            " readings but pattern set has " + std::to_string(set.count()));
  for (double r : meas.readings)
    if (!std::isfinite(r)) throw Error(ErrorKind::consistency, "measurement contains non-finite readings");
}

namespace detail {

/// Independent generator per pattern index so noise does not depend on evaluation order.
inline std::mt19937_64 pattern_rng(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(static_cast<std::uint64_t>(index) >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace detail

/// Differential single-pixel measurement. Each reading is the bucket signal
/// through the pumped-negative mask minus the signal through the pumped-positive
/// mask, each with independent Gaussian noise: I_i = m sum D P_i + eta+ - eta-.
inline Measurement measure(const IntensityImage& diffracted, const PatternSet& set, double noise_sigma,
                           std::uint64_t seed) {
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
    throw Error(ErrorKind::parameter, "noise_sigma must be finite and >= 0");
  const auto rep = replication_factor(diffracted.width(), diffracted.height(), set.order(), set.order());
  const double m = set.modulation_depth();
  const std::size_t w = diffracted.width();
  const std::size_t n = set.order();

  Measurement out;
  out.readings.resize(set.count());
  out.pattern_ref = set.id();
  out.noise_sigma = noise_sigma;
  out.seed = seed;
  out.modulation_depth = m;
  for (std::size_t i = 0; i < set.count(); ++i) {
    const std::size_t row = set.selection()[i];
    double through_minus = 0.0;  // pumped where the logical mask is -1
    double through_plus = 0.0;   // pumped where the logical mask is +1
    for (std::size_t y = 0; y < diffracted.height(); ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double d = diffracted[y * w + x];
        const bool positive = hadamard_entry(row, (y / rep.fy) * n + x / rep.fx) > 0;
        through_minus += d * (1.0 - m * (positive ? 0.0 : 1.0));
        through_plus += d * (1.0 - m * (positive ? 1.0 : 0.0));
      }
    double eta_plus = 0.0, eta_minus = 0.0;
    if (noise_sigma > 0.0) {
      auto rng = detail::pattern_rng(seed, i);
      std::normal_distribution<double> noise(0.0, noise_sigma);
      eta_plus = noise(rng);
      eta_minus = noise(rng);
    }
    out.readings[i] = (through_minus + eta_plus) - (through_plus + eta_minus);
  }
  return out;
}

/// Noiseless differential readings of an object intensity after diffraction.
inline std::vector<double> forward_predict(const IntensityImage& object_estimate, const PropagationSpec& prop,
                                           const PatternSet& set) {
  const auto diffracted = intensity(propagate(field_from_amplitude(amplitude_of(object_estimate)), prop));
  auto out = PatternOperator(set, diffracted.shape()).integrate(diffracted.values());
  for (auto& v : out) v *= set.modulation_depth();
  return out;
}

inline double pattern_total_intensity(const PatternSet& set, std::size_t i) {
  set.check_index(i);
  double total = 0.0;
  for (std::size_t p = 0; p < set.pixels(); ++p) total += hadamard_entry(set.selection()[i], p);
  return total;
}

// CSV: a leading '#' metadata line, then "index,reading" and one row per pattern.

inline std::string encode_measurement_csv(const Measurement& meas) {
  std::ostringstream out;
  out << "# noise_sigma=" << io::format_double(meas.noise_sigma) << ",seed=" << meas.seed
      << ",pattern_ref=" << meas.pattern_ref << ",modulation_depth=" << io::format_double(meas.modulation_depth)
      << ",differential=" << (meas.differential ? 1 : 0) << "\n";
  out << "index,reading\n";
  for (std::size_t i = 0; i < meas.readings.size(); ++i) out << i << "," << io::format_double(meas.readings[i]) << "\n";
  return out.str();
}

namespace detail {

inline double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc{} || res.ptr != last) throw Error(ErrorKind::format, "bad number '" + s + "' " + where);
  return v;
}

inline std::uint64_t parse_uint(const std::string& s, const std::string& where) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw Error(ErrorKind::format, "bad integer '" + s + "' " + where);
  return v;
}

}  // namespace detail

inline Measurement decode_measurement_csv(const std::string& text) {
  Measurement meas;
  std::size_t offset = 0;
  bool header_seen = false;
  while (offset < text.size()) {
    std::size_t end = text.find('\n', offset);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(offset, end - offset);
    const std::size_t line_offset = offset;
    offset = end + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string where = "at byte " + std::to_string(line_offset);
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::string body = line.substr(1);
      std::stringstream fields(body);
      std::string kv;
      while (std::getline(fields, kv, ',')) {
        const auto trim = [](std::string s) {
          const auto b = s.find_first_not_of(" \t");
          const auto e = s.find_last_not_of(" \t");
          return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        kv = trim(kv);
        const auto eq = kv.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = trim(kv.substr(0, eq));
        const std::string value = trim(kv.substr(eq + 1));
        if (key == "noise_sigma") meas.noise_sigma = detail::parse_double(value, where);
        else if (key == "seed") meas.seed = detail::parse_uint(value, where);
        else if (key == "pattern_ref") meas.pattern_ref = value;
        else if (key == "modulation_depth") meas.modulation_depth = detail::parse_double(value, where);
        else if (key == "differential") meas.differential = value != "0";
      }
      continue;
    }
    if (!header_seen) {
      if (line != "index,reading") throw Error(ErrorKind::format, "expected header 'index,reading' " + where);
      header_seen = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw Error(ErrorKind::format, "missing comma " + where);
    const auto index = detail::parse_uint(line.substr(0, comma), where);
    if (index != meas.readings.size())
      throw Error(ErrorKind::format, "row index " + std::to_string(index) + " out of sequence " + where);
    meas.readings.push_back(detail::parse_double(line.substr(comma + 1), where));
  }
  if (!header_seen) throw Error(ErrorKind::format, "missing 'index,reading' header");
  return meas;
}

inline Measurement read_measurement_csv(const std::string& path) { return decode_measurement_csv(io::read_text(path)); }

}  // namespace spi
