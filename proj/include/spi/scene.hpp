#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "spi/encoding.hpp"
#include "spi/field.hpp"
#include "spi/io.hpp"
#include "spi/metrics.hpp"
#include "spi/pgm.hpp"

namespace spi {

enum class ObjectKind { three_slit, star, bitmap };

/// Object geometry plus optical and run parameters for one simulated experiment.
struct SceneSpec {
  std::size_t grid = 64;
  double fov = 10.5e-3;
  double wavelength = 833.3e-6;
  double distance = 0.0;
  ObjectKind object = ObjectKind::star;
  std::array<double, 3> slit_widths{1217e-6, 884e-6, 920e-6};
  std::array<double, 2> separations{118e-6, 118e-6};
  double slit_length = 0.0;      // 0 selects 0.6 * fov
  double star_line_width = 0.0;  // 0 gives a filled star, otherwise an outline this wide
  std::string bitmap;
  double modulation_depth = 0.9;
  double noise_sigma = 0.0;
  std::uint64_t seed = 1;       // measurement noise
  std::uint64_t init_seed = 7;  // generator initialisation
  std::size_t pattern_order = 0;  // 0 selects grid
  double cr = 1.0;
  Ordering ordering = Ordering::sequency;
  int iterations = 300;
  double tv_weight = 1e-10;

  double pitch() const { return fov / static_cast<double>(grid); }
  std::size_t order() const { return pattern_order == 0 ? grid : pattern_order; }

  void validate() const {
    if (grid < 2 || !is_power_of_two(grid)) throw Error(ErrorKind::parameter, "grid must be a power of two >= 2");
    if (!(fov > 0.0)) throw Error(ErrorKind::parameter, "fov must be positive");
    if (!(wavelength > 0.0)) throw Error(ErrorKind::parameter, "wavelength must be positive");
    if (!std::isfinite(distance)) throw Error(ErrorKind::parameter, "distance must be finite");
    if (grid % order() != 0) throw Error(ErrorKind::parameter, "pattern order must divide the grid");
    if (!(cr > 0.0 && cr <= 1.0)) throw Error(ErrorKind::parameter, "cr must lie in (0, 1]");
    if (!(modulation_depth > 0.0 && modulation_depth <= 1.0))
      throw Error(ErrorKind::parameter, "modulation_depth must lie in (0, 1]");
    if (!(noise_sigma >= 0.0)) throw Error(ErrorKind::parameter, "noise_sigma must be >= 0");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

/// Number with optional SI length suffix (m, mm, um, nm); bare numbers are meters.
inline double parse_length(const std::string& token, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(token, &used);
  } catch (...) {
    throw Error(ErrorKind::format, "bad number '" + token + "' " + where);
  }
  const std::string unit = trim(token.substr(used));
  if (unit.empty() || unit == "m") return v;
  if (unit == "mm") return v * 1e-3;
  if (unit == "um") return v * 1e-6;
  if (unit == "nm") return v * 1e-9;
  throw Error(ErrorKind::format, "unknown unit '" + unit + "' " + where);
}

inline std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : value) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace detail

/// Parses flat key=value text with '#' comments.
inline SceneSpec parse_scene(const std::string& text) {
  SceneSpec spec;
  std::size_t offset = 0;
  while (offset <= text.size()) {
    std::size_t end = text.find('\n', offset);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(offset, end - offset);
    const std::string where = "at byte " + std::to_string(offset);
    offset = end + 1;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::format, "expected key = value " + where);
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    const auto number = [&] {
      try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (detail::trim(value.substr(used)).empty()) return v;
      } catch (...) {
      }
      throw Error(ErrorKind::format, "bad value for '" + key + "' " + where);
    };
    const auto integer = [&]() -> std::uint64_t {
      const double v = number();
      if (v < 0 || v != std::floor(v)) throw Error(ErrorKind::format, "'" + key + "' must be a whole number " + where);
      return static_cast<std::uint64_t>(v);
    };
    const auto lengths = [&](std::size_t count) {
      const auto items = detail::split_list(value);
      if (items.size() != count)
        throw Error(ErrorKind::format, "'" + key + "' needs " + std::to_string(count) + " values " + where);
      std::vector<double> out;
      for (const auto& it : items) out.push_back(detail::parse_length(it, where));
      return out;
    };
    if (key == "grid") spec.grid = integer();
    else if (key == "fov") spec.fov = detail::parse_length(value, where);
    else if (key == "wavelength") spec.wavelength = detail::parse_length(value, where);
    else if (key == "distance") spec.distance = detail::parse_length(value, where);
    else if (key == "object") {
      if (value == "three_slit") spec.object = ObjectKind::three_slit;
      else if (value == "star") spec.object = ObjectKind::star;
      else if (value == "bitmap") spec.object = ObjectKind::bitmap;
      else throw Error(ErrorKind::format, "unknown object '" + value + "' " + where);
    } else if (key == "slit_widths") {
      const auto v = lengths(3);
      std::copy(v.begin(), v.end(), spec.slit_widths.begin());
    } else if (key == "separations") {
      const auto v = lengths(2);
      std::copy(v.begin(), v.end(), spec.separations.begin());
    } else if (key == "slit_length") spec.slit_length = detail::parse_length(value, where);
    else if (key == "star_line_width") spec.star_line_width = detail::parse_length(value, where);
    else if (key == "bitmap") spec.bitmap = value;
    else if (key == "modulation_depth") spec.modulation_depth = number();
    else if (key == "noise_sigma") spec.noise_sigma = number();
    else if (key == "seed") spec.seed = integer();
    else if (key == "init_seed") spec.init_seed = integer();
    else if (key == "pattern_order") spec.pattern_order = integer();
    else if (key == "cr") spec.cr = number();
    else if (key == "ordering") {
      try {
        spec.ordering = parse_ordering(value);
      } catch (const Error&) {
        throw Error(ErrorKind::format, "unknown ordering '" + value + "' " + where);
      }
    } else if (key == "iterations") spec.iterations = static_cast<int>(integer());
    else if (key == "tv_weight") spec.tv_weight = number();
    else throw Error(ErrorKind::format, "unknown key '" + key + "' " + where);
  }
  return spec;
}

inline SceneSpec read_scene(const std::string& path) { return parse_scene(io::read_text(path)); }

inline std::string encode_scene(const SceneSpec& s) {
  std::ostringstream out;
  const auto f = io::format_double;
  out << "grid = " << s.grid << "\n"
      << "fov = " << f(s.fov) << "\n"
      << "wavelength = " << f(s.wavelength) << "\n"
      << "distance = " << f(s.distance) << "\n"
      << "object = " << (s.object == ObjectKind::three_slit ? "three_slit" : s.object == ObjectKind::star ? "star" : "bitmap")
      << "\n"
      << "slit_widths = " << f(s.slit_widths[0]) << ", " << f(s.slit_widths[1]) << ", " << f(s.slit_widths[2]) << "\n"
      << "separations = " << f(s.separations[0]) << ", " << f(s.separations[1]) << "\n"
      << "slit_length = " << f(s.slit_length) << "\n"
      << "star_line_width = " << f(s.star_line_width) << "\n";
  if (!s.bitmap.empty()) out << "bitmap = " << s.bitmap << "\n";
  out << "modulation_depth = " << f(s.modulation_depth) << "\n"
      << "noise_sigma = " << f(s.noise_sigma) << "\n"
      << "seed = " << s.seed << "\n"
      << "init_seed = " << s.init_seed << "\n"
      << "pattern_order = " << s.pattern_order << "\n"
      << "cr = " << f(s.cr) << "\n"
      << "ordering = " << to_string(s.ordering) << "\n"
      << "iterations = " << s.iterations << "\n"
      << "tv_weight = " << f(s.tv_weight) << "\n";
  return out.str();
}

/// Column ranges of the three slits after quantisation to the pixel grid
/// (edges rounded to the nearest pixel boundary).
inline std::vector<Interval> slit_columns(const SceneSpec& s) {
  const double p = s.pitch();
  double total = s.separations[0] + s.separations[1];
  for (double w : s.slit_widths) total += w;
  if (total > s.fov) throw Error(ErrorKind::parameter, "slit geometry exceeds the field of view");
  double x = 0.5 * (s.fov - total);
  std::vector<Interval> out;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto b = static_cast<std::size_t>(std::lround(x / p));
    const auto e = static_cast<std::size_t>(std::lround((x + s.slit_widths[i]) / p));
    out.push_back({b, std::max(e, b + 1)});
    x += s.slit_widths[i] + (i < 2 ? s.separations[i] : 0.0);
  }
  return out;
}

namespace detail {

inline double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double t = std::clamp(((px - ax) * dx + (py - ay) * dy) / (dx * dx + dy * dy), 0.0, 1.0);
  return std::hypot(px - ax - t * dx, py - ay - t * dy);
}

}  // namespace detail

/// Rasterised binary object (1 = transmissive, 0 = opaque).
inline IntensityImage build_scene(const SceneSpec& s) {
  s.validate();
  const std::size_t n = s.grid;
  const double p = s.pitch();
  IntensityImage img(n, n, p);
  switch (s.object) {
    case ObjectKind::three_slit: {
      const double length = s.slit_length > 0.0 ? s.slit_length : 0.6 * s.fov;
      if (length > s.fov) throw Error(ErrorKind::parameter, "slit length exceeds the field of view");
      const auto y0 = static_cast<std::size_t>(std::lround(0.5 * (s.fov - length) / p));
      const auto y1 = static_cast<std::size_t>(std::lround(0.5 * (s.fov + length) / p));
      for (const auto& iv : slit_columns(s))
        for (std::size_t y = y0; y < std::min(y1, n); ++y)
          for (std::size_t x = iv.begin; x < std::min(iv.end, n); ++x) img(x, y) = 1.0;
      break;
    }
    case ObjectKind::star: {
      // Five-pointed star with the inner/outer radius ratio of a regular pentagram,
      // sampled at pixel centres.
      const double cx = 0.5 * s.fov, cy = 0.5 * s.fov;
      const double outer = 0.4 * s.fov;
      const double inner = outer * 0.381966;
      const double half_width = 0.5 * s.star_line_width;
      std::array<std::array<double, 2>, 10> v{};
      for (int k = 0; k < 10; ++k) {
        const double a = -0.5 * std::numbers::pi + k * std::numbers::pi / 5.0;
        const double r = k % 2 == 0 ? outer : inner;
        v[k] = {cx + r * std::cos(a), cy + r * std::sin(a)};
      }
      for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) {
          const double px = (static_cast<double>(x) + 0.5) * p, py = (static_cast<double>(y) + 0.5) * p;
          bool lit = false;
          for (int k = 0; k < 10; ++k) {
            const auto& a = v[k];
            const auto& b = v[(k + 1) % 10];
            if (half_width > 0.0) {
              lit = lit || detail::segment_distance(px, py, a[0], a[1], b[0], b[1]) <= half_width;
            } else if ((a[1] > py) != (b[1] > py) && px < a[0] + (py - a[1]) * (b[0] - a[0]) / (b[1] - a[1])) {
              lit = !lit;  // even-odd crossing
            }
          }
          if (lit) img(x, y) = 1.0;
        }
      break;
    }
    case ObjectKind::bitmap: {
      const auto bmp = read_pgm(s.bitmap, p);
      if (bmp.width() != n || bmp.height() != n)
        throw Error(ErrorKind::dimension, "bitmap " + describe(bmp.shape()) + " does not match grid " +
                                              std::to_string(n));
      const auto mask = threshold_mask(bmp);
      for (std::size_t i = 0; i < img.size(); ++i) img[i] = mask[i];
      break;
    }
  }
  return img;
}

inline BinaryMask object_mask(const IntensityImage& object) { return threshold_mask(object); }

}  // namespace spi
