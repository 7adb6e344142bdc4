#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "spi/encoding.hpp"
#include "spi/field.hpp"
#include "spi/io.hpp"

namespace spi {

/// Binary PGM (P5), 16-bit big-endian samples, [0, 1] mapped linearly to
/// [0, 65535] with clamping. The pixel pitch travels in a "# pitch_m=" comment.
inline std::string encode_pgm16(const RealGrid& image) {
  std::string out = "P5\n# pitch_m=" + io::format_double(image.pitch()) + "\n" + std::to_string(image.width()) +
                    " " + std::to_string(image.height()) + "\n65535\n";
  out.reserve(out.size() + 2 * image.size());
  for (double v : image.values()) {
    if (!std::isfinite(v)) throw Error(ErrorKind::invalid_field, "cannot encode non-finite pixel");
    const auto s = static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
    out.push_back(static_cast<char>(s >> 8));
    out.push_back(static_cast<char>(s & 0xff));
  }
  return out;
}

/// Reads P5 with maxval up to 65535 (8- or 16-bit). Values come back as sample / maxval.
inline RealGrid decode_pgm(std::span<const unsigned char> bytes, double default_pitch = 1.0) {
  std::size_t pos = 0;
  double pitch = default_pitch;
  const auto fail = [&](const std::string& what) {
    throw Error(ErrorKind::format, "PGM: " + what + " at byte " + std::to_string(pos));
  };
  const auto skip_space_and_comments = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        const std::size_t start = pos;
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        const std::string comment(bytes.begin() + static_cast<long>(start) + 1, bytes.begin() + static_cast<long>(pos));
        const auto key = comment.find("pitch_m=");
        if (key != std::string::npos) {
          try {
            pitch = std::stod(comment.substr(key + 8));
          } catch (...) {
            fail("bad pitch comment");
          }
        }
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  const auto read_uint = [&]() -> std::size_t {
    skip_space_and_comments();
    std::size_t v = 0;
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
    if (pos == start) fail("expected integer");
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') fail("expected P5 magic");
  pos = 2;
  const auto w = read_uint();
  const auto h = read_uint();
  const auto maxval = read_uint();
  if (w == 0 || h == 0) fail("zero dimension");
  if (maxval == 0 || maxval > 65535) fail("maxval out of range");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) fail("expected single whitespace after maxval");
  ++pos;
  const std::size_t bps = maxval > 255 ? 2 : 1;
  if (bytes.size() - pos != w * h * bps)
    fail("expected " + std::to_string(w * h * bps) + " sample bytes, found " + std::to_string(bytes.size() - pos));
  std::vector<double> values(w * h);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t s = bps == 2 ? (std::size_t{bytes[pos + 2 * i]} << 8) | bytes[pos + 2 * i + 1] : bytes[pos + i];
    if (s > maxval) {
      pos += i * bps;
      fail("sample exceeds maxval");
    }
    values[i] = static_cast<double>(s) / static_cast<double>(maxval);
  }
  return RealGrid(GridShape{w, h, pitch}, std::move(values));
}

inline void write_pgm16(const std::string& path, const RealGrid& image) { io::write_atomic(path, encode_pgm16(image)); }

inline RealGrid read_pgm(const std::string& path, double default_pitch = 1.0) {
  return decode_pgm(detail::read_file(path), default_pitch);
}

/// Pixels at or above half scale become 1.
inline BinaryMask threshold_mask(const RealGrid& image, double level = 0.5) {
  BinaryMask m(image.width(), image.height(), image.pitch());
  for (std::size_t i = 0; i < image.size(); ++i) m[i] = image[i] >= level ? 1 : 0;
  return m;
}

}  // namespace spi
