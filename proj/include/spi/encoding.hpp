#pragma once

#include <algorithm>
#include <bit>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "spi/field.hpp"

namespace spi {

enum class Ordering : std::uint8_t { natural = 0, sequency = 1 };

inline const char* to_string(Ordering o) { return o == Ordering::natural ? "natural" : "sequency"; }

inline Ordering parse_ordering(const std::string& s) {
  if (s == "natural") return Ordering::natural;
  if (s == "sequency") return Ordering::sequency;
  throw Error(ErrorKind::parameter, "unknown pattern ordering '" + s + "'");
}

using LogicalMask = Grid<std::int8_t>;  // entries in {+1, -1}
using BinaryMask = Grid<std::uint8_t>;  // entries in {0, 1}

/// Entry (row, column) of the Sylvester-Hadamard matrix of any power-of-two order.
constexpr int hadamard_entry(std::size_t row, std::size_t col) noexcept {
  return (std::popcount(row & col) & 1) ? -1 : 1;
}

/// Number of sign changes along row `row` of the order-n Sylvester matrix.
inline std::size_t walsh_sequency(std::size_t row, std::size_t n) {
  std::size_t changes = 0;
  for (std::size_t c = 1; c < n; ++c) changes += hadamard_entry(row, c) != hadamard_entry(row, c - 1);
  return changes;
}

/// M rows of the N = n*n order Walsh-Hadamard matrix, each reshaped row-major to
/// an n x n mask. Mask values are generated on demand from the row index.
class PatternSet {
 public:
  PatternSet(std::size_t order, std::vector<std::size_t> selection, Ordering ordering, double modulation_depth)
      : order_(order), ordering_(ordering), selection_(std::move(selection)), modulation_depth_(modulation_depth) {
    if (order < 2 || !is_power_of_two(order))
      throw Error(ErrorKind::parameter, "pattern order must be a power of two >= 2, got " + std::to_string(order));
    if (selection_.empty() || selection_.size() > pixels())
      throw Error(ErrorKind::range, "pattern count must lie in [1, " + std::to_string(pixels()) + "]");
    for (auto r : selection_)
      if (r >= pixels()) throw Error(ErrorKind::range, "Hadamard row index out of range");
    if (!(modulation_depth > 0.0 && modulation_depth <= 1.0))
      throw Error(ErrorKind::parameter, "modulation depth must lie in (0, 1]");
  }

  std::size_t order() const noexcept { return order_; }
  std::size_t pixels() const noexcept { return order_ * order_; }
  std::size_t count() const noexcept { return selection_.size(); }
  Ordering ordering() const noexcept { return ordering_; }
  double modulation_depth() const noexcept { return modulation_depth_; }
  const std::vector<std::size_t>& selection() const noexcept { return selection_; }
  double compression_ratio() const noexcept {
    return static_cast<double>(count()) / static_cast<double>(pixels());
  }

  PatternSet with_modulation_depth(double m) const { return PatternSet(order_, selection_, ordering_, m); }

  /// Logical value of pattern i at pattern cell (x, y).
  int value(std::size_t i, std::size_t x, std::size_t y) const noexcept {
    return hadamard_entry(selection_[i], y * order_ + x);
  }

  LogicalMask logical_mask(std::size_t i) const {
    check_index(i);
    LogicalMask m(order_, order_);
    for (std::size_t y = 0; y < order_; ++y)
      for (std::size_t x = 0; x < order_; ++x) m(x, y) = static_cast<std::int8_t>(value(i, x, y));
    return m;
  }

  /// Stable identifier recorded alongside measurements.
  std::string id() const {
    return "wh-n" + std::to_string(order_) + "-m" + std::to_string(count()) + "-" + to_string(ordering_);
  }

  void check_index(std::size_t i) const {
    if (i >= count())
      throw Error(ErrorKind::range, "pattern index " + std::to_string(i) + " >= " + std::to_string(count()));
  }

  friend bool operator==(const PatternSet& a, const PatternSet& b) {
    return a.order_ == b.order_ && a.ordering_ == b.ordering_ && a.selection_ == b.selection_ &&
           a.modulation_depth_ == b.modulation_depth_;
  }

 private:
  std::size_t order_;
  Ordering ordering_;
  std::vector<std::size_t> selection_;
  double modulation_depth_;
};

/// Row indices of the order n*n Hadamard matrix in the requested ordering.
/// Sequency ordering sorts by the total number of horizontal plus vertical sign
/// changes of the reshaped n x n mask (stable, ties keep natural order).
inline std::vector<std::size_t> hadamard_row_order(std::size_t n, Ordering ordering) {
  const std::size_t total = n * n;
  std::vector<std::size_t> rows(total);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  if (ordering == Ordering::natural) return rows;
  std::vector<std::size_t> seq(n);
  for (std::size_t j = 0; j < n; ++j) seq[j] = walsh_sequency(j, n);
  // Row r = a*n + b reshapes to h_a(y) * h_b(x).
  std::vector<std::size_t> key(total);
  for (std::size_t r = 0; r < total; ++r) key[r] = n * (seq[r / n] + seq[r % n]);
  std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
  return rows;
}

inline PatternSet walsh_hadamard_patterns(std::size_t order_n, std::size_t count_m, Ordering ordering,
                                          double modulation_depth = 0.9) {
  if (order_n < 2 || !is_power_of_two(order_n))
    throw Error(ErrorKind::parameter, "pattern order must be a power of two >= 2, got " + std::to_string(order_n));
  if (count_m < 1 || count_m > order_n * order_n)
    throw Error(ErrorKind::range, "pattern count " + std::to_string(count_m) + " outside [1, N]");
  auto rows = hadamard_row_order(order_n, ordering);
  rows.resize(count_m);
  return PatternSet(order_n, std::move(rows), ordering, modulation_depth);
}

/// M = round(cr * N), at least one pattern.
inline std::size_t pattern_count_for_ratio(std::size_t order_n, double cr) {
  if (!(cr > 0.0 && cr <= 1.0)) throw Error(ErrorKind::parameter, "compression ratio must lie in (0, 1]");
  const auto n = static_cast<double>(order_n * order_n);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cr * n)));
}

struct MaskPair {
  BinaryMask plus;   // 1 where the logical mask is +1
  BinaryMask minus;  // 1 where the logical mask is -1
};

inline MaskPair positive_negative_split(const PatternSet& set, std::size_t i) {
  set.check_index(i);
  const std::size_t n = set.order();
  MaskPair out{BinaryMask(n, n), BinaryMask(n, n)};
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      const bool positive = set.value(i, x, y) > 0;
      out.plus(x, y) = positive ? 1 : 0;
      out.minus(x, y) = positive ? 0 : 1;
    }
  return out;
}

struct Replication {
  std::size_t fx = 1;
  std::size_t fy = 1;
};

/// Integer pixel-replication factor mapping a coarse grid onto a fine one.
inline Replication replication_factor(std::size_t fine_w, std::size_t fine_h, std::size_t coarse_w,
                                      std::size_t coarse_h) {
  if (coarse_w == 0 || coarse_h == 0 || fine_w % coarse_w != 0 || fine_h % coarse_h != 0)
    throw Error(ErrorKind::dimension, "grid " + std::to_string(fine_w) + "x" + std::to_string(fine_h) +
                                          " is not an integer replication of " + std::to_string(coarse_w) + "x" +
                                          std::to_string(coarse_h));
  return {fine_w / coarse_w, fine_h / coarse_h};
}

/// out(p) = image(p) * (1 - depth * mask(p)); the mask is pixel-replicated onto the image grid.
inline IntensityImage apply_mask(const IntensityImage& image, const BinaryMask& mask, double depth) {
  if (!(depth > 0.0 && depth <= 1.0)) throw Error(ErrorKind::parameter, "modulation depth must lie in (0, 1]");
  const auto rep = replication_factor(image.width(), image.height(), mask.width(), mask.height());
  std::vector<double> out(image.size());
  for (std::size_t y = 0; y < image.height(); ++y)
    for (std::size_t x = 0; x < image.width(); ++x)
      out[y * image.width() + x] = image(x, y) * (1.0 - depth * mask(x / rep.fx, y / rep.fy));
  return IntensityImage(image.shape(), std::move(out));
}

/// Free-carrier (Drude) permittivity parameters, SI units.
struct DrudeParams {
  double eps_inf = 11.7;
  double omega_p = 0.0;  // rad/s
  double tau_d = 1e-13;  // s
  double omega = 0.0;    // rad/s
};

/// eps(omega) = eps_inf - omega_p^2 / (omega (omega + i/tau_d)).
inline std::complex<double> drude_permittivity(const DrudeParams& p) {
  if (p.omega == 0.0) throw Error(ErrorKind::parameter, "Drude permittivity is singular at omega = 0");
  if (!(p.omega > 0.0) || !(p.tau_d > 0.0) || !(p.omega_p >= 0.0))
    throw Error(ErrorKind::parameter, "Drude parameters require omega > 0, tau_d > 0, omega_p >= 0");
  if (p.omega_p == 0.0) return {p.eps_inf, 0.0};
  const std::complex<double> denom = p.omega * std::complex<double>(p.omega, 1.0 / p.tau_d);
  return p.eps_inf - p.omega_p * p.omega_p / denom;
}

// Pattern file: "SPIP", u16 version, u32 n, u32 M, u8 ordering, then M*N int8
// (+1/-1) row-major masks. All integers little-endian.

namespace detail {

inline void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int b = 0; b < bytes; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

inline std::uint64_t get_le(std::span<const unsigned char> in, std::size_t offset, int bytes) {
  std::uint64_t v = 0;
  for (int b = 0; b < bytes; ++b) v |= static_cast<std::uint64_t>(in[offset + b]) << (8 * b);
  return v;
}

inline std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

constexpr std::uint16_t kPatternFileVersion = 1;

inline std::string encode_patterns(const PatternSet& set) {
  std::string out = "SPIP";
  detail::put_le(out, kPatternFileVersion, 2);
  detail::put_le(out, set.order(), 4);
  detail::put_le(out, set.count(), 4);
  detail::put_le(out, static_cast<std::uint8_t>(set.ordering()), 1);
  const std::size_t n = set.order();
  out.reserve(out.size() + set.count() * set.pixels());
  for (std::size_t i = 0; i < set.count(); ++i)
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) out.push_back(static_cast<char>(static_cast<std::int8_t>(set.value(i, x, y))));
  return out;
}

/// Parses a pattern file. Every mask must be an exact Sylvester-Hadamard row;
/// the row index is recovered from the mask. Errors report byte offsets.
inline PatternSet decode_patterns(std::span<const unsigned char> bytes, double modulation_depth = 0.9) {
  constexpr std::size_t header = 15;
  if (bytes.size() < header) throw Error(ErrorKind::format, "pattern file truncated in header (" +
                                                                std::to_string(bytes.size()) + " bytes)");
  if (std::memcmp(bytes.data(), "SPIP", 4) != 0) throw Error(ErrorKind::format, "bad magic at byte 0");
  const auto version = detail::get_le(bytes, 4, 2);
  if (version != kPatternFileVersion)
    throw Error(ErrorKind::format, "unsupported pattern file version " + std::to_string(version) + " at byte 4");
  const auto n = static_cast<std::size_t>(detail::get_le(bytes, 6, 4));
  const auto m = static_cast<std::size_t>(detail::get_le(bytes, 10, 4));
  const auto ord = bytes[14];
  if (n < 2 || !is_power_of_two(n) || n > 4096)
    throw Error(ErrorKind::format, "invalid order " + std::to_string(n) + " at byte 6");
  if (m < 1 || m > n * n) throw Error(ErrorKind::format, "invalid pattern count at byte 10");
  if (ord > 1) throw Error(ErrorKind::format, "invalid ordering code at byte 14");
  const std::size_t total = n * n;
  if (bytes.size() != header + m * total)
    throw Error(ErrorKind::format, "expected " + std::to_string(header + m * total) + " bytes, found " +
                                       std::to_string(bytes.size()));
  std::vector<std::size_t> rows(m);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t base = header + i * total;
    // Walsh row index: bit j of the index equals the sign at column 2^j.
    std::size_t row = 0;
    for (std::size_t bit = 1; bit < total; bit <<= 1)
      if (static_cast<std::int8_t>(bytes[base + bit]) == -1) row |= bit;
    for (std::size_t p = 0; p < total; ++p) {
      const auto v = static_cast<std::int8_t>(bytes[base + p]);
      if (v != hadamard_entry(row, p))
        throw Error(ErrorKind::format, "mask " + std::to_string(i) + " is not a Hadamard row (byte " +
                                           std::to_string(base + p) + ")");
    }
    rows[i] = row;
  }
  return PatternSet(n, std::move(rows), static_cast<Ordering>(ord), modulation_depth);
}

inline PatternSet read_patterns(const std::string& path, double modulation_depth = 0.9) {
  const auto bytes = detail::read_file(path);
  return decode_patterns(bytes, modulation_depth);
}

}  // namespace spi
