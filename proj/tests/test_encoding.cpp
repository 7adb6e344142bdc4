#include <gtest/gtest.h>

#include <algorithm>
#include <complex>
#include <numbers>
#include <random>
#include <set>

#include "spi/encoding.hpp"

using namespace spi;

namespace {

/// Sylvester recursion H_{2k} = [[H, H], [H, -H]] built explicitly.
std::vector<std::vector<int>> sylvester(std::size_t order) {
  std::vector<std::vector<int>> h{{1}};
  while (h.size() < order) {
    const std::size_t k = h.size();
    std::vector<std::vector<int>> next(2 * k, std::vector<int>(2 * k));
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t c = 0; c < k; ++c) {
        next[r][c] = next[r][c + k] = next[r + k][c] = h[r][c];
        next[r + k][c + k] = -h[r][c];
      }
    h = std::move(next);
  }
  return h;
}

std::size_t mask_sign_changes(const LogicalMask& m) {
  std::size_t c = 0;
  for (std::size_t y = 0; y < m.height(); ++y)
    for (std::size_t x = 0; x < m.width(); ++x) {
      if (x + 1 < m.width() && m(x, y) != m(x + 1, y)) ++c;
      if (y + 1 < m.height() && m(x, y) != m(x, y + 1)) ++c;
    }
  return c;
}

}  // namespace

TEST(WalshHadamard, OrderTwoNaturalRows) {
  const auto set = walsh_hadamard_patterns(2, 4, Ordering::natural, 1.0);
  const auto h = sylvester(4);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto m = set.logical_mask(i);
    for (std::size_t p = 0; p < 4; ++p) EXPECT_EQ(m[p], h[i][p]);
  }
  for (std::size_t p = 0; p < 4; ++p) EXPECT_EQ(set.logical_mask(0)[p], 1);
}

TEST(WalshHadamard, MatchesSylvesterRecursion) {
  const auto h = sylvester(64);
  const auto set = walsh_hadamard_patterns(8, 64, Ordering::natural);
  for (std::size_t i = 0; i < 64; ++i)
    for (std::size_t p = 0; p < 64; ++p) ASSERT_EQ(set.value(i, p % 8, p / 8), h[i][p]);
}

TEST(WalshHadamard, CompleteSetIsOrthogonal) {
  for (auto ordering : {Ordering::natural, Ordering::sequency}) {
    const auto set = walsh_hadamard_patterns(8, 64, ordering);
    std::vector<LogicalMask> masks;
    for (std::size_t i = 0; i < set.count(); ++i) masks.push_back(set.logical_mask(i));
    for (std::size_t i = 0; i < 64; ++i)
      for (std::size_t j = 0; j < 64; ++j) {
        long dot = 0;
        for (std::size_t p = 0; p < 64; ++p) dot += masks[i][p] * masks[j][p];
        ASSERT_EQ(dot, i == j ? 64 : 0);
      }
  }
}

TEST(WalshHadamard, CompressionRatio) {
  const auto set = walsh_hadamard_patterns(64, 128, Ordering::sequency);
  EXPECT_DOUBLE_EQ(set.compression_ratio(), 0.03125);
  EXPECT_EQ(pattern_count_for_ratio(64, 0.03125), 128u);
  EXPECT_EQ(pattern_count_for_ratio(64, 0.015625), 64u);
  EXPECT_EQ(pattern_count_for_ratio(128, 0.0625), 1024u);
  EXPECT_THROW(pattern_count_for_ratio(64, 0.0), Error);
  EXPECT_THROW(pattern_count_for_ratio(64, 1.5), Error);
}

TEST(WalshHadamard, SequencyIsPermutationOfNatural) {
  const auto nat = hadamard_row_order(16, Ordering::natural);
  auto seq = hadamard_row_order(16, Ordering::sequency);
  EXPECT_NE(nat, seq);
  std::sort(seq.begin(), seq.end());
  EXPECT_EQ(nat, seq);
}

TEST(WalshHadamard, SequencyOrderSortsBySignChanges) {
  const auto set = walsh_hadamard_patterns(8, 64, Ordering::sequency);
  std::size_t prev = 0;
  for (std::size_t i = 0; i < set.count(); ++i) {
    const std::size_t c = mask_sign_changes(set.logical_mask(i));
    EXPECT_GE(c, prev);
    prev = c;
  }
  EXPECT_EQ(mask_sign_changes(set.logical_mask(0)), 0u);
}

TEST(WalshHadamard, OneDimensionalSequency) {
  const auto h = sylvester(16);
  for (std::size_t r = 0; r < 16; ++r) {
    std::size_t c = 0;
    for (std::size_t k = 1; k < 16; ++k) c += h[r][k] != h[r][k - 1];
    EXPECT_EQ(walsh_sequency(r, 16), c);
  }
}

TEST(WalshHadamard, Errors) {
  try {
    walsh_hadamard_patterns(6, 4, Ordering::natural);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::parameter);
  }
  try {
    walsh_hadamard_patterns(4, 17, Ordering::natural);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::range);
  }
  EXPECT_THROW(walsh_hadamard_patterns(4, 0, Ordering::natural), Error);
  EXPECT_THROW(walsh_hadamard_patterns(4, 4, Ordering::natural, 0.0), Error);
  EXPECT_THROW(walsh_hadamard_patterns(4, 4, Ordering::natural, 1.1), Error);
  EXPECT_THROW(parse_ordering("zigzag"), Error);
  EXPECT_EQ(parse_ordering("sequency"), Ordering::sequency);
}

TEST(PatternSet, IdentifierAndEquality) {
  const auto a = walsh_hadamard_patterns(64, 128, Ordering::sequency);
  EXPECT_EQ(a.id(), "wh-n64-m128-sequency");
  EXPECT_EQ(a, walsh_hadamard_patterns(64, 128, Ordering::sequency));
  EXPECT_FALSE(a == walsh_hadamard_patterns(64, 128, Ordering::natural));
  EXPECT_FALSE(a == a.with_modulation_depth(0.5));
  EXPECT_THROW(a.logical_mask(128), Error);
}

TEST(PositiveNegativeSplit, DcRow) {
  const auto set = walsh_hadamard_patterns(4, 16, Ordering::natural);
  const auto s = positive_negative_split(set, 0);
  for (std::size_t p = 0; p < 16; ++p) {
    EXPECT_EQ(s.plus[p], 1);
    EXPECT_EQ(s.minus[p], 0);
  }
}

TEST(PositiveNegativeSplit, CheckerboardIsComplementary) {
  // Row (n+1) * (n/2)... find the checkerboard by search: entry alternates in x and y.
  const std::size_t n = 4;
  const auto set = walsh_hadamard_patterns(n, 16, Ordering::natural);
  bool found = false;
  for (std::size_t i = 0; i < set.count(); ++i) {
    bool checker = true;
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) checker &= set.value(i, x, y) == ((x + y) % 2 == 0 ? 1 : -1);
    if (!checker) continue;
    found = true;
    const auto s = positive_negative_split(set, i);
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        EXPECT_EQ(s.plus(x, y), (x + y) % 2 == 0 ? 1 : 0);
        EXPECT_EQ(s.minus(x, y), (x + y) % 2 == 0 ? 0 : 1);
      }
  }
  EXPECT_TRUE(found);
}

TEST(PositiveNegativeSplit, PartitionAndDifference) {
  const auto set = walsh_hadamard_patterns(8, 40, Ordering::sequency);
  for (std::size_t i = 0; i < set.count(); ++i) {
    const auto s = positive_negative_split(set, i);
    const auto m = set.logical_mask(i);
    for (std::size_t p = 0; p < 64; ++p) {
      EXPECT_EQ(s.plus[p] + s.minus[p], 1);
      EXPECT_EQ(int(s.plus[p]) - int(s.minus[p]), m[p]);
    }
  }
  EXPECT_THROW(positive_negative_split(set, 40), Error);
}

TEST(ApplyMask, Examples) {
  const IntensityImage ones(4, 4, 1.0, 1.0);
  const auto blocked = apply_mask(ones, BinaryMask(4, 4, 1.0, 1), 1.0);
  for (double v : blocked.values()) EXPECT_EQ(v, 0.0);
  const auto open = apply_mask(ones, BinaryMask(4, 4, 1.0, 0), 1.0);
  for (double v : open.values()) EXPECT_EQ(v, 1.0);
  BinaryMask half(4, 4, 1.0, 0);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 2; ++x) half(x, y) = 1;
  const auto h = apply_mask(ones, half, 0.5);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) EXPECT_EQ(h(x, y), x < 2 ? 0.5 : 1.0);
}

TEST(ApplyMask, ReplicatesCoarseMask) {
  BinaryMask coarse(2, 2, 1.0, 0);
  coarse(1, 0) = 1;
  const auto out = apply_mask(IntensityImage(8, 8, 1.0, 2.0), coarse, 1.0);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) EXPECT_EQ(out(x, y), (x >= 4 && y < 4) ? 0.0 : 2.0);
  EXPECT_THROW(apply_mask(IntensityImage(8, 8, 1.0), BinaryMask(3, 3, 1.0), 1.0), Error);
  EXPECT_THROW(apply_mask(IntensityImage(8, 8, 1.0), coarse, 0.0), Error);
}

TEST(ApplyMask, LinearAndMonotoneInDepth) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  std::vector<double> a(64), b(64);
  for (auto& v : a) v = u(rng);
  for (auto& v : b) v = u(rng);
  const IntensityImage A(GridShape{8, 8, 1.0}, a), B(GridShape{8, 8, 1.0}, b);
  std::vector<double> ab(64);
  for (std::size_t i = 0; i < 64; ++i) ab[i] = 2.0 * a[i] + 3.0 * b[i];
  const auto set = walsh_hadamard_patterns(8, 10, Ordering::sequency);
  const auto mask = positive_negative_split(set, 5).plus;
  const auto lhs = apply_mask(IntensityImage(GridShape{8, 8, 1.0}, ab), mask, 0.7);
  const auto ma = apply_mask(A, mask, 0.7), mb = apply_mask(B, mask, 0.7);
  for (std::size_t i = 0; i < 64; ++i) EXPECT_NEAR(lhs[i], 2.0 * ma[i] + 3.0 * mb[i], 1e-12);
  const auto weak = apply_mask(A, mask, 0.3), strong = apply_mask(A, mask, 0.9);
  for (std::size_t i = 0; i < 64; ++i) EXPECT_LE(strong[i], weak[i]);
}

TEST(Drude, ZeroPlasmaFrequencyIsBackground) {
  DrudeParams p;
  p.eps_inf = 11.7;
  p.omega_p = 0.0;
  p.omega = 2.0 * std::numbers::pi * 0.36e12;
  const auto e = drude_permittivity(p);
  EXPECT_EQ(e.real(), 11.7);
  EXPECT_EQ(e.imag(), 0.0);
}

TEST(Drude, ReferenceValueAndLossSign) {
  DrudeParams p{11.7, 2.0 * std::numbers::pi * 5e12, 1e-13, 2.0 * std::numbers::pi * 0.36e12};
  const auto e = drude_permittivity(p);
  // Written out with real arithmetic: w(w + i g) = w^2 + i w g.
  const double g = 1.0 / p.tau_d;
  const double a = p.omega * p.omega, b = p.omega * g;
  const double s = p.omega_p * p.omega_p / (a * a + b * b);
  const double re = p.eps_inf - s * a, im = s * b;
  EXPECT_NEAR(e.real(), re, 1e-12 * std::abs(re));
  EXPECT_NEAR(e.imag(), im, 1e-12 * std::abs(im));
  EXPECT_GT(e.imag(), 0.0);
}

TEST(Drude, SingularAtZeroFrequency) {
  DrudeParams p{11.7, 1e13, 1e-13, 0.0};
  try {
    drude_permittivity(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::parameter);
  }
  p.omega = 1e12;
  p.tau_d = 0.0;
  EXPECT_THROW(drude_permittivity(p), Error);
}

TEST(PatternFile, RoundTripPreservesMasks) {
  for (auto ordering : {Ordering::natural, Ordering::sequency}) {
    const auto set = walsh_hadamard_patterns(16, 77, ordering, 0.8);
    const auto bytes = encode_patterns(set);
    EXPECT_EQ(bytes.size(), 15u + 77u * 256u);
    const std::vector<unsigned char> raw(bytes.begin(), bytes.end());
    const auto back = decode_patterns(raw, 0.8);
    EXPECT_EQ(back, set);
    for (std::size_t i = 0; i < set.count(); ++i) {
      const auto a = set.logical_mask(i), b = back.logical_mask(i);
      for (std::size_t p = 0; p < a.size(); ++p) ASSERT_EQ(a[p], b[p]);
    }
  }
}

TEST(PatternFile, HeaderLayout) {
  const auto bytes = encode_patterns(walsh_hadamard_patterns(4, 3, Ordering::sequency));
  EXPECT_EQ(bytes.substr(0, 4), "SPIP");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5], 0);
  EXPECT_EQ(bytes[6], 4);
  EXPECT_EQ(bytes[10], 3);
  EXPECT_EQ(bytes[14], 1);
  EXPECT_EQ(static_cast<std::int8_t>(bytes[15]), 1);
}

TEST(PatternFile, CorruptionReportsOffset) {
  const auto bytes = encode_patterns(walsh_hadamard_patterns(4, 3, Ordering::natural));
  std::vector<unsigned char> raw(bytes.begin(), bytes.end());
  const auto expect_format = [](const std::vector<unsigned char>& b, const std::string& needle) {
    try {
      decode_patterns(b);
      FAIL() << "accepted corrupt file";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::format);
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  auto bad = raw;
  bad[0] = 'X';
  expect_format(bad, "byte 0");
  bad = raw;
  bad[4] = 9;
  expect_format(bad, "byte 4");
  bad = raw;
  bad[14] = 7;
  expect_format(bad, "byte 14");
  bad = raw;
  bad.pop_back();
  expect_format(bad, "bytes");
  bad = raw;
  bad[15 + 16 + 5] = static_cast<unsigned char>(-static_cast<std::int8_t>(bad[15 + 16 + 5]));
  bad[15 + 16 + 6] = 0;
  expect_format(bad, "byte " + std::to_string(15 + 16 + 5));
  expect_format(std::vector<unsigned char>(raw.begin(), raw.begin() + 8), "truncated");
}
