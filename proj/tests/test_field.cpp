#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "spi/field.hpp"

using namespace spi;

namespace {

RealGrid random_grid(std::size_t n, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  RealGrid g(n, n, 1e-4);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = u(rng);
  return g;
}

}  // namespace

TEST(FieldFromAmplitude, UniformAmplitudeZeroPhase) {
  const auto f = field_from_amplitude(RealGrid(4, 4, 1e-3, 1.0), RealGrid(4, 4, 1e-3, 0.0));
  for (const auto& v : f.values()) EXPECT_EQ(v, Complex(1.0, 0.0));
  EXPECT_EQ(f.pitch(), 1e-3);
}

TEST(FieldFromAmplitude, ZeroAmplitudeAnyPhase) {
  const auto f = field_from_amplitude(RealGrid(4, 4, 1.0, 0.0), random_grid(4, 3, -10, 10));
  for (const auto& v : f.values()) EXPECT_EQ(std::abs(v), 0.0);
}

TEST(FieldFromAmplitude, QuarterTurnGivesImaginaryUnit) {
  RealGrid phase(4, 4, 1.0, 0.0);
  phase(2, 1) = std::numbers::pi / 2;
  const auto f = field_from_amplitude(RealGrid(4, 4, 1.0, 1.0), phase);
  EXPECT_NEAR(f(2, 1).real(), 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(f(2, 1).imag(), 1.0);
  EXPECT_EQ(f(0, 0), Complex(1.0, 0.0));
}

TEST(FieldFromAmplitude, ShapeMismatchIsDimensionError) {
  try {
    field_from_amplitude(RealGrid(4, 4, 1.0, 1.0), RealGrid(8, 4, 1.0, 0.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::dimension);
  }
}

TEST(FieldFromAmplitude, NegativeAmplitudeRejected) {
  RealGrid amp(4, 4, 1.0, 1.0);
  amp[5] = -0.1;
  EXPECT_THROW(field_from_amplitude(amp), Error);
}

TEST(ComplexField, RejectsNonPowerOfTwoAndNonFinite) {
  EXPECT_THROW(ComplexField(6, 4, 1.0), Error);
  EXPECT_THROW(ComplexField(1, 1, 1.0), Error);
  EXPECT_THROW(ComplexField(4, 4, 0.0), Error);
  EXPECT_THROW(ComplexField(4, 4, -1.0), Error);
  std::vector<Complex> v(16, Complex(1.0, 0.0));
  v[3] = Complex(std::nan(""), 0.0);
  try {
    ComplexField(GridShape{4, 4, 1.0}, v);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_field);
  }
  EXPECT_NO_THROW(ComplexField(8, 2, 1.0));
}

TEST(IntensityImage, RejectsNegativeValues) {
  std::vector<double> v(16, 0.5);
  v[7] = -1e-12;
  EXPECT_THROW(IntensityImage(GridShape{4, 4, 1.0}, v), Error);
  v[7] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(IntensityImage(GridShape{4, 4, 1.0}, v), Error);
}

TEST(Intensity, ModulusSquared) {
  ComplexField f(4, 4, 2e-4, Complex(1.0, 0.0));
  EXPECT_EQ(intensity(f)[0], 1.0);
  f(1, 1) = Complex(1.0, 1.0);
  const auto i = intensity(f);
  EXPECT_DOUBLE_EQ(i(1, 1), 2.0);
  EXPECT_EQ(i.shape(), f.shape());
}

TEST(Intensity, AmplitudeSquaredForAnyPhase) {
  const auto amp = random_grid(16, 11, 0.0, 3.0);
  const auto phase = random_grid(16, 12, -7.0, 7.0);
  const auto i = intensity(field_from_amplitude(amp, phase));
  for (std::size_t p = 0; p < amp.size(); ++p) EXPECT_NEAR(i[p], amp[p] * amp[p], 1e-12 * amp[p] * amp[p] + 1e-300);
}

TEST(Intensity, GlobalPhaseInvariance) {
  const auto f = field_from_amplitude(random_grid(8, 1), random_grid(8, 2, -3, 3));
  std::vector<Complex> rotated(f.data());
  const Complex g = std::polar(1.0, 1.234);
  for (auto& v : rotated) v *= g;
  const auto a = intensity(f);
  const auto b = intensity(ComplexField(f.shape(), rotated));
  for (std::size_t p = 0; p < a.size(); ++p) EXPECT_NEAR(a[p], b[p], 1e-14);
}

TEST(Normalize, Examples) {
  IntensityImage img(2, 2, 1.0);
  img[1] = 2.0;
  img[2] = 4.0;
  const auto n = normalize(img);
  EXPECT_EQ(n[0], 0.0);
  EXPECT_EQ(n[1], 0.5);
  EXPECT_EQ(n[2], 1.0);

  IntensityImage unit(2, 2, 1.0, 0.25);
  unit[3] = 1.0;
  const auto u = normalize(unit);
  for (std::size_t p = 0; p < 4; ++p) EXPECT_EQ(u[p], unit[p]);

  const auto c = normalize(IntensityImage(4, 4, 1.0, 3.7));
  for (double v : c.values()) EXPECT_EQ(v, 1.0);
}

TEST(Normalize, Idempotent) {
  const auto img = IntensityImage::clamped(random_grid(8, 5, 0.0, 9.0));
  const auto once = normalize(img);
  const auto twice = normalize(once);
  for (std::size_t p = 0; p < once.size(); ++p) EXPECT_EQ(once[p], twice[p]);
}

TEST(Normalize, AllZeroIsDegenerate) {
  try {
    normalize(IntensityImage(4, 4, 1.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::degenerate);
  }
}
