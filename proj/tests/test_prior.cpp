#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "spi/metrics.hpp"
#include "spi/prior.hpp"

using namespace spi;

namespace {

constexpr double kLambda = 833.3e-6;
constexpr double kPitch = 41e-6;

IntensityImage random_binary(std::size_t n, std::uint64_t seed, double pitch = kPitch) {
  std::mt19937_64 rng(seed);
  IntensityImage img(n, n, pitch);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = rng() % 3 == 0 ? 1.0 : 0.0;
  return img;
}

IntensityImage two_bars(std::size_t n) {
  IntensityImage img(n, n, 1.0);
  for (std::size_t y = n / 8; y < n - n / 8; ++y)
    for (std::size_t x = 0; x < n; ++x)
      if ((x >= n / 4 && x < 3 * n / 8) || (x >= 5 * n / 8 && x < 3 * n / 4)) img(x, y) = 1.0;
  return img;
}

PropagationSpec spec_at(double d) {
  PropagationSpec p;
  p.wavelength = kLambda;
  p.distance = d;
  return p;
}

struct Instance {
  IntensityImage object;
  PatternSet set;
  Measurement meas;
  RealGrid input;
  PropagationSpec prop;
};

Instance make_instance(std::size_t n, std::size_t m, double d, double sigma, std::uint64_t seed) {
  auto object = random_binary(n, seed);
  const auto prop = spec_at(d);
  const auto diffracted = intensity(propagate(field_from_amplitude(amplitude_of(object)), prop));
  auto set = walsh_hadamard_patterns(n, m, Ordering::sequency, 0.9);
  auto meas = measure(diffracted, set, sigma, seed);
  auto input = prior_input(meas, set, kPitch);
  return {std::move(object), std::move(set), std::move(meas), std::move(input), prop};
}

double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace

TEST(Generator, OutputInOpenUnitIntervalAndShapePreserved) {
  const auto inst = make_instance(16, 64, 0.0, 0.0, 3);
  GeneratorNet net({}, 11);
  const auto out = net.forward(inst.input);
  ASSERT_EQ(out.width(), 16u);
  ASSERT_EQ(out.height(), 16u);
  for (double v : out.values()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Generator, RepeatedForwardIsBitIdentical) {
  const auto inst = make_instance(16, 64, 0.0, 0.0, 4);
  GeneratorNet net({}, 5);
  const auto a = net.forward(inst.input);
  const auto b = net.forward(inst.input);
  EXPECT_EQ(a.values().size(), b.values().size());
  EXPECT_TRUE(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
}

TEST(Generator, SameSeedSameParameters) {
  GeneratorNet a({}, 42), b({}, 42), c({}, 43);
  EXPECT_TRUE(std::equal(a.parameters().begin(), a.parameters().end(), b.parameters().begin()));
  EXPECT_FALSE(std::equal(a.parameters().begin(), a.parameters().end(), c.parameters().begin()));
}

TEST(Generator, ParameterCountFollowsChannelPlan) {
  GeneratorNet net({}, 1);
  // conv weights + biases for 1-16-32-32-16-1, BN scale/shift on the first four blocks
  const std::size_t conv = 9 * (16 + 16 * 32 + 32 * 32 + 32 * 16 + 16) + (16 + 32 + 32 + 16 + 1);
  const std::size_t bn = 2 * (16 + 32 + 32 + 16);
  EXPECT_EQ(net.parameter_count(), conv + bn);
}

TEST(Generator, RejectsBadChannelPlan) {
  NetworkConfig cfg;
  cfg.channels = {2, 8, 1};
  EXPECT_THROW(GeneratorNet(cfg, 1), Error);
}

TEST(LossGradient, MatchesCentralDifferencesThroughPropagation) {
  auto inst = make_instance(16, 128, 0.5e-3, 0.01, 9);
  const PhysicsModel model(inst.set, inst.prop, inst.input.shape());
  GeneratorNet net({}, 21);
  const double tv = 1e-3;
  const auto lg = loss_and_gradient(net, inst.input, model, inst.meas.readings, tv);
  double gmax = 0.0;
  for (double g : lg.grad) gmax = std::max(gmax, std::abs(g));

  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::size_t> pick(0, net.parameter_count() - 1);
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const std::size_t j = pick(rng);
    const double theta = net.parameters()[j];
    const double h = 1e-5;
    net.parameters()[j] = theta + h;
    const double up = loss_and_gradient(net, inst.input, model, inst.meas.readings, tv).loss;
    net.parameters()[j] = theta - h;
    const double down = loss_and_gradient(net, inst.input, model, inst.meas.readings, tv).loss;
    net.parameters()[j] = theta;
    worst = std::max(worst, relative_error(lg.grad[j], (up - down) / (2 * h), 1e-6 * gmax));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(LossGradient, UniformShiftOfConstantOutput) {
  const std::size_t n = 16;
  auto inst = make_instance(n, 64, 0.5e-3, 0.0, 12);
  const auto diffracted = intensity(propagate(field_from_amplitude(amplitude_of(inst.object)), inst.prop));
  // rows 1.. of the sequency order are balanced; with and without the DC row
  std::vector<std::size_t> rows(inst.set.selection().begin() + 1, inst.set.selection().end());
  for (const PatternSet& set : {PatternSet(n, rows, Ordering::sequency, 0.9), inst.set}) {
    const auto meas = measure(diffracted, set, 0.0, 1);
    const PhysicsModel model(set, inst.prop, inst.input.shape());
    const std::vector<double> constant(n * n, 0.3);
    const auto ev = model.evaluate(constant, meas.readings);
    double analytic = 0.0;
    for (double g : ev.d_object) analytic += g;
    const double h = 1e-5;
    std::vector<double> up(constant), down(constant);
    for (auto& v : up) v += h;
    for (auto& v : down) v -= h;
    const double fd =
        (model.evaluate(up, meas.readings).data_term - model.evaluate(down, meas.readings).data_term) / (2 * h);
    EXPECT_LT(relative_error(analytic, fd, 1e-9 * ev.data_term), 1e-4) << set.count() << " patterns";
  }
}

TEST(LossGradient, SelfConsistentReadingsLeaveOnlyTv) {
  auto inst = make_instance(16, 256, 0.5e-3, 0.0, 2);
  const PhysicsModel model(inst.set, inst.prop, inst.input.shape());
  GeneratorNet net({}, 8);
  const auto out = net.forward(inst.input);
  const auto readings = model.predict(out.values());
  const double tv = 0.25;
  const auto lg = loss_and_gradient(net, inst.input, model, readings, tv);
  EXPECT_EQ(lg.data_term, 0.0);
  EXPECT_DOUBLE_EQ(lg.loss, tv * total_variation(out.values(), 16, 16));
}

TEST(LossGradient, PredictionMatchesForwardPredict) {
  auto inst = make_instance(16, 200, 0.3e-3, 0.0, 6);
  const PhysicsModel model(inst.set, inst.prop, inst.input.shape());
  const auto a = model.predict(inst.object.values());
  const auto b = forward_predict(inst.object, inst.prop, inst.set);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-9);
}

TEST(LossGradient, InputShapeMismatch) {
  auto inst = make_instance(16, 64, 0.0, 0.0, 1);
  const PhysicsModel model(inst.set, inst.prop, inst.input.shape());
  GeneratorNet net({}, 1);
  const RealGrid wrong(8, 8, kPitch);
  try {
    loss_and_gradient(net, wrong, model, inst.meas.readings, 0.0);
    FAIL() << "expected a dimension error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::dimension);
  }
}

TEST(LossGradient, NonFiniteObjectReportsStage) {
  auto inst = make_instance(16, 64, 0.0, 0.0, 1);
  const PhysicsModel model(inst.set, inst.prop, inst.input.shape());
  std::vector<double> bad(256, 0.5);
  bad[17] = std::nan("");
  try {
    model.evaluate(bad, inst.meas.readings, 12);
    FAIL() << "expected a numerical error";
  } catch (const NumericalError& e) {
    EXPECT_EQ(e.stage(), "generate");
    EXPECT_EQ(e.iteration(), 12);
  }
}

TEST(TotalVariation, ConstantIsZeroAndTransposeInvariant) {
  const std::size_t n = 12;
  std::vector<double> flat(n * n, 0.7), grad(n * n, 0.0);
  EXPECT_EQ(total_variation_gradient(flat, n, n, grad), 0.0);
  for (double g : grad) EXPECT_EQ(g, 0.0);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x(n * n), xt(n * n);
  for (auto& v : x) v = u(rng);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) xt[c * n + r] = x[r * n + c];
  std::vector<double> g1(n * n, 0.0), g2(n * n, 0.0);
  EXPECT_NEAR(total_variation_gradient(x, n, n, g1), total_variation_gradient(xt, n, n, g2), 1e-12);
  EXPECT_NEAR(total_variation_gradient(x, n, n, g1), total_variation(x, n, n), 1e-12);
}

TEST(Adam, LearningRateStaircase) {
  AdamState adam(1);
  for (long t : {0L, 1L, 99L, 100L, 101L, 199L, 200L, 250L, 999L, 1000L}) {
    const double expected = 0.05 * std::pow(0.9, static_cast<double>(t / 100));
    EXPECT_EQ(adam.learning_rate(t), expected) << "t=" << t;
  }
}

TEST(Adam, MatchesReferenceRecurrence) {
  const std::size_t p = 5;
  AdamState adam(p);
  std::vector<double> theta(p, 0.5), ref(theta), m(p, 0.0), v(p, 0.0);
  std::mt19937_64 rng(19);
  std::normal_distribution<double> g(0.0, 2.0);
  for (long t = 1; t <= 250; ++t) {
    std::vector<double> grad(p);
    for (auto& x : grad) x = g(rng);
    adam.update(theta, grad);
    const double lr = 0.05 * std::pow(0.9, std::floor((t - 1) / 100.0));
    for (std::size_t i = 0; i < p; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * grad[i];
      v[i] = 0.999 * v[i] + 0.001 * grad[i] * grad[i];
      const double mh = m[i] / (1 - std::pow(0.9, t));
      const double vh = v[i] / (1 - std::pow(0.999, t));
      ref[i] -= lr * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  EXPECT_EQ(adam.step(), 250);
  for (std::size_t i = 0; i < p; ++i) EXPECT_NEAR(theta[i], ref[i], 1e-12);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  AdamState adam(3);
  std::vector<double> theta{1.0, 1.0, 1.0};
  const std::vector<double> grad{3.0, -0.001, 0.0};
  adam.update(theta, grad);
  EXPECT_NEAR(theta[0], 0.95, 1e-9);
  EXPECT_NEAR(theta[1], 1.05, 1e-6);
  EXPECT_EQ(theta[2], 1.0);
}

TEST(Adam, SizeMismatch) {
  AdamState adam(3);
  std::vector<double> theta(2), grad(3);
  EXPECT_THROW(adam.update(theta, grad), Error);
}

TEST(Untrained, SeededRunsAreBitIdentical) {
  auto inst = make_instance(16, 64, 0.5e-3, 0.02, 5);
  UntrainedOptions opts;
  opts.iterations = 20;
  opts.seed = 3;
  opts.pitch = kPitch;
  const auto a = reconstruct_untrained(inst.meas, inst.set, inst.prop, opts);
  const auto b = reconstruct_untrained(inst.meas, inst.set, inst.prop, opts);
  EXPECT_TRUE(std::equal(a.image.values().begin(), a.image.values().end(), b.image.values().begin()));
  EXPECT_EQ(a.residual_history, b.residual_history);
  EXPECT_EQ(a.iterations_used, 20);
  EXPECT_EQ(a.method, Method::untrained);
}

TEST(Untrained, RejectsZeroIterations) {
  auto inst = make_instance(16, 64, 0.0, 0.0, 5);
  UntrainedOptions opts;
  opts.iterations = 0;
  EXPECT_THROW(reconstruct_untrained(inst.meas, inst.set, inst.prop, opts), Error);
}

TEST(Untrained, TwoBarPhantomFullSampling) {
  const std::size_t n = 64;
  const auto object = two_bars(n);
  const auto set = walsh_hadamard_patterns(n, n * n, Ordering::sequency, 0.9);
  const auto meas = measure(object, set, 0.0, 1);
  UntrainedOptions opts;
  opts.seed = 7;
  const auto run = reconstruct_untrained_with_net(meas, set, PropagationSpec{kLambda, 0.0}, opts);
  EXPECT_GT(ssim(run.result.image, object), 0.9);

  // loss trend: each 50-iteration window averages below the previous one
  const auto& h = run.result.residual_history;
  ASSERT_EQ(h.size(), 300u);
  EXPECT_LT(h.back(), h.front());
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t w = 0; w < 6; ++w) {
    double mean = 0.0;
    for (std::size_t i = 50 * w; i < 50 * (w + 1); ++i) mean += h[i] / 50.0;
    EXPECT_LT(mean, previous) << "window " << w;
    previous = mean;
  }

  // With the parameters held at their final values (the converged limit), the
  // running statistics settle on the batch statistics.
  GeneratorNet net = run.net;
  const auto input = prior_input(meas, set, 1.0);
  for (int k = 0; k < 800; ++k) net.forward(input, NetMode::train, nullptr, true);
  const auto train = net.forward(input, NetMode::train);
  const auto infer = net.forward(input, NetMode::inference);
  double diff = 0.0;
  for (std::size_t i = 0; i < train.size(); ++i) diff = std::max(diff, std::abs(train[i] - infer[i]));
  EXPECT_LT(diff, 1e-3);
}

TEST(Checkpoint, RoundTripIsExact) {
  auto inst = make_instance(16, 64, 0.0, 0.0, 5);
  UntrainedOptions opts;
  opts.iterations = 5;
  opts.pitch = kPitch;
  const auto run = reconstruct_untrained_with_net(inst.meas, inst.set, inst.prop, opts);
  const auto bytes = encode_checkpoint(run.net);
  EXPECT_EQ(bytes.substr(0, 4), "SPIN");
  const std::vector<unsigned char> raw(bytes.begin(), bytes.end());
  auto back = decode_checkpoint(raw);
  EXPECT_EQ(encode_checkpoint(back), bytes);
  EXPECT_TRUE(back.running_initialized());
  GeneratorNet original = run.net;
  const auto a = original.forward(inst.input, NetMode::inference);
  const auto b = back.forward(inst.input, NetMode::inference);
  EXPECT_TRUE(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
}

TEST(Checkpoint, CorruptionIsRejected) {
  GeneratorNet net({}, 2);
  const auto bytes = encode_checkpoint(net);
  std::vector<unsigned char> raw(bytes.begin(), bytes.end());
  auto bad_magic = raw;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), Error);
  auto truncated = raw;
  truncated.resize(raw.size() - 3);
  EXPECT_THROW(decode_checkpoint(truncated), Error);
  auto trailing = raw;
  trailing.push_back(0);
  EXPECT_THROW(decode_checkpoint(trailing), Error);
  auto bad_plan = raw;
  bad_plan[10 + 9] = 7;  // second block input channels no longer match the first block's output
  try {
    decode_checkpoint(bad_plan);
    FAIL() << "expected a format error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::format);
  }
}

TEST(Sweep, SingleDistanceMatchesDirectRun) {
  auto inst = make_instance(16, 64, 0.5e-3, 0.0, 8);
  UntrainedOptions opts;
  opts.iterations = 15;
  opts.seed = 4;
  opts.pitch = kPitch;
  const std::vector<double> d{0.5e-3};
  const auto sweep = backprop_refocus_sweep(inst.meas, inst.set, inst.prop, d, opts);
  const auto direct = reconstruct_untrained(inst.meas, inst.set, inst.prop, opts);
  ASSERT_EQ(sweep.size(), 1u);
  EXPECT_TRUE(std::equal(sweep[0].image.values().begin(), sweep[0].image.values().end(),
                         direct.image.values().begin()));
  EXPECT_EQ(sweep[0].residual_history, direct.residual_history);
}

TEST(Sweep, ZeroDistanceOnFocusedSceneEqualsPlainRun) {
  auto inst = make_instance(16, 64, 0.0, 0.0, 8);
  UntrainedOptions opts;
  opts.iterations = 10;
  opts.pitch = kPitch;
  const std::vector<double> d{0.0, 0.3e-3};
  PropagationSpec base = inst.prop;
  base.distance = 1.0;  // overridden per entry
  const auto sweep = backprop_refocus_sweep(inst.meas, inst.set, base, d, opts);
  const auto plain = reconstruct_untrained(inst.meas, inst.set, spec_at(0.0), opts);
  EXPECT_TRUE(std::equal(sweep[0].image.values().begin(), sweep[0].image.values().end(),
                         plain.image.values().begin()));
  EXPECT_NE(sweep[1].residual_history, plain.residual_history);
}

TEST(Sweep, EmptyDistanceList) {
  auto inst = make_instance(16, 64, 0.0, 0.0, 8);
  EXPECT_THROW(backprop_refocus_sweep(inst.meas, inst.set, inst.prop, {}, UntrainedOptions{}), Error);
}
