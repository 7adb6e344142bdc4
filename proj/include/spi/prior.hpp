#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spi/classical.hpp"
#include "spi/measurement.hpp"
#include "spi/network.hpp"
#include "spi/parallel.hpp"
#include "spi/propagation.hpp"

namespace spi {

/// Differentiable physics chain from an object-intensity estimate to predicted
/// readings: sqrt -> zero-phase field -> angular spectrum -> |.|^2 -> m * patterns.
class PhysicsModel {
 public:
  PhysicsModel(const PatternSet& set, const PropagationSpec& prop, const GridShape& grid)
      : grid_(grid), asp_(grid, prop), patterns_(set, grid), depth_(set.modulation_depth()) {}

  struct Evaluation {
    double data_term = 0.0;               // sum_i (I_i - predicted_i)^2
    std::vector<double> predicted;        // predicted readings
    std::vector<double> d_object;         // d(data_term)/d(object intensity)
  };

  const GridShape& grid() const noexcept { return grid_; }
  const AngularSpectrum& propagation() const noexcept { return asp_; }

  std::vector<double> predict(std::span<const double> object) const { return run(object, {}, nullptr).predicted; }

  Evaluation evaluate(std::span<const double> object, std::span<const double> readings, long iteration = -1) const {
    return run(object, readings, &iteration);
  }

 private:
  Evaluation run(std::span<const double> object, std::span<const double> readings, const long* iteration) const {
    const long it = iteration ? *iteration : -1;
    if (object.size() != grid_.size()) throw Error(ErrorKind::dimension, "object size does not match model grid");
    std::vector<Complex> amp(object.size());
    for (std::size_t i = 0; i < object.size(); ++i) {
      if (!(object[i] >= 0.0) || !std::isfinite(object[i]))
        throw NumericalError("generate", it, "object estimate is negative or non-finite");
      amp[i] = std::sqrt(object[i]);
    }
    const ComplexField near(grid_, std::move(amp));
    const ComplexField far = asp_.forward(near);
    std::vector<double> diffracted(far.size());
    for (std::size_t i = 0; i < far.size(); ++i) diffracted[i] = std::norm(far[i]);
    Evaluation ev;
    ev.predicted = patterns_.integrate(diffracted);
    for (auto& v : ev.predicted) v *= depth_;
    if (!iteration) return ev;

    if (readings.size() != ev.predicted.size())
      throw Error(ErrorKind::consistency, "reading count does not match pattern count");
    std::vector<double> d_pred(ev.predicted.size());
    for (std::size_t i = 0; i < d_pred.size(); ++i) {
      const double r = ev.predicted[i] - readings[i];
      ev.data_term += r * r;
      d_pred[i] = 2.0 * r;
    }
    if (!std::isfinite(ev.data_term)) throw NumericalError("loss", it, "data term is not finite");
    // d/dD = m * A^T d_pred; d/dE = 2 (d/dD) E; d/dE0 = P^H d/dE; E0 = sqrt(O) real.
    auto d_diffracted = patterns_.spread(d_pred);
    std::vector<Complex> d_far(far.size());
    for (std::size_t i = 0; i < far.size(); ++i) d_far[i] = 2.0 * depth_ * d_diffracted[i] * far[i];
    const ComplexField d_near = asp_.adjoint(ComplexField(grid_, std::move(d_far)));
    ev.d_object.resize(object.size());
    for (std::size_t i = 0; i < object.size(); ++i) {
      const double a = near[i].real();
      ev.d_object[i] = a > 0.0 ? d_near[i].real() / (2.0 * a) : 0.0;
    }
    return ev;
  }

  GridShape grid_;
  AngularSpectrum asp_;
  PatternOperator patterns_;
  double depth_;
};

/// Anisotropic TV value and its (sign) subgradient.
inline double total_variation_gradient(std::span<const double> x, std::size_t w, std::size_t h,
                                       std::span<double> grad) {
  double tv = 0.0;
  const auto sign = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t i = r * w + c;
      if (c + 1 < w) {
        const double d = x[i] - x[i + 1];
        tv += std::abs(d);
        grad[i] += sign(d);
        grad[i + 1] -= sign(d);
      }
      if (r + 1 < h) {
        const double d = x[i] - x[i + w];
        tv += std::abs(d);
        grad[i] += sign(d);
        grad[i + w] -= sign(d);
      }
    }
  return tv;
}

struct LossGradient {
  double loss = 0.0;
  double data_term = 0.0;
  double tv_term = 0.0;
  std::vector<double> grad;  // d loss / d theta
  RealGrid output;           // generator output for this evaluation
};

/// loss = |I - I_hat|^2 + tv_weight * TV(O) with O = net(input) and I_hat the
/// physics prediction; gradient by reverse mode through the whole chain.
inline LossGradient loss_and_gradient(GeneratorNet& net, const RealGrid& input, const PhysicsModel& model,
                                      std::span<const double> readings, double tv_weight, long iteration = -1,
                                      bool update_running = false) {
  if (!input.shape().same_samples(model.grid()))
    throw Error(ErrorKind::dimension, "generator input " + describe(input.shape()) + " vs model grid " +
                                          describe(model.grid()));
  GeneratorNet::Cache cache;
  LossGradient out;
  out.output = net.forward(input, NetMode::train, &cache, update_running);
  for (double v : out.output.values())
    if (!std::isfinite(v)) throw NumericalError("generate", iteration, "generator produced non-finite output");
  auto ev = model.evaluate(out.output.values(), readings, iteration);
  std::vector<double> d_out = std::move(ev.d_object);
  out.data_term = ev.data_term;
  if (tv_weight != 0.0) {
    std::vector<double> tv_grad(d_out.size(), 0.0);
    out.tv_term = tv_weight * total_variation_gradient(out.output.values(), input.width(), input.height(), tv_grad);
    for (std::size_t i = 0; i < d_out.size(); ++i) d_out[i] += tv_weight * tv_grad[i];
  }
  out.loss = out.data_term + out.tv_term;
  if (!std::isfinite(out.loss)) throw NumericalError("loss", iteration, "loss is not finite");
  out.grad = net.backward(cache, d_out);
  for (double g : out.grad)
    if (!std::isfinite(g)) throw NumericalError("gradient", iteration, "parameter gradient is not finite");
  return out;
}

/// Convenience overload building the physics model from its parts.
inline LossGradient loss_and_gradient(GeneratorNet& net, const RealGrid& input, const Measurement& meas,
                                      const PatternSet& set, const PropagationSpec& prop, double tv_weight) {
  check_consistent(meas, set);
  const PhysicsModel model(set, prop, input.shape());
  return loss_and_gradient(net, input, model, meas.readings, tv_weight);
}

struct UntrainedOptions {
  int iterations = 300;
  std::uint64_t seed = 0;
  double pitch = 1.0;         // meters per reconstructed pixel
  double tv_weight = 1e-10;
  NetworkConfig network{};
  AdamConfig adam{};
};

/// Generator input: the DGI correlation estimate rescaled to [0, 1].
inline RealGrid prior_input(const Measurement& meas, const PatternSet& set, double pitch) {
  return rescale_unit(dgi_estimate(meas, set, pitch));
}

struct UntrainedRun {
  ReconResult result;
  GeneratorNet net;
};

inline UntrainedRun reconstruct_untrained_with_net(const Measurement& meas, const PatternSet& set,
                                                   const PropagationSpec& prop, const UntrainedOptions& opts) {
  check_consistent(meas, set);
  if (opts.iterations < 1) throw Error(ErrorKind::parameter, "iterations must be >= 1");
  const std::size_t n = set.order();
  const RealGrid input = prior_input(meas, set, opts.pitch);
  const PhysicsModel model(set, prop, input.shape());
  GeneratorNet net(opts.network, opts.seed);
  AdamState adam(net.parameter_count(), opts.adam);
  ReconResult result{RealGrid(n, n, opts.pitch), Method::untrained, 0, {}};
  result.residual_history.reserve(static_cast<std::size_t>(opts.iterations));
  for (int it = 0; it < opts.iterations; ++it) {
    auto lg = loss_and_gradient(net, input, model, meas.readings, opts.tv_weight, it, true);
    result.residual_history.push_back(lg.loss);
    adam.update(net.parameters(), lg.grad);
    result.iterations_used = it + 1;
  }
  result.image = net.forward(input, NetMode::train);
  return {std::move(result), std::move(net)};
}

/// Untrained-prior reconstruction: a freshly seeded generator fed the DGI
/// estimate is optimised by Adam against the physics-consistent loss.
inline ReconResult reconstruct_untrained(const Measurement& meas, const PatternSet& set, const PropagationSpec& prop,
                                         const UntrainedOptions& opts) {
  return reconstruct_untrained_with_net(meas, set, prop, opts).result;
}

/// One reconstruction per forward-model distance, sharing seed and patterns.
inline std::vector<ReconResult> backprop_refocus_sweep(const Measurement& meas, const PatternSet& set,
                                                       const PropagationSpec& prop_base,
                                                       std::span<const double> distances,
                                                       const UntrainedOptions& opts) {
  if (distances.empty()) throw Error(ErrorKind::parameter, "distance list is empty");
  std::vector<std::optional<ReconResult>> slots(distances.size());
  parallel_for(distances.size(), [&](std::size_t i) {
    PropagationSpec prop = prop_base;
    prop.distance = distances[i];
    slots[i] = reconstruct_untrained(meas, set, prop, opts);
  });
  std::vector<ReconResult> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

}  // namespace spi
