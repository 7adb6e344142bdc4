#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "spi/encoding.hpp"
#include "spi/field.hpp"

namespace spi {

struct NetworkConfig {
  std::vector<std::size_t> channels{1, 16, 32, 32, 16, 1};  // one 3x3 conv block per adjacent pair
  double bn_momentum = 0.99;
  double bn_epsilon = 1e-3;
  double leak = 0.2;
};

enum class NetMode { train, inference };

/// Untrained convolutional generator: every block but the last is
/// conv3x3 (zero padded, stride 1) -> batch norm -> LeakyReLU; the last block is
/// conv3x3 -> sigmoid with a single output channel. Spatial size is preserved.
///
/// Trainable parameters live in one flat vector (per block: weights as a
/// (9*in) x out column-major matrix, bias, then BN scale and shift).
class GeneratorNet {
 public:
  using Matrix = Eigen::MatrixXd;  // activations: pixels x channels
  using Vector = Eigen::VectorXd;

  struct Block {
    std::size_t in = 0, out = 0;
    bool batch_norm = true;
    std::size_t weight_offset = 0, bias_offset = 0, gamma_offset = 0, beta_offset = 0;
  };

  /// Per-block intermediates kept by forward() for backward().
  struct Cache {
    std::size_t width = 0, height = 0;
    std::vector<Matrix> inputs;     // block inputs
    std::vector<Matrix> normed;     // x-hat after BN (or conv output when no BN)
    std::vector<Vector> inv_std;    // BN 1/sqrt(var + eps)
    std::vector<Matrix> preact;     // input to the nonlinearity
    Matrix output;                  // sigmoid output, pixels x 1
  };

  GeneratorNet(NetworkConfig config, std::uint64_t seed) : config_(std::move(config)), seed_(seed) {
    const auto& ch = config_.channels;
    if (ch.size() < 2 || ch.front() != 1 || ch.back() != 1)
      throw Error(ErrorKind::parameter, "channel plan must start and end with one channel");
    std::size_t offset = 0;
    for (std::size_t b = 0; b + 1 < ch.size(); ++b) {
      Block blk;
      blk.in = ch[b];
      blk.out = ch[b + 1];
      blk.batch_norm = b + 2 < ch.size();
      blk.weight_offset = offset;
      offset += 9 * blk.in * blk.out;
      blk.bias_offset = offset;
      offset += blk.out;
      if (blk.batch_norm) {
        blk.gamma_offset = offset;
        offset += blk.out;
        blk.beta_offset = offset;
        offset += blk.out;
      }
      blocks_.push_back(blk);
    }
    theta_.assign(offset, 0.0);
    running_mean_.resize(blocks_.size());
    running_var_.resize(blocks_.size());
    initialize(seed);
  }

  const NetworkConfig& config() const noexcept { return config_; }
  const std::vector<Block>& blocks() const noexcept { return blocks_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t parameter_count() const noexcept { return theta_.size(); }
  std::span<double> parameters() noexcept { return theta_; }
  std::span<const double> parameters() const noexcept { return theta_; }
  const std::vector<Vector>& running_mean() const noexcept { return running_mean_; }
  const std::vector<Vector>& running_var() const noexcept { return running_var_; }
  bool running_initialized() const noexcept { return running_initialized_; }

  /// Glorot-uniform conv weights, zero biases, unit BN scale, zero shift.
  void initialize(std::uint64_t seed) {
    seed_ = seed;
    std::mt19937_64 rng(seed);
    for (const auto& blk : blocks_) {
      const double limit = std::sqrt(6.0 / static_cast<double>(9 * blk.in + 9 * blk.out));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (std::size_t i = 0; i < 9 * blk.in * blk.out; ++i) theta_[blk.weight_offset + i] = dist(rng);
      for (std::size_t i = 0; i < blk.out; ++i) theta_[blk.bias_offset + i] = 0.0;
      if (blk.batch_norm)
        for (std::size_t i = 0; i < blk.out; ++i) {
          theta_[blk.gamma_offset + i] = 1.0;
          theta_[blk.beta_offset + i] = 0.0;
        }
    }
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      running_mean_[b] = Vector::Zero(static_cast<Eigen::Index>(blocks_[b].out));
      running_var_[b] = Vector::Ones(static_cast<Eigen::Index>(blocks_[b].out));
    }
    running_initialized_ = false;
  }

  /// Forward pass. In train mode BN uses the statistics of the single input
  /// image; when update_running is set the running statistics follow an
  /// exponential moving average (seeded by the first batch).
  RealGrid forward(const RealGrid& input, NetMode mode = NetMode::train, Cache* cache = nullptr,
                   bool update_running = false) {
    const std::size_t w = input.width(), h = input.height();
    const auto pixels = static_cast<Eigen::Index>(w * h);
    Matrix act = Eigen::Map<const Matrix>(input.values().data(), pixels, 1);
    if (cache) {
      cache->width = w;
      cache->height = h;
      cache->inputs.assign(blocks_.size(), {});
      cache->normed.assign(blocks_.size(), {});
      cache->inv_std.assign(blocks_.size(), {});
      cache->preact.assign(blocks_.size(), {});
    }
    bool seeded_running = false;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      const auto& blk = blocks_[b];
      if (cache) cache->inputs[b] = act;
      auto cols = workspace(pixels, act.cols() * 9);
      im2col(act, w, h, cols);
      Matrix z;
      z.noalias() = cols * weight(blk);
      z.rowwise() += bias(blk).transpose();
      if (blk.batch_norm) {
        Vector mean, var;
        if (mode == NetMode::train) {
          mean = z.colwise().mean().transpose();
          var = (z.rowwise() - mean.transpose()).array().square().colwise().mean().transpose();
          if (update_running) {
            if (!running_initialized_) {
              running_mean_[b] = mean;
              running_var_[b] = var;
              seeded_running = true;
            } else {
              running_mean_[b] = config_.bn_momentum * running_mean_[b] + (1.0 - config_.bn_momentum) * mean;
              running_var_[b] = config_.bn_momentum * running_var_[b] + (1.0 - config_.bn_momentum) * var;
            }
          }
        } else {
          mean = running_mean_[b];
          var = running_var_[b];
        }
        const Vector inv_std = (var.array() + config_.bn_epsilon).rsqrt().matrix();
        Matrix normed = (z.rowwise() - mean.transpose()) * inv_std.asDiagonal();
        z = normed * gamma(blk).asDiagonal();
        z.rowwise() += beta(blk).transpose();
        if (cache) {
          cache->normed[b] = std::move(normed);
          cache->inv_std[b] = inv_std;
        }
      }
      if (cache) cache->preact[b] = z;
      if (b + 1 < blocks_.size()) {
        const double leak = config_.leak;
        act = z.unaryExpr([leak](double v) { return v > 0.0 ? v : leak * v; });
      } else {
        act = z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
      }
    }
    if (seeded_running) running_initialized_ = true;
    if (cache) cache->output = act;
    std::vector<double> out(act.data(), act.data() + act.size());
    return RealGrid(input.shape(), std::move(out));
  }

  /// Reverse pass for a train-mode forward(). Returns dLoss/dtheta given dLoss/doutput.
  std::vector<double> backward(const Cache& cache, std::span<const double> d_output) const {
    const std::size_t w = cache.width, h = cache.height;
    const auto pixels = static_cast<Eigen::Index>(w * h);
    if (d_output.size() != w * h) throw Error(ErrorKind::dimension, "output gradient size mismatch");
    std::vector<double> grad(theta_.size(), 0.0);
    Matrix upstream = Eigen::Map<const Matrix>(d_output.data(), pixels, 1);

    for (std::size_t bi = blocks_.size(); bi-- > 0;) {
      const auto& blk = blocks_[bi];
      const Matrix& pre = cache.preact[bi];
      Matrix dz;
      if (bi + 1 == blocks_.size()) {
        const Matrix& y = cache.output;
        dz = upstream.array() * y.array() * (1.0 - y.array());
      } else {
        const double leak = config_.leak;
        dz = upstream.array() * pre.unaryExpr([leak](double v) { return v > 0.0 ? 1.0 : leak; }).array();
      }
      if (blk.batch_norm) {
        const Matrix& xhat = cache.normed[bi];
        const Vector& inv_std = cache.inv_std[bi];
        Eigen::Map<Vector> d_gamma(grad.data() + blk.gamma_offset, static_cast<Eigen::Index>(blk.out));
        Eigen::Map<Vector> d_beta(grad.data() + blk.beta_offset, static_cast<Eigen::Index>(blk.out));
        d_gamma = (dz.array() * xhat.array()).colwise().sum().transpose();
        d_beta = dz.colwise().sum().transpose();
        const Matrix dxhat = dz * gamma(blk).asDiagonal();
        const Eigen::RowVectorXd mean_dxhat = dxhat.colwise().mean();
        const Eigen::RowVectorXd mean_dxhat_xhat = (dxhat.array() * xhat.array()).colwise().mean();
        Matrix centered = dxhat.rowwise() - mean_dxhat;
        centered -= xhat * mean_dxhat_xhat.asDiagonal();
        dz = centered * inv_std.asDiagonal();
      }
      auto cols = workspace(pixels, static_cast<Eigen::Index>(9 * blk.in));
      im2col(cache.inputs[bi], w, h, cols);
      Eigen::Map<Matrix> d_weight(grad.data() + blk.weight_offset, static_cast<Eigen::Index>(9 * blk.in),
                                  static_cast<Eigen::Index>(blk.out));
      d_weight.noalias() = cols.transpose() * dz;
      Eigen::Map<Vector> d_bias(grad.data() + blk.bias_offset, static_cast<Eigen::Index>(blk.out));
      d_bias = dz.colwise().sum().transpose();
      if (bi > 0) {
        cols.noalias() = dz * weight(blk).transpose();
        upstream = col2im(cols, w, h, blk.in);
      }
    }
    return grad;
  }

  /// Replaces the running statistics (checkpoint restore).
  void set_running_statistics(std::vector<Vector> mean, std::vector<Vector> var, bool initialized) {
    if (mean.size() != blocks_.size() || var.size() != blocks_.size())
      throw Error(ErrorKind::dimension, "running statistics block count mismatch");
    running_mean_ = std::move(mean);
    running_var_ = std::move(var);
    running_initialized_ = initialized;
  }

 private:
  Eigen::Map<const Matrix> weight(const Block& blk) const {
    return {theta_.data() + blk.weight_offset, static_cast<Eigen::Index>(9 * blk.in),
            static_cast<Eigen::Index>(blk.out)};
  }
  Eigen::Map<const Vector> bias(const Block& blk) const {
    return {theta_.data() + blk.bias_offset, static_cast<Eigen::Index>(blk.out)};
  }
  Eigen::Map<const Vector> gamma(const Block& blk) const {
    return {theta_.data() + blk.gamma_offset, static_cast<Eigen::Index>(blk.out)};
  }
  Eigen::Map<const Vector> beta(const Block& blk) const {
    return {theta_.data() + blk.beta_offset, static_cast<Eigen::Index>(blk.out)};
  }

  // Per-thread im2col buffer, reused across calls so large blocks are not
  // remapped from the OS on every layer.
  static Eigen::Map<Matrix> workspace(Eigen::Index rows, Eigen::Index cols) {
    thread_local std::vector<double> buffer;
    const auto need = static_cast<std::size_t>(rows * cols);
    if (buffer.size() < need) buffer.resize(need);
    return {buffer.data(), rows, cols};
  }

  // Column (c*9 + k) holds channel c shifted by tap k = (dy+1)*3 + (dx+1), zero outside.
  static void im2col(const Matrix& act, std::size_t w, std::size_t h, Eigen::Map<Matrix>& cols) {
    const auto channels = act.cols();
    for (Eigen::Index c = 0; c < channels; ++c) {
      const double* src = act.col(c).data();
      for (int k = 0; k < 9; ++k) {
        const long dy = k / 3 - 1, dx = k % 3 - 1;
        double* dst = cols.col(c * 9 + k).data();
        const std::size_t x0 = dx < 0 ? 1 : 0, x1 = dx > 0 ? w - 1 : w;
        for (std::size_t y = 0; y < h; ++y) {
          double* row = dst + y * w;
          const long sy = static_cast<long>(y) + dy;
          if (sy < 0 || sy >= static_cast<long>(h)) {
            std::fill(row, row + w, 0.0);
            continue;
          }
          if (x0 > 0) row[0] = 0.0;
          if (x1 < w) row[w - 1] = 0.0;
          const double* from = src + sy * static_cast<long>(w) + dx;
          std::copy(from + x0, from + x1, row + x0);
        }
      }
    }
  }

  static Matrix col2im(const Eigen::Map<Matrix>& cols, std::size_t w, std::size_t h, std::size_t channels) {
    Matrix act = Matrix::Zero(cols.rows(), static_cast<Eigen::Index>(channels));
    for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(channels); ++c) {
      double* dst = act.col(c).data();
      for (int k = 0; k < 9; ++k) {
        const long dy = k / 3 - 1, dx = k % 3 - 1;
        const double* src = cols.col(c * 9 + k).data();
        const std::size_t x0 = dx < 0 ? 1 : 0, x1 = dx > 0 ? w - 1 : w;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + dy;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          double* to = dst + sy * static_cast<long>(w) + dx;
          const double* from = src + y * w;
          for (std::size_t x = x0; x < x1; ++x) to[x] += from[x];
        }
      }
    }
    return act;
  }

  NetworkConfig config_;
  std::uint64_t seed_ = 0;
  std::vector<Block> blocks_;
  std::vector<double> theta_;
  std::vector<Vector> running_mean_, running_var_;
  bool running_initialized_ = false;
};

struct AdamConfig {
  double learning_rate = 0.05;
  double decay_rate = 0.9;
  long decay_steps = 100;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with a staircase exponential learning-rate schedule.
class AdamState {
 public:
  explicit AdamState(std::size_t parameter_count, AdamConfig config = {})
      : config_(config), first_(parameter_count, 0.0), second_(parameter_count, 0.0) {}

  const AdamConfig& config() const noexcept { return config_; }
  long step() const noexcept { return step_; }
  std::span<const double> first_moment() const noexcept { return first_; }
  std::span<const double> second_moment() const noexcept { return second_; }

  /// Rate used by the update that follows `t` completed steps.
  double learning_rate(long t) const {
    return config_.learning_rate * std::pow(config_.decay_rate, static_cast<double>(t / config_.decay_steps));
  }

  void update(std::span<double> theta, std::span<const double> grad) {
    if (theta.size() != first_.size() || grad.size() != first_.size())
      throw Error(ErrorKind::dimension, "Adam parameter count mismatch");
    const double lr = learning_rate(step_);
    ++step_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < theta.size(); ++i) {
      first_[i] = config_.beta1 * first_[i] + (1.0 - config_.beta1) * grad[i];
      second_[i] = config_.beta2 * second_[i] + (1.0 - config_.beta2) * grad[i] * grad[i];
      theta[i] -= lr * (first_[i] / c1) / (std::sqrt(second_[i] / c2) + config_.epsilon);
    }
  }

 private:
  AdamConfig config_;
  long step_ = 0;
  std::vector<double> first_, second_;
};

// Checkpoint: "SPIN", u16 version, u32 block count, per block (u32 in, u32 out,
// u8 batch_norm), u8 running-stats flag, u64 parameter count, parameters, then
// running mean and variance of every BN block. Little-endian float64 throughout.

constexpr std::uint16_t kCheckpointVersion = 1;

inline std::string encode_checkpoint(const GeneratorNet& net) {
  std::string out = "SPIN";
  detail::put_le(out, kCheckpointVersion, 2);
  detail::put_le(out, net.blocks().size(), 4);
  for (const auto& blk : net.blocks()) {
    detail::put_le(out, blk.in, 4);
    detail::put_le(out, blk.out, 4);
    detail::put_le(out, blk.batch_norm ? 1 : 0, 1);
  }
  detail::put_le(out, net.running_initialized() ? 1 : 0, 1);
  detail::put_le(out, net.parameter_count(), 8);
  const auto put_double = [&](double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    detail::put_le(out, bits, 8);
  };
  for (double v : net.parameters()) put_double(v);
  for (std::size_t b = 0; b < net.blocks().size(); ++b) {
    if (!net.blocks()[b].batch_norm) continue;
    for (double v : net.running_mean()[b]) put_double(v);
    for (double v : net.running_var()[b]) put_double(v);
  }
  return out;
}

inline GeneratorNet decode_checkpoint(std::span<const unsigned char> bytes, NetworkConfig config = {}) {
  const auto need = [&](std::size_t offset, std::size_t n) {
    if (offset + n > bytes.size())
      throw Error(ErrorKind::format, "checkpoint truncated at byte " + std::to_string(offset));
  };
  need(0, 10);
  if (std::memcmp(bytes.data(), "SPIN", 4) != 0) throw Error(ErrorKind::format, "bad checkpoint magic at byte 0");
  if (detail::get_le(bytes, 4, 2) != kCheckpointVersion)
    throw Error(ErrorKind::format, "unsupported checkpoint version at byte 4");
  const auto nblocks = static_cast<std::size_t>(detail::get_le(bytes, 6, 4));
  std::size_t off = 10;
  std::vector<std::size_t> channels;
  for (std::size_t b = 0; b < nblocks; ++b) {
    need(off, 9);
    const auto in = static_cast<std::size_t>(detail::get_le(bytes, off, 4));
    const auto out = static_cast<std::size_t>(detail::get_le(bytes, off + 4, 4));
    if (b == 0) channels.push_back(in);
    else if (channels.back() != in)
      throw Error(ErrorKind::format, "inconsistent block plan at byte " + std::to_string(off));
    channels.push_back(out);
    off += 9;
  }
  need(off, 9);
  const bool running = bytes[off] != 0;
  const auto count = static_cast<std::size_t>(detail::get_le(bytes, off + 1, 8));
  off += 9;
  config.channels = channels;
  GeneratorNet net(config, 0);
  if (count != net.parameter_count())
    throw Error(ErrorKind::format, "parameter count does not match block plan at byte " + std::to_string(off - 8));
  const auto get_double = [&]() {
    need(off, 8);
    const std::uint64_t bits = detail::get_le(bytes, off, 8);
    off += 8;
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  };
  for (auto& v : net.parameters()) v = get_double();
  auto mean = net.running_mean();
  auto var = net.running_var();
  for (std::size_t b = 0; b < net.blocks().size(); ++b) {
    if (!net.blocks()[b].batch_norm) continue;
    for (auto& v : mean[b]) v = get_double();
    for (auto& v : var[b]) v = get_double();
  }
  if (off != bytes.size()) throw Error(ErrorKind::format, "trailing bytes after offset " + std::to_string(off));
  net.set_running_statistics(std::move(mean), std::move(var), running);
  return net;
}

}  // namespace spi
