#pragma once

#include <stdexcept>
#include <string>

namespace spi {

enum class ErrorKind {
  dimension,      // incompatible grid shapes
  degenerate,     // input carries no usable signal (all-zero image, ...)
  parameter,      // out-of-domain scalar parameter
  range,          // index or count outside its valid range
  invalid_field,  // NaN / Inf in a field or image
  consistency,    // measurement and pattern set disagree
  insufficient,   // not enough data for the estimator
  numerical,      // divergence or non-finite intermediate
  format,         // malformed file contents
  io,             // file could not be opened or written
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::parameter: return "parameter";
    case ErrorKind::range: return "range";
    case ErrorKind::invalid_field: return "invalid-field";
    case ErrorKind::consistency: return "consistency";
    case ErrorKind::insufficient: return "insufficient-data";
    case ErrorKind::numerical: return "numerical";
    case ErrorKind::format: return "format";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised when an optimisation produces a non-finite value. `stage` names the
/// pipeline step that produced it and `iteration` the optimiser step (or -1).
class NumericalError : public Error {
 public:
  NumericalError(std::string stage, long iteration, const std::string& what)
      : Error(ErrorKind::numerical, what + " [stage=" + stage +
                                        (iteration >= 0 ? ", iteration=" + std::to_string(iteration) : "") + "]"),
        stage_(std::move(stage)),
        iteration_(iteration) {}

  const std::string& stage() const noexcept { return stage_; }
  long iteration() const noexcept { return iteration_; }

 private:
  std::string stage_;
  long iteration_;
};

}  // namespace spi
