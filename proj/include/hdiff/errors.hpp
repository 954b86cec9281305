#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hdiff {

/// Bad user input: malformed config, unknown key, invalid model parameters.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Base for failures of the numerics themselves (as opposed to bad input).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every particle is inconsistent with the observation; the unnormalized
/// weight sum underflowed to zero.
class WeightCollapse : public NumericalError {
 public:
  static constexpr std::size_t unknown_time = static_cast<std::size_t>(-1);

  explicit WeightCollapse(std::size_t time = unknown_time)
      : NumericalError(time == unknown_time
                           ? std::string("particle weights collapsed to zero")
                           : "particle weights collapsed to zero at t=" + std::to_string(time)),
        time_(time) {}

  std::size_t time() const noexcept { return time_; }

 private:
  std::size_t time_;
};

/// The observed symbol sequence has zero probability under the model.
class ZeroProbabilitySequence : public NumericalError {
 public:
  explicit ZeroProbabilitySequence(std::size_t time)
      : NumericalError("symbol sequence has zero probability at t=" + std::to_string(time)),
        time_(time) {}

  std::size_t time() const noexcept { return time_; }

 private:
  std::size_t time_;
};

/// Transition probabilities fell outside the feasible region.
class InfeasibleParameters : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// The M-step Newton iteration failed (non-convergence or singular Jacobian).
class NewtonFailure : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hdiff
