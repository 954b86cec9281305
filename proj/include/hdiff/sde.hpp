#pragma once

// Ground-truth generator: Langevin dynamics with a periodic Fourier drift,
// observed through cos(2*pi*x/L) plus Gaussian noise, integrated by Euler.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <variant>
#include <vector>

#include "hdiff/config.hpp"

namespace hdiff {

/// The continuous system. Drift F(x) = theta[0] + sum_n theta[n] sin(2 n pi x / L).
struct ModelSpec {
  std::vector<double> theta{-0.1, 0.1};
  double diffusion = 0.8;       ///< D, length^2 / time
  double period = 32.0;         ///< L
  double obs_variance = 0.0;    ///< sigma
  double dt = 1.0;

  std::size_t n_theta() const { return theta.empty() ? 0 : theta.size() - 1; }

  /// Throws ConfigError when an invariant is violated.
  void validate() const;

  /// Keys n_theta, theta0..theta{n_theta}, D, L, sigma, dt. Missing keys keep
  /// their defaults.
  static ModelSpec from_key_values(const KeyValues& kv, ModelSpec defaults);
  static ModelSpec from_key_values(const KeyValues& kv) { return from_key_values(kv, ModelSpec{}); }
  void write(std::ostream& out) const;
};

/// Periodic Fourier drift with an explicit coefficient list; shared with the
/// particle filter, whose particles carry their own coefficients.
double fourier_drift(std::span<const double> theta, double period, double x);

double drift_eval(const ModelSpec& spec, double x);

/// y = cos(2 pi x / L) + sqrt(sigma) * w
double observe(double x, double period, double obs_variance, double w);

struct FixedStart {
  double x = 0.0;
};
struct GaussianStart {
  double mean = 0.0;
  double variance = 1.0;
};
using StartDistribution = std::variant<FixedStart, GaussianStart>;

struct Trajectory {
  std::vector<double> times;
  std::vector<double> states;
  std::vector<double> observations;

  std::size_t size() const { return times.size(); }
};

/// Euler-Maruyama: x_t = x_{t-1} + F(x_{t-1}) dt + sqrt(D dt) v_t.
/// Returns steps + 1 points including the start. Bit-identical for equal seeds.
Trajectory simulate(const ModelSpec& spec, const StartDistribution& start, std::size_t steps,
                    std::uint64_t seed);

void write_trajectory_csv(std::ostream& out, const Trajectory& traj);
void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj);
Trajectory read_trajectory_csv(std::istream& in);
Trajectory read_trajectory_csv(const std::filesystem::path& path);

}  // namespace hdiff
