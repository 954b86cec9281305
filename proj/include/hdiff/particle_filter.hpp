#pragma once

// SIR particle filter over the augmented state z = (x, theta_0..theta_K, sqrt(D)).

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "hdiff/config.hpp"
#include "hdiff/errors.hpp"
#include "hdiff/particle_cloud.hpp"
#include "hdiff/pf_kernels.hpp"
#include "hdiff/rng.hpp"
#include "hdiff/sde.hpp"

namespace hdiff {

struct AugmentedState {
  double x = 0.0;
  std::vector<double> params;  ///< theta_0..theta_K, then sqrt(D)

  double sqrt_diffusion() const { return params.back(); }
};

enum class ResamplingScheme { multinomial, systematic };

ResamplingScheme parse_resampling(const std::string& name);
std::string to_string(ResamplingScheme s);

struct PfConfig {
  std::size_t n_particles = 1000;
  double jitter_eps = 0.01;
  double obs_bandwidth = 0.05;  ///< likelihood variance, decoupled from the data sigma
  std::vector<double> init_mean{1.0, 0.0, 0.0, 0.0};
  std::vector<double> init_cov_diag{25.0, 0.01, 0.01, 0.01};
  ResamplingScheme resampling = ResamplingScheme::multinomial;
  std::uint64_t seed = 1;
  std::vector<std::size_t> snapshot_times{10, 100, 1000};
  std::size_t snapshot_bins = 64;
  Execution execution = Execution::parallel;

  void validate() const;
  static PfConfig from_key_values(const KeyValues& kv, PfConfig defaults);
  static PfConfig from_key_values(const KeyValues& kv) { return from_key_values(kv, PfConfig{}); }
};

/// Augmented-state dynamics used by the filter: each particle advances x with
/// its own drift coefficients and noise scale, then jitters every parameter.
struct PeriodicModel {
  double period = 32.0;
  double dt = 1.0;
  std::size_t n_theta = 1;
  double jitter_eps = 0.01;
  double obs_bandwidth = 0.05;

  static PeriodicModel from(const ModelSpec& spec, const PfConfig& config) {
    return {spec.period, spec.dt, spec.n_theta(), config.jitter_eps, config.obs_bandwidth};
  }

  std::size_t dim() const { return n_theta + 3; }

  void advance(std::span<double> z, Stream& rng) const {
    const double sqrt_dt = std::sqrt(dt);
    auto params = z.subspan(1);
    const double drift = fourier_drift(params.first(n_theta + 1), period, z[0]);
    z[0] += drift * dt + params[n_theta + 1] * sqrt_dt * rng.normal();
    for (auto& p : params) p += jitter_eps * sqrt_dt * rng.normal();
  }

  double likelihood(std::span<const double> z, double y) const {
    const double r = y - std::cos(2.0 * std::numbers::pi * z[0] / period);
    return std::exp(-r * r / (2.0 * obs_bandwidth)) / std::sqrt(2.0 * std::numbers::pi * obs_bandwidth);
  }
};

/// Scalar linear-Gaussian model: x_t = a x_{t-1} + N(0, q), y_t = h x_t + N(0, r).
struct LinearGaussianModel {
  double a = 1.0;
  double h = 1.0;
  double q = 1.0;
  double r = 1.0;

  void advance(std::span<double> z, Stream& rng) const { z[0] = a * z[0] + std::sqrt(q) * rng.normal(); }

  double likelihood(std::span<const double> z, double y) const {
    const double res = y - h * z[0];
    return std::exp(-res * res / (2.0 * r)) / std::sqrt(2.0 * std::numbers::pi * r);
  }
};

static_assert(StateSpaceModel<PeriodicModel>);
static_assert(StateSpaceModel<LinearGaussianModel>);

/// Draws N_p particles from the diagonal Gaussian (init_mean, init_cov_diag),
/// uniform weights.
ParticleCloud initialize(const PfConfig& config);

/// Advances every particle one step. Weights are untouched.
ParticleCloud propagate(ParticleCloud cloud, const ModelSpec& spec, const PfConfig& config,
                        std::uint64_t step);

/// Replaces the weights with normalized observation likelihoods.
ParticleCloud weight(ParticleCloud cloud, double y, double period, const PfConfig& config);

/// Normalizes in place. Throws WeightCollapse when the sum is zero or not finite.
void normalize_weights(std::span<double> weights);

/// m_t = m_{t-1} * p(y_t | particle), normalized.
std::vector<double> sis_update(std::span<const double> prev_weights, std::span<const double> likelihoods);

/// Ancestor indices drawn according to `weights` (must sum to 1 within 1e-9).
std::vector<std::size_t> resample_indices(std::span<const double> weights, ResamplingScheme scheme,
                                          Stream& rng);

ParticleCloud resample(const ParticleCloud& cloud, ResamplingScheme scheme, Stream& rng);

/// Weight-normalized mean of every coordinate.
std::vector<double> weighted_mean(const ParticleCloud& cloud);

/// MMSE estimate of the augmented state.
AugmentedState estimate(const ParticleCloud& cloud);

/// 1 / sum(w^2) of the normalized weights.
double effective_sample_size(std::span<const double> weights);

struct DensitySnapshot {
  std::size_t t = 0;
  std::vector<double> bin_centers;
  std::vector<double> mass;
};

/// Weighted histogram of coordinate 0 over the particles' range.
DensitySnapshot density_snapshot(const ParticleCloud& cloud, std::size_t n_bins, std::size_t t);

struct SirSettings {
  std::size_t n_particles = 1000;
  std::vector<double> init_mean;
  std::vector<double> init_cov_diag;
  ResamplingScheme resampling = ResamplingScheme::multinomial;
  std::uint64_t seed = 1;
  std::vector<std::size_t> snapshot_times;
  std::size_t snapshot_bins = 64;
  Execution execution = Execution::parallel;
};

/// Per-step output of the generic filter loop, taken after weighting and
/// before resampling.
struct SirTrace {
  std::vector<std::vector<double>> means;
  std::vector<std::vector<double>> second_moments;
  std::vector<double> ess;
  std::vector<DensitySnapshot> snapshots;
};

ParticleCloud initialize(const SirSettings& settings);

/// Bootstrap filter: for t = 1..T propagate, weight with observations[t-1],
/// record, resample. Throws WeightCollapse carrying t.
template <StateSpaceModel M>
SirTrace run_sir(const M& model, std::span<const double> observations, const SirSettings& settings) {
  if (observations.empty()) throw ConfigError("filter: observation sequence is empty");

  ParticleCloud cloud = initialize(settings);
  const std::size_t dim = cloud.dim();
  std::vector<double> lik(cloud.size());

  SirTrace trace;
  trace.means.reserve(observations.size());
  trace.second_moments.reserve(observations.size());
  trace.ess.reserve(observations.size());

  for (std::size_t k = 0; k < observations.size(); ++k) {
    const std::size_t t = k + 1;
    kernels::propagate(cloud, model, settings.seed, t, settings.execution);
    kernels::likelihoods(cloud, model, observations[k], lik, settings.execution);
    auto w = cloud.weights();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = lik[i];
    try {
      normalize_weights(w);
    } catch (const WeightCollapse&) {
      throw WeightCollapse(t);
    }

    std::vector<double> mean(dim, 0.0), second(dim, 0.0);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const auto z = cloud.particle(i);
      for (std::size_t d = 0; d < dim; ++d) {
        mean[d] += w[i] * z[d];
        second[d] += w[i] * z[d] * z[d];
      }
    }
    trace.means.push_back(std::move(mean));
    trace.second_moments.push_back(std::move(second));
    trace.ess.push_back(effective_sample_size(w));
    for (std::size_t snap : settings.snapshot_times) {
      if (snap == t) trace.snapshots.push_back(density_snapshot(cloud, settings.snapshot_bins, t));
    }

    Stream rng(settings.seed, StreamKind::pf_resample, t);
    cloud = resample(cloud, settings.resampling, rng);
  }
  return trace;
}

struct FilterResult {
  std::vector<AugmentedState> estimates;
  /// Posterior mean of D = sqrt(D)^2, sign-invariant unlike the square of the
  /// mean of sqrt(D).
  std::vector<double> diffusion;
  std::vector<double> ess;
  std::vector<DensitySnapshot> snapshots;
};

/// Full SIR run on the periodic model; observations[k] is the observation at
/// t = k + 1 (the filter propagates before each observation).
FilterResult run_filter(std::span<const double> observations, const ModelSpec& spec, const PfConfig& config);

/// Columns t, x_hat, theta0_hat..thetaK_hat, D_hat, ess; row k is at time (k + 1) * dt.
void write_estimates_csv(std::ostream& out, const FilterResult& result, double dt);
void write_density_csv(std::ostream& out, const FilterResult& result, double dt);

}  // namespace hdiff
