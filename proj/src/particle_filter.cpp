#include "hdiff/particle_filter.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

namespace hdiff {

ResamplingScheme parse_resampling(const std::string& name) {
  if (name == "multinomial") return ResamplingScheme::multinomial;
  if (name == "systematic") return ResamplingScheme::systematic;
  throw ConfigError("unknown resampling scheme '" + name + "'");
}

std::string to_string(ResamplingScheme s) {
  return s == ResamplingScheme::systematic ? "systematic" : "multinomial";
}

void PfConfig::validate() const {
  if (n_particles == 0) throw ConfigError("pf: n_particles must be at least 1");
  if (!(jitter_eps >= 0.0)) throw ConfigError("pf: jitter_eps must be nonnegative");
  if (!(obs_bandwidth > 0.0)) throw ConfigError("pf: obs_bandwidth must be positive");
  if (init_mean.empty()) throw ConfigError("pf: init_mean is empty");
  if (init_mean.size() != init_cov_diag.size()) {
    throw ConfigError("pf: init_mean and init_cov_diag differ in length");
  }
  for (double v : init_cov_diag) {
    if (!(v >= 0.0)) throw ConfigError("pf: init_cov_diag entries must be nonnegative");
  }
  if (snapshot_bins == 0) throw ConfigError("pf: snapshot_bins must be at least 1");
}

PfConfig PfConfig::from_key_values(const KeyValues& kv, PfConfig defaults) {
  PfConfig c = std::move(defaults);
  c.n_particles = kv.get_uint("n_particles", c.n_particles);
  c.jitter_eps = kv.get_double("jitter_eps", c.jitter_eps);
  c.obs_bandwidth = kv.get_double("obs_bandwidth", c.obs_bandwidth);
  c.init_mean = kv.get_doubles("init_mean", c.init_mean);
  c.init_cov_diag = kv.get_doubles("init_cov_diag", c.init_cov_diag);
  c.resampling = parse_resampling(kv.get_string("resampling", to_string(c.resampling)));
  c.seed = kv.get_uint("seed", c.seed);
  std::vector<std::uint64_t> snaps(c.snapshot_times.begin(), c.snapshot_times.end());
  snaps = kv.get_uints("snapshot_times", snaps);
  c.snapshot_times.assign(snaps.begin(), snaps.end());
  c.snapshot_bins = kv.get_uint("snapshot_bins", c.snapshot_bins);
  c.validate();
  return c;
}

namespace {

SirSettings settings_from(const PfConfig& config) {
  SirSettings s;
  s.n_particles = config.n_particles;
  s.init_mean = config.init_mean;
  s.init_cov_diag = config.init_cov_diag;
  s.resampling = config.resampling;
  s.seed = config.seed;
  s.snapshot_times = config.snapshot_times;
  s.snapshot_bins = config.snapshot_bins;
  s.execution = config.execution;
  return s;
}

void check_dimensions(const ModelSpec& spec, const PfConfig& config) {
  if (config.init_mean.size() != spec.n_theta() + 3) {
    throw ConfigError("pf: init_mean needs " + std::to_string(spec.n_theta() + 3) +
                      " entries (x, theta0..thetaK, sqrt(D))");
  }
}

}  // namespace

ParticleCloud initialize(const SirSettings& settings) {
  if (settings.n_particles == 0) throw ConfigError("pf: n_particles must be at least 1");
  if (settings.init_mean.size() != settings.init_cov_diag.size() || settings.init_mean.empty()) {
    throw ConfigError("pf: init_mean and init_cov_diag must be nonempty and of equal length");
  }
  const std::size_t dim = settings.init_mean.size();
  std::vector<double> sd(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    if (!(settings.init_cov_diag[d] >= 0.0)) throw ConfigError("pf: negative initial variance");
    sd[d] = std::sqrt(settings.init_cov_diag[d]);
  }
  ParticleCloud cloud(settings.n_particles, dim);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    Stream rng(settings.seed, StreamKind::pf_init, i);
    auto z = cloud.particle(i);
    for (std::size_t d = 0; d < dim; ++d) z[d] = settings.init_mean[d] + sd[d] * rng.normal();
  }
  return cloud;
}

ParticleCloud initialize(const PfConfig& config) {
  config.validate();
  return initialize(settings_from(config));
}

ParticleCloud propagate(ParticleCloud cloud, const ModelSpec& spec, const PfConfig& config,
                        std::uint64_t step) {
  const auto model = PeriodicModel::from(spec, config);
  if (cloud.dim() != model.dim()) throw ConfigError("pf: cloud dimension does not match the model");
  kernels::propagate(cloud, model, config.seed, step, config.execution);
  return cloud;
}

void normalize_weights(std::span<double> weights) {
  double sum = 0.0;
  for (double w : weights) sum += w;
  if (!(sum > 0.0) || !std::isfinite(sum)) throw WeightCollapse();
  for (auto& w : weights) w /= sum;
}

ParticleCloud weight(ParticleCloud cloud, double y, double period, const PfConfig& config) {
  if (!(config.obs_bandwidth > 0.0)) throw ConfigError("pf: obs_bandwidth must be positive");
  const PeriodicModel model{.period = period, .obs_bandwidth = config.obs_bandwidth};
  auto w = cloud.weights();
  kernels::likelihoods(cloud, model, y, w, config.execution);
  normalize_weights(w);
  return cloud;
}

std::vector<double> sis_update(std::span<const double> prev_weights, std::span<const double> likelihoods) {
  if (prev_weights.size() != likelihoods.size()) {
    throw std::invalid_argument("sis_update: weight and likelihood lengths differ");
  }
  std::vector<double> w(prev_weights.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = prev_weights[i] * likelihoods[i];
  normalize_weights(w);
  return w;
}

std::vector<std::size_t> resample_indices(std::span<const double> weights, ResamplingScheme scheme,
                                          Stream& rng) {
  const std::size_t n = weights.size();
  if (n == 0) throw std::invalid_argument("resample: empty weight vector");
  std::vector<double> cumulative(n);
  std::partial_sum(weights.begin(), weights.end(), cumulative.begin());
  const double total = cumulative.back();
  if (!(std::abs(total - 1.0) <= 1e-9)) {
    throw std::invalid_argument("resample: weights are not normalized (sum = " + format_double(total) + ")");
  }

  std::vector<std::size_t> ancestors(n);
  auto locate = [&](double u) {
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u * total);
    return std::min(static_cast<std::size_t>(it - cumulative.begin()), n - 1);
  };
  if (scheme == ResamplingScheme::multinomial) {
    for (auto& a : ancestors) a = locate(rng.uniform());
  } else {
    const double u0 = rng.uniform();
    for (std::size_t i = 0; i < n; ++i) {
      ancestors[i] = locate((u0 + static_cast<double>(i)) / static_cast<double>(n));
    }
  }
  return ancestors;
}

ParticleCloud resample(const ParticleCloud& cloud, ResamplingScheme scheme, Stream& rng) {
  const auto ancestors = resample_indices(cloud.weights(), scheme, rng);
  ParticleCloud out(cloud.size(), cloud.dim());
  for (std::size_t i = 0; i < ancestors.size(); ++i) {
    const auto src = cloud.particle(ancestors[i]);
    std::copy(src.begin(), src.end(), out.particle(i).begin());
  }
  return out;
}

std::vector<double> weighted_mean(const ParticleCloud& cloud) {
  const auto w = cloud.weights();
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(total > 0.0)) throw WeightCollapse();
  std::vector<double> mean(cloud.dim(), 0.0);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto z = cloud.particle(i);
    for (std::size_t d = 0; d < cloud.dim(); ++d) mean[d] += w[i] * z[d];
  }
  for (auto& m : mean) m /= total;
  return mean;
}

AugmentedState estimate(const ParticleCloud& cloud) {
  const auto mean = weighted_mean(cloud);
  AugmentedState s;
  s.x = mean.at(0);
  s.params.assign(mean.begin() + 1, mean.end());
  return s;
}

double effective_sample_size(std::span<const double> weights) {
  double total = 0.0, sq = 0.0;
  for (double w : weights) {
    total += w;
    sq += w * w;
  }
  return sq > 0.0 ? total * total / sq : 0.0;
}

DensitySnapshot density_snapshot(const ParticleCloud& cloud, std::size_t n_bins, std::size_t t) {
  DensitySnapshot snap;
  snap.t = t;
  if (cloud.size() == 0 || n_bins == 0) return snap;

  double lo = cloud.particle(0)[0], hi = lo;
  for (std::size_t i = 1; i < cloud.size(); ++i) {
    lo = std::min(lo, cloud.particle(i)[0]);
    hi = std::max(hi, cloud.particle(i)[0]);
  }
  const auto w = cloud.weights();
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(hi > lo)) {
    snap.bin_centers = {lo};
    snap.mass = {1.0};
    return snap;
  }
  const double width = (hi - lo) / static_cast<double>(n_bins);
  snap.bin_centers.resize(n_bins);
  snap.mass.assign(n_bins, 0.0);
  for (std::size_t b = 0; b < n_bins; ++b) snap.bin_centers[b] = lo + (static_cast<double>(b) + 0.5) * width;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    auto b = static_cast<std::size_t>((cloud.particle(i)[0] - lo) / width);
    snap.mass[std::min(b, n_bins - 1)] += w[i] / total;
  }
  return snap;
}

FilterResult run_filter(std::span<const double> observations, const ModelSpec& spec, const PfConfig& config) {
  spec.validate();
  config.validate();
  check_dimensions(spec, config);

  const auto model = PeriodicModel::from(spec, config);
  const SirTrace trace = run_sir(model, observations, settings_from(config));

  FilterResult result;
  const std::size_t last = model.dim() - 1;
  for (std::size_t k = 0; k < trace.means.size(); ++k) {
    AugmentedState s;
    s.x = trace.means[k][0];
    s.params.assign(trace.means[k].begin() + 1, trace.means[k].end());
    result.estimates.push_back(std::move(s));
    result.diffusion.push_back(trace.second_moments[k][last]);
  }
  result.ess = trace.ess;
  result.snapshots = trace.snapshots;
  return result;
}

void write_estimates_csv(std::ostream& out, const FilterResult& result, double dt) {
  const std::size_t n_coeffs = result.estimates.empty() ? 0 : result.estimates.front().params.size() - 1;
  out << "t,x_hat";
  for (std::size_t n = 0; n < n_coeffs; ++n) out << ",theta" << n << "_hat";
  out << ",D_hat,ess\n";
  for (std::size_t k = 0; k < result.estimates.size(); ++k) {
    const auto& e = result.estimates[k];
    out << format_double(static_cast<double>(k + 1) * dt) << ',' << format_double(e.x);
    for (std::size_t n = 0; n < n_coeffs; ++n) out << ',' << format_double(e.params[n]);
    out << ',' << format_double(result.diffusion[k]) << ',' << format_double(result.ess[k]) << '\n';
  }
}

void write_density_csv(std::ostream& out, const FilterResult& result, double dt) {
  out << "t,bin_center,mass\n";
  for (const auto& snap : result.snapshots) {
    for (std::size_t b = 0; b < snap.mass.size(); ++b) {
      out << format_double(static_cast<double>(snap.t) * dt) << ',' << format_double(snap.bin_centers[b]) << ','
          << format_double(snap.mass[b]) << '\n';
    }
  }
}

}  // namespace hdiff
