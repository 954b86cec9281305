#include "hdiff/experiment.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "hdiff/errors.hpp"
#include "hdiff/rng.hpp"

namespace hdiff {

namespace {

template <class T>
std::string join(const std::vector<T>& v) {
  std::ostringstream ss;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) ss << ',';
    if constexpr (std::is_floating_point_v<T>) {
      ss << format_double(v[i]);
    } else {
      ss << v[i];
    }
  }
  return ss.str();
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
}

std::vector<double> drop_first_observation(const Trajectory& traj) {
  if (traj.size() < 2) throw ConfigError("trajectory needs at least two points");
  return {traj.observations.begin() + 1, traj.observations.end()};
}

}  // namespace

FourierParams BwConfig::initial_params() const {
  FourierParams p = FourierParams::homogeneous(n_states, n_harmonics, init_up, init_down);
  if (!init_plus.empty()) p.plus = init_plus;
  if (!init_minus.empty()) p.minus = init_minus;
  p.validate_shape();
  return p;
}

ExperimentConfig ExperimentConfig::from_key_values(const KeyValues& kv) {
  ExperimentConfig c;
  c.model = ModelSpec::from_key_values(kv);
  if (kv.contains("x0")) {
    c.start = FixedStart{kv.get_double("x0", 0.0)};
  } else {
    c.start = GaussianStart{kv.get_double("x0_mean", 0.0), kv.get_double("x0_var", 1.0)};
  }

  c.steps = kv.get_uint("T", c.steps);
  c.seed = kv.get_uint("seed", c.seed);
  c.n_runs = kv.get_uint("n_runs", c.n_runs);
  std::vector<std::uint64_t> grid(c.np_grid.begin(), c.np_grid.end());
  grid = kv.get_uints("np_grid", grid);
  c.np_grid.assign(grid.begin(), grid.end());
  c.divergence_threshold = kv.get_double("divergence_threshold", c.divergence_threshold);

  PfConfig pf_defaults;
  const std::size_t dim = c.model.n_theta() + 3;
  if (pf_defaults.init_mean.size() != dim) {
    pf_defaults.init_mean.assign(dim, 0.0);
    pf_defaults.init_mean[0] = 1.0;
    pf_defaults.init_cov_diag.assign(dim, 0.01);
    pf_defaults.init_cov_diag[0] = 25.0;
  }
  pf_defaults.seed = c.seed;
  c.pf = PfConfig::from_key_values(kv, pf_defaults);

  auto& bw = c.bw;
  bw.n_states = kv.get_uint("n_states", bw.n_states);
  bw.n_symbols = kv.get_uint("n_symbols", bw.n_symbols);
  bw.q_lo = kv.get_double("q_lo", bw.q_lo);
  bw.q_hi = kv.get_double("q_hi", bw.q_hi);
  bw.n_harmonics = kv.get_uint("n_harmonics", bw.n_harmonics);
  bw.init_plus = kv.get_doubles("init_plus", bw.init_plus);
  bw.init_minus = kv.get_doubles("init_minus", bw.init_minus);
  bw.init_up = kv.get_double("init_up", bw.init_up);
  bw.init_down = kv.get_double("init_down", bw.init_down);
  bw.emission_sigma = kv.get_double("emission_sigma", bw.emission_sigma);
  bw.fit.tol_ll = kv.get_double("tol_ll", bw.fit.tol_ll);
  bw.fit.max_outer = kv.get_uint("max_outer", bw.fit.max_outer);
  bw.fit.mstep.tol = kv.get_double("newton_tol", bw.fit.mstep.tol);
  bw.fit.mstep.max_iter = kv.get_uint("newton_max_iter", bw.fit.mstep.max_iter);

  if (const auto unknown = kv.unread_keys(); !unknown.empty()) {
    throw ConfigError("unknown config key '" + unknown.front() + "'");
  }
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  model.validate();
  pf.validate();
  if (pf.init_mean.size() != model.n_theta() + 3) {
    throw ConfigError("pf: init_mean needs n_theta + 3 entries");
  }
  if (steps == 0) throw ConfigError("T must be at least 1");
  if (n_runs == 0) throw ConfigError("n_runs must be at least 1");
  if (np_grid.empty()) throw ConfigError("np_grid is empty");
  for (auto np : np_grid) {
    if (np == 0) throw ConfigError("np_grid entries must be positive");
  }
  if (!(divergence_threshold >= 0.0)) throw ConfigError("divergence_threshold must be nonnegative");
  bw.quantizer().validate();
  (void)bw.initial_params();
  if (!(bw.emission_sigma >= 0.0)) throw ConfigError("emission_sigma must be nonnegative");
  if (!(bw.fit.tol_ll > 0.0)) throw ConfigError("tol_ll must be positive");
}

void ExperimentConfig::write(std::ostream& out) const {
  model.write(out);
  if (const auto* fixed = std::get_if<FixedStart>(&start)) {
    out << "x0=" << format_double(fixed->x) << '\n';
  } else {
    const auto& g = std::get<GaussianStart>(start);
    out << "x0_mean=" << format_double(g.mean) << '\n';
    out << "x0_var=" << format_double(g.variance) << '\n';
  }
  out << "T=" << steps << '\n';
  out << "seed=" << seed << '\n';
  out << "n_runs=" << n_runs << '\n';
  out << "np_grid=" << join(np_grid) << '\n';
  out << "divergence_threshold=" << format_double(divergence_threshold) << '\n';
  out << "n_particles=" << pf.n_particles << '\n';
  out << "jitter_eps=" << format_double(pf.jitter_eps) << '\n';
  out << "obs_bandwidth=" << format_double(pf.obs_bandwidth) << '\n';
  out << "init_mean=" << join(pf.init_mean) << '\n';
  out << "init_cov_diag=" << join(pf.init_cov_diag) << '\n';
  out << "resampling=" << to_string(pf.resampling) << '\n';
  out << "snapshot_times=" << join(pf.snapshot_times) << '\n';
  out << "snapshot_bins=" << pf.snapshot_bins << '\n';
  out << "n_states=" << bw.n_states << '\n';
  out << "n_symbols=" << bw.n_symbols << '\n';
  out << "q_lo=" << format_double(bw.q_lo) << '\n';
  out << "q_hi=" << format_double(bw.q_hi) << '\n';
  out << "n_harmonics=" << bw.n_harmonics << '\n';
  if (!bw.init_plus.empty()) out << "init_plus=" << join(bw.init_plus) << '\n';
  if (!bw.init_minus.empty()) out << "init_minus=" << join(bw.init_minus) << '\n';
  out << "init_up=" << format_double(bw.init_up) << '\n';
  out << "init_down=" << format_double(bw.init_down) << '\n';
  out << "emission_sigma=" << format_double(bw.emission_sigma) << '\n';
  out << "tol_ll=" << format_double(bw.fit.tol_ll) << '\n';
  out << "max_outer=" << bw.fit.max_outer << '\n';
  out << "newton_tol=" << format_double(bw.fit.mstep.tol) << '\n';
  out << "newton_max_iter=" << bw.fit.mstep.max_iter << '\n';
}

Trajectory run_simulate(const ExperimentConfig& config) {
  return simulate(config.model, config.start, config.steps, config.seed);
}

FilterResult run_pf(const ExperimentConfig& config, const Trajectory& traj) {
  const auto ys = drop_first_observation(traj);
  return run_filter(ys, config.model, config.pf);
}

MbwResult run_mbw(const ExperimentConfig& config, const Trajectory& traj) {
  const auto& bw = config.bw;
  const auto q = bw.quantizer();
  const auto symbols = quantize(traj.observations, q);
  const double sigma = std::max(config.model.obs_variance, bw.emission_sigma);
  const Eigen::MatrixXd emission = emission_from_observation_model(bw.n_states, q, config.model.period, sigma);

  Eigen::VectorXd initial;
  if (const auto* fixed = std::get_if<FixedStart>(&config.start)) {
    initial = initial_from_gaussian(bw.n_states, config.model.period, fixed->x, 0.0);
  } else {
    const auto& g = std::get<GaussianStart>(config.start);
    initial = initial_from_gaussian(bw.n_states, config.model.period, g.mean, g.variance);
  }

  MbwResult r;
  r.report = fit(symbols, bw.initial_params(), emission, initial, bw.fit);
  r.dynamics = extract_drift_diffusion(r.report.params, config.d0(), config.dx());
  r.reflected = reflect(r.dynamics);
  r.summary = summarize(r.dynamics, config.model.n_theta());
  r.reflected_summary = summarize(r.reflected, config.model.n_theta());
  return r;
}

bool diverged(double estimate, double truth, double threshold) {
  if (!std::isfinite(estimate)) return true;
  if (std::isinf(threshold)) return false;
  return std::abs(estimate - truth) > threshold * std::abs(truth);
}

BenchResult run_bench(const ExperimentConfig& config, const BenchOptions& options) {
  config.validate();
  const std::size_t n_theta = config.model.n_theta();
  const std::size_t n_grid = config.np_grid.size();
  const auto n_runs = static_cast<std::int64_t>(config.n_runs);

  std::vector<std::vector<PfRunRecord>> pf_records(config.n_runs);
  std::vector<MbwRunRecord> mbw_records(config.n_runs);

#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t r = 0; r < n_runs; ++r) {
    const auto run = static_cast<std::size_t>(r);
    ExperimentConfig local = config;
    local.seed = derive_seed(config.seed, run);
    local.pf.execution = Execution::serial;
    const Trajectory traj = run_simulate(local);
    const auto ys = drop_first_observation(traj);

    for (std::size_t g = 0; g < n_grid; ++g) {
      PfRunRecord rec;
      rec.run = run;
      rec.n_particles = config.np_grid[g];
      PfConfig pf = local.pf;
      pf.n_particles = config.np_grid[g];
      pf.seed = derive_seed(config.seed, run, g + 1);
      pf.snapshot_times.clear();
      try {
        const FilterResult fr = run_filter(ys, local.model, pf);
        const auto& last = fr.estimates.back();
        rec.theta.assign(last.params.begin(), last.params.begin() + static_cast<std::ptrdiff_t>(n_theta + 1));
        rec.diffusion = fr.diffusion.back();
      } catch (const NumericalError&) {
        rec.failed = true;
      }
      pf_records[run].push_back(std::move(rec));
    }

    if (options.run_mbw) {
      MbwRunRecord rec;
      rec.run = run;
      try {
        const MbwResult m = run_mbw(local, traj);
        rec.converged = m.report.converged;
        rec.n_iterations = m.report.n_iterations;
        rec.summary = m.summary;
        rec.reflected = m.reflected_summary;
      } catch (const NumericalError&) {
        rec.failed = true;
      }
      mbw_records[run] = std::move(rec);
    }
  }

  BenchResult result;
  auto& table = result.table;
  for (std::size_t k = 0; k <= n_theta; ++k) table.parameters.push_back("theta" + std::to_string(k));
  table.parameters.push_back("D");
  table.np_grid = config.np_grid;
  table.n_runs = config.n_runs;
  table.diverged.assign(table.parameters.size(), std::vector<std::size_t>(n_grid, 0));

  for (std::size_t run = 0; run < config.n_runs; ++run) {
    for (std::size_t g = 0; g < n_grid; ++g) {
      const auto& rec = pf_records[run][g];
      for (std::size_t p = 0; p < table.parameters.size(); ++p) {
        bool div = rec.failed;
        if (!div) {
          div = p <= n_theta ? diverged(rec.theta[p], config.model.theta[p], config.divergence_threshold)
                             : diverged(rec.diffusion, config.model.diffusion, config.divergence_threshold);
        }
        table.diverged[p][g] += div ? 1 : 0;
      }
      result.pf_runs.push_back(rec);
    }
    if (options.run_mbw) result.mbw_runs.push_back(mbw_records[run]);
  }
  return result;
}

void write_divergence_csv(std::ostream& out, const DivergenceTable& table) {
  out << "parameter,n_particles,diverged,runs,percent\n";
  for (std::size_t p = 0; p < table.parameters.size(); ++p) {
    for (std::size_t g = 0; g < table.np_grid.size(); ++g) {
      out << table.parameters[p] << ',' << table.np_grid[g] << ',' << table.diverged[p][g] << ',' << table.n_runs
          << ',' << format_double(table.percent(p, g)) << '\n';
    }
  }
}

void write_pf_runs_csv(std::ostream& out, const BenchResult& result) {
  const std::size_t n_coeffs = result.table.parameters.size() - 1;
  out << "run,n_particles,failed";
  for (std::size_t k = 0; k < n_coeffs; ++k) out << ",theta" << k << "_hat";
  out << ",D_hat\n";
  for (const auto& rec : result.pf_runs) {
    out << rec.run << ',' << rec.n_particles << ',' << (rec.failed ? 1 : 0);
    for (std::size_t k = 0; k < n_coeffs; ++k) out << ',' << (rec.failed ? "nan" : format_double(rec.theta[k]));
    out << ',' << (rec.failed ? "nan" : format_double(rec.diffusion)) << '\n';
  }
}

void write_mbw_runs_csv(std::ostream& out, const BenchResult& result) {
  const std::size_t n_coeffs = result.table.parameters.size() - 1;
  out << "run,failed,converged,n_iterations";
  for (std::size_t k = 0; k < n_coeffs; ++k) out << ",theta" << k << "_hat";
  out << ",D_hat";
  for (std::size_t k = 0; k < n_coeffs; ++k) out << ",theta" << k << "_hat_reflected";
  out << '\n';
  for (const auto& rec : result.mbw_runs) {
    out << rec.run << ',' << (rec.failed ? 1 : 0) << ',' << (rec.converged ? 1 : 0) << ',' << rec.n_iterations;
    for (std::size_t k = 0; k < n_coeffs; ++k) out << ',' << (rec.failed ? "nan" : format_double(rec.summary.theta[k]));
    out << ',' << (rec.failed ? "nan" : format_double(rec.summary.diffusion));
    for (std::size_t k = 0; k < n_coeffs; ++k) {
      out << ',' << (rec.failed ? "nan" : format_double(rec.reflected.theta[k]));
    }
    out << '\n';
  }
}

void cmd_simulate(const ExperimentConfig& config, const std::filesystem::path& out_dir, std::ostream& log) {
  ensure_dir(out_dir);
  const Trajectory traj = run_simulate(config);
  auto out = open_output(out_dir / "trajectory.csv");
  write_trajectory_csv(out, traj);
  log << "# resolved configuration\n";
  config.write(log);
  log << "wrote " << "trajectory.csv" << " (" << traj.size() << " rows)\n";
}

namespace {

Trajectory load_or_simulate(const ExperimentConfig& config, const std::filesystem::path& trajectory) {
  return trajectory.empty() ? run_simulate(config) : read_trajectory_csv(trajectory);
}

}  // namespace

void cmd_pf(const ExperimentConfig& config, const std::filesystem::path& trajectory,
            const std::filesystem::path& out_dir, std::ostream& log) {
  ensure_dir(out_dir);
  const Trajectory traj = load_or_simulate(config, trajectory);
  const FilterResult result = run_pf(config, traj);
  {
    auto out = open_output(out_dir / "pf_estimates.csv");
    write_estimates_csv(out, result, config.model.dt);
  }
  {
    auto out = open_output(out_dir / "pf_density.csv");
    write_density_csv(out, result, config.model.dt);
  }
  const auto& last = result.estimates.back();
  log << "final estimates:";
  for (std::size_t k = 0; k + 1 < last.params.size(); ++k) log << " theta" << k << "=" << format_double(last.params[k]);
  log << " D=" << format_double(result.diffusion.back()) << '\n';
}

void cmd_mbw(const ExperimentConfig& config, const std::filesystem::path& trajectory,
             const std::filesystem::path& out_dir, std::ostream& log) {
  ensure_dir(out_dir);
  const Trajectory traj = load_or_simulate(config, trajectory);
  const MbwResult r = run_mbw(config, traj);
  {
    auto out = open_output(out_dir / "mbw_coefficients.csv");
    write_coefficients(out, r.report);
    for (std::size_t k = 0; k < r.summary.theta.size(); ++k) {
      out << "theta" << k << "_hat," << format_double(r.summary.theta[k]) << '\n';
    }
    out << "D_hat," << format_double(r.summary.diffusion) << '\n';
    for (std::size_t k = 0; k < r.reflected_summary.theta.size(); ++k) {
      out << "theta" << k << "_hat_reflected," << format_double(r.reflected_summary.theta[k]) << '\n';
    }
  }
  {
    auto out = open_output(out_dir / "mbw_loglik.csv");
    write_loglik_csv(out, r.report);
  }
  {
    auto out = open_output(out_dir / "mbw_drift_diffusion.csv");
    write_drift_diffusion_csv(out, r.dynamics, config.dx());
  }
  {
    auto out = open_output(out_dir / "mbw_drift_diffusion_reflected.csv");
    write_drift_diffusion_csv(out, r.reflected, config.dx());
  }
  log << "converged=" << (r.report.converged ? "true" : "false") << " after " << r.report.n_iterations
      << " iterations; theta0=" << format_double(r.summary.theta[0]) << " (reflected "
      << format_double(r.reflected_summary.theta[0]) << ") D=" << format_double(r.summary.diffusion) << '\n';
}

void cmd_bench(const ExperimentConfig& config, const std::filesystem::path& out_dir, std::ostream& log) {
  ensure_dir(out_dir);
  const BenchResult result = run_bench(config);
  {
    auto out = open_output(out_dir / "divergence.csv");
    write_divergence_csv(out, result.table);
  }
  {
    auto out = open_output(out_dir / "bench_pf_runs.csv");
    write_pf_runs_csv(out, result);
  }
  {
    auto out = open_output(out_dir / "bench_mbw_runs.csv");
    write_mbw_runs_csv(out, result);
  }
  for (const auto& rec : result.pf_runs) {
    if (rec.failed) log << "run " << rec.run << " with " << rec.n_particles << " particles failed numerically\n";
  }
  for (const auto& rec : result.mbw_runs) {
    if (rec.failed) log << "run " << rec.run << ": Baum-Welch fit failed numerically\n";
  }
  const auto& t = result.table;
  log << "diverged runs (%), T=" << config.steps << ", " << t.n_runs << " runs\n";
  log << "parameter";
  for (auto np : t.np_grid) log << '\t' << np;
  log << '\n';
  for (std::size_t p = 0; p < t.parameters.size(); ++p) {
    log << t.parameters[p];
    for (std::size_t g = 0; g < t.np_grid.size(); ++g) log << '\t' << t.percent(p, g);
    log << '\n';
  }
}

}  // namespace hdiff
