#pragma once

// End-to-end experiments shared by the command-line tool and the acceptance
// suite: simulate data, run the particle filter and the modified Baum-Welch
// fit, and tabulate particle-filter divergence over repeated runs.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "hdiff/baum_welch.hpp"
#include "hdiff/config.hpp"
#include "hdiff/particle_filter.hpp"
#include "hdiff/sde.hpp"

namespace hdiff {

struct BwConfig {
  std::size_t n_states = 32;
  std::size_t n_symbols = 16;
  double q_lo = -1.0;
  double q_hi = 1.0;
  std::size_t n_harmonics = 1;
  /// Starting coefficients; empty means homogeneous (init_up, init_down).
  std::vector<double> init_plus;
  std::vector<double> init_minus;
  double init_up = 0.24;
  double init_down = 0.26;
  /// Noise variance assumed by the emission matrix when the data sigma is
  /// smaller; sigma = 0 data would otherwise give zero-probability sequences.
  double emission_sigma = 1e-3;
  FitOptions fit;

  QuantizerSpec quantizer() const { return {n_symbols, q_lo, q_hi}; }
  FourierParams initial_params() const;
};

struct ExperimentConfig {
  ModelSpec model;
  StartDistribution start = GaussianStart{0.0, 1.0};
  PfConfig pf;
  BwConfig bw;
  std::size_t steps = 1000;  ///< T
  std::size_t n_runs = 50;
  std::vector<std::size_t> np_grid{100, 500, 1000};
  double divergence_threshold = 0.5;
  std::uint64_t seed = 1;

  double dx() const { return model.period / static_cast<double>(bw.n_states); }
  double d0() const { return dx() * dx() / model.dt; }

  /// Builds a config from key-value entries; unknown keys raise ConfigError.
  static ExperimentConfig from_key_values(const KeyValues& kv);
  void write(std::ostream& out) const;
  void validate() const;
};

Trajectory run_simulate(const ExperimentConfig& config);

/// Filters observations at t = 1..T of the trajectory (the t = 0 point only
/// seeds the truth).
FilterResult run_pf(const ExperimentConfig& config, const Trajectory& traj);

struct MbwResult {
  FitReport report;
  DriftDiffusion dynamics;
  DriftDiffusion reflected;
  DriftSummary summary;
  DriftSummary reflected_summary;
};

MbwResult run_mbw(const ExperimentConfig& config, const Trajectory& traj);

/// Relative final-time error above `threshold`, or a non-finite estimate.
bool diverged(double estimate, double truth, double threshold);

struct DivergenceTable {
  std::vector<std::string> parameters;  ///< theta0..thetaK, D
  std::vector<std::size_t> np_grid;
  std::size_t n_runs = 0;
  /// diverged[p][g]: runs diverged for parameter p at np_grid[g].
  std::vector<std::vector<std::size_t>> diverged;

  double percent(std::size_t p, std::size_t g) const {
    return 100.0 * static_cast<double>(diverged[p][g]) / static_cast<double>(n_runs);
  }
};

struct PfRunRecord {
  std::size_t run = 0;
  std::size_t n_particles = 0;
  bool failed = false;
  std::vector<double> theta;
  double diffusion = 0.0;
};

struct MbwRunRecord {
  std::size_t run = 0;
  bool failed = false;
  bool converged = false;
  std::size_t n_iterations = 0;
  DriftSummary summary;
  DriftSummary reflected;
};

struct BenchResult {
  DivergenceTable table;
  std::vector<PfRunRecord> pf_runs;
  std::vector<MbwRunRecord> mbw_runs;
};

struct BenchOptions {
  bool run_mbw = true;
};

/// Every run draws a fresh trajectory from (seed, run); each particle count
/// gets its own filter seed from (seed, run, grid index). Runs execute
/// concurrently and are reduced in run order.
BenchResult run_bench(const ExperimentConfig& config, const BenchOptions& options = {});

void write_divergence_csv(std::ostream& out, const DivergenceTable& table);
void write_pf_runs_csv(std::ostream& out, const BenchResult& result);
void write_mbw_runs_csv(std::ostream& out, const BenchResult& result);

// Subcommands: write their outputs under out_dir and a short summary to log.
void cmd_simulate(const ExperimentConfig& config, const std::filesystem::path& out_dir, std::ostream& log);
void cmd_pf(const ExperimentConfig& config, const std::filesystem::path& trajectory,
            const std::filesystem::path& out_dir, std::ostream& log);
void cmd_mbw(const ExperimentConfig& config, const std::filesystem::path& trajectory,
             const std::filesystem::path& out_dir, std::ostream& log);
void cmd_bench(const ExperimentConfig& config, const std::filesystem::path& out_dir, std::ostream& log);

}  // namespace hdiff
