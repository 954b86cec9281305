#include "hdiff/sde.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>

#include "hdiff/errors.hpp"
#include "hdiff/rng.hpp"

namespace hdiff {

void ModelSpec::validate() const {
  if (theta.empty()) throw ConfigError("model: theta needs at least the constant term theta0");
  if (!(period > 0.0)) throw ConfigError("model: L must be positive");
  if (!(dt > 0.0)) throw ConfigError("model: dt must be positive");
  if (!(diffusion >= 0.0)) throw ConfigError("model: D must be nonnegative");
  if (!(obs_variance >= 0.0)) throw ConfigError("model: sigma must be nonnegative");
  for (double t : theta) {
    if (!std::isfinite(t)) throw ConfigError("model: theta must be finite");
  }
}

ModelSpec ModelSpec::from_key_values(const KeyValues& kv, ModelSpec defaults) {
  ModelSpec spec = std::move(defaults);
  const std::size_t n_theta = kv.get_uint("n_theta", spec.n_theta());
  std::vector<double> theta(n_theta + 1, 0.0);
  for (std::size_t n = 0; n <= n_theta; ++n) {
    const double fallback = n < spec.theta.size() ? spec.theta[n] : 0.0;
    theta[n] = kv.get_double("theta" + std::to_string(n), fallback);
  }
  spec.theta = std::move(theta);
  spec.diffusion = kv.get_double("D", spec.diffusion);
  spec.period = kv.get_double("L", spec.period);
  spec.obs_variance = kv.get_double("sigma", spec.obs_variance);
  spec.dt = kv.get_double("dt", spec.dt);
  spec.validate();
  return spec;
}

void ModelSpec::write(std::ostream& out) const {
  out << "n_theta=" << n_theta() << '\n';
  for (std::size_t n = 0; n < theta.size(); ++n) {
    out << "theta" << n << '=' << format_double(theta[n]) << '\n';
  }
  out << "D=" << format_double(diffusion) << '\n';
  out << "L=" << format_double(period) << '\n';
  out << "sigma=" << format_double(obs_variance) << '\n';
  out << "dt=" << format_double(dt) << '\n';
}

double fourier_drift(std::span<const double> theta, double period, double x) {
  if (theta.empty()) return 0.0;
  double f = theta[0];
  const double k = 2.0 * std::numbers::pi * x / period;
  for (std::size_t n = 1; n < theta.size(); ++n) {
    f += theta[n] * std::sin(static_cast<double>(n) * k);
  }
  return f;
}

double drift_eval(const ModelSpec& spec, double x) { return fourier_drift(spec.theta, spec.period, x); }

double observe(double x, double period, double obs_variance, double w) {
  return std::cos(2.0 * std::numbers::pi * x / period) + std::sqrt(obs_variance) * w;
}

Trajectory simulate(const ModelSpec& spec, const StartDistribution& start, std::size_t steps,
                    std::uint64_t seed) {
  spec.validate();
  if (steps == 0) throw ConfigError("simulate: steps must be at least 1");

  Stream rng(seed, StreamKind::simulate);
  double x = std::visit(
      [&rng](const auto& s) -> double {
        if constexpr (std::is_same_v<std::decay_t<decltype(s)>, FixedStart>) {
          return s.x;
        } else {
          if (!(s.variance >= 0.0)) throw ConfigError("simulate: start variance must be nonnegative");
          return s.mean + std::sqrt(s.variance) * rng.normal();
        }
      },
      start);

  Trajectory traj;
  traj.times.reserve(steps + 1);
  traj.states.reserve(steps + 1);
  traj.observations.reserve(steps + 1);

  const double noise_scale = std::sqrt(spec.diffusion * spec.dt);
  for (std::size_t k = 0; k <= steps; ++k) {
    if (k > 0) {
      const double v = rng.normal();
      x = x + drift_eval(spec, x) * spec.dt + noise_scale * v;
    }
    // w is drawn even when sigma == 0 so the state path does not depend on sigma.
    const double w = rng.normal();
    traj.times.push_back(static_cast<double>(k) * spec.dt);
    traj.states.push_back(x);
    traj.observations.push_back(observe(x, spec.period, spec.obs_variance, w));
  }
  return traj;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  out << "t,x,y\n";
  for (std::size_t k = 0; k < traj.size(); ++k) {
    out << format_double(traj.times[k]) << ',' << format_double(traj.states[k]) << ','
        << format_double(traj.observations[k]) << '\n';
  }
}

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_trajectory_csv(out, traj);
  if (!out) throw IoError("write failed: " + path.string());
}

Trajectory read_trajectory_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("trajectory csv: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "t,x,y") throw IoError("trajectory csv: expected header 't,x,y', got '" + line + "'");

  Trajectory traj;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell[3];
    for (auto& c : cell) {
      if (!std::getline(ss, c, ',')) throw IoError("trajectory csv: short row at line " + std::to_string(lineno));
    }
    try {
      traj.times.push_back(std::stod(cell[0]));
      traj.states.push_back(std::stod(cell[1]));
      traj.observations.push_back(std::stod(cell[2]));
    } catch (const std::exception&) {
      throw IoError("trajectory csv: bad number at line " + std::to_string(lineno));
    }
  }
  return traj;
}

Trajectory read_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_trajectory_csv(in);
}

}  // namespace hdiff
