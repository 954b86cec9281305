#include "hdiff/baum_welch.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <vector>

#include "hdiff/config.hpp"
#include "hdiff/errors.hpp"

namespace hdiff {

namespace {

using Index = Eigen::Index;

Index idx(std::size_t i) { return static_cast<Index>(i); }

std::size_t up_of(std::size_t i, std::size_t n) { return (i + 1) % n; }
std::size_t down_of(std::size_t i, std::size_t n) { return (i + n - 1) % n; }

/// Hessian of Q: -sum_ij Psi_ij / a_ij^2 grad(a_ij) grad(a_ij)^T.
Eigen::MatrixXd mstep_hessian(const FourierParams& params, const Eigen::MatrixXd& psi_unit) {
  const std::size_t n = params.n_states;
  const std::size_t c = params.coeffs_per_side();
  const auto probs = neighbour_probabilities(params);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(idx(2 * c), idx(2 * c));
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::VectorXd phi = fourier_basis(i, n, params.n_harmonics);
    const double p = probs.up[i], m = probs.down[i], d = 1.0 - p - m;
    const double wp = psi_unit(idx(i), idx(up_of(i, n))) / (p * p);
    const double wm = psi_unit(idx(i), idx(down_of(i, n))) / (m * m);
    const double wd = psi_unit(idx(i), idx(i)) / (d * d);
    const Eigen::MatrixXd outer = phi * phi.transpose();
    h.topLeftCorner(idx(c), idx(c)) -= (wp + wd) * outer;
    h.bottomRightCorner(idx(c), idx(c)) -= (wm + wd) * outer;
    h.topRightCorner(idx(c), idx(c)) -= wd * outer;
    h.bottomLeftCorner(idx(c), idx(c)) -= wd * outer;
  }
  return h;
}

Eigen::MatrixXd unit_mass(const Eigen::MatrixXd& psi) {
  const double total = psi.sum();
  if (!(total > 0.0)) throw NewtonFailure("M-step: expected transition counts are all zero");
  return psi / total;
}

// Each probability is linear in the packed coefficients, so the floor bounds
// are linear constraints a . theta - b >= 0 with slack a . theta - b.
struct FloorConstraints {
  Eigen::MatrixXd a;
  Eigen::VectorXd slack;
};

FloorConstraints floor_constraints(const FourierParams& params) {
  const std::size_t n = params.n_states, c = params.coeffs_per_side();
  const auto probs = neighbour_probabilities(params);
  FloorConstraints out{Eigen::MatrixXd::Zero(idx(3 * n), idx(2 * c)), Eigen::VectorXd(idx(3 * n))};
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::VectorXd phi = fourier_basis(i, n, params.n_harmonics);
    const Index r = idx(3 * i);
    out.a.row(r).head(idx(c)) = phi;
    out.a.row(r + 1).tail(idx(c)) = phi;
    out.a.row(r + 2).head(idx(c)) = -phi;
    out.a.row(r + 2).tail(idx(c)) = -phi;
    out.slack(r) = probs.up[i] - kFeasibilityFloor;
    out.slack(r + 1) = probs.down[i] - kFeasibilityFloor;
    out.slack(r + 2) = 1.0 - kFeasibilityFloor - probs.up[i] - probs.down[i];
  }
  return out;
}

/// Orthonormal basis of {d : rows d = 0}.
Eigen::MatrixXd null_space(const Eigen::MatrixXd& rows, Index dim) {
  if (rows.rows() == 0) return Eigen::MatrixXd::Identity(dim, dim);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(rows, Eigen::ComputeFullV);
  svd.setThreshold(1e-10);
  const Index rank = svd.rank();
  return svd.matrixV().rightCols(dim - rank);
}

void check_psi(const FourierParams& params, const Eigen::MatrixXd& psi) {
  if (psi.rows() != idx(params.n_states) || psi.cols() != idx(params.n_states)) {
    throw std::invalid_argument("M-step: Psi must be N x N");
  }
  if ((psi.array() < 0.0).any()) throw std::invalid_argument("M-step: Psi has negative entries");
}

}  // namespace

FourierParams FourierParams::homogeneous(std::size_t n_states, std::size_t n_harmonics, double up, double down) {
  FourierParams p;
  p.n_states = n_states;
  p.n_harmonics = n_harmonics;
  p.plus.assign(2 * n_harmonics + 1, 0.0);
  p.minus.assign(2 * n_harmonics + 1, 0.0);
  p.plus[0] = up;
  p.minus[0] = down;
  return p;
}

void FourierParams::validate_shape() const {
  if (n_states < 3) throw ConfigError("fourier params: need at least 3 states");
  if (n_states < 2 * n_harmonics + 1) throw ConfigError("fourier params: too many harmonics for N");
  if (plus.size() != coeffs_per_side() || minus.size() != coeffs_per_side()) {
    throw ConfigError("fourier params: expected " + std::to_string(coeffs_per_side()) + " coefficients per side");
  }
}

Eigen::VectorXd FourierParams::packed() const {
  Eigen::VectorXd v(idx(n_unknowns()));
  for (std::size_t k = 0; k < coeffs_per_side(); ++k) {
    v(idx(k)) = plus[k];
    v(idx(k + coeffs_per_side())) = minus[k];
  }
  return v;
}

FourierParams FourierParams::unpack(const Eigen::VectorXd& v, std::size_t n_states, std::size_t n_harmonics) {
  FourierParams p;
  p.n_states = n_states;
  p.n_harmonics = n_harmonics;
  const std::size_t c = p.coeffs_per_side();
  if (v.size() != idx(2 * c)) throw std::invalid_argument("fourier params: packed vector has wrong length");
  p.plus.resize(c);
  p.minus.resize(c);
  for (std::size_t k = 0; k < c; ++k) {
    p.plus[k] = v(idx(k));
    p.minus[k] = v(idx(k + c));
  }
  return p;
}

Eigen::VectorXd fourier_basis(std::size_t state, std::size_t n_states, std::size_t n_harmonics) {
  Eigen::VectorXd phi(idx(2 * n_harmonics + 1));
  phi(0) = 1.0;
  const double base = 2.0 * std::numbers::pi * static_cast<double>(state) / static_cast<double>(n_states);
  for (std::size_t k = 1; k <= n_harmonics; ++k) {
    phi(idx(k)) = std::cos(static_cast<double>(k) * base);
    phi(idx(n_harmonics + k)) = std::sin(static_cast<double>(k) * base);
  }
  return phi;
}

NeighbourProbabilities neighbour_probabilities(const FourierParams& params) {
  params.validate_shape();
  const Eigen::Map<const Eigen::VectorXd> plus(params.plus.data(), idx(params.plus.size()));
  const Eigen::Map<const Eigen::VectorXd> minus(params.minus.data(), idx(params.minus.size()));
  NeighbourProbabilities out;
  out.up.resize(params.n_states);
  out.down.resize(params.n_states);
  for (std::size_t i = 0; i < params.n_states; ++i) {
    const Eigen::VectorXd phi = fourier_basis(i, params.n_states, params.n_harmonics);
    out.up[i] = phi.dot(plus);
    out.down[i] = phi.dot(minus);
  }
  return out;
}

bool is_feasible(const FourierParams& params, double floor) {
  const auto probs = neighbour_probabilities(params);
  for (std::size_t i = 0; i < params.n_states; ++i) {
    const double p = probs.up[i], m = probs.down[i];
    if (!(p >= floor && p <= 1.0 - floor && m >= floor && m <= 1.0 - floor && p + m <= 1.0 - floor)) {
      return false;
    }
  }
  return true;
}

Eigen::MatrixXd build_transition(const FourierParams& params) {
  const auto probs = neighbour_probabilities(params);
  const std::size_t n = params.n_states;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(idx(n), idx(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double p = probs.up[i], m = probs.down[i];
    if (!(p >= kFeasibilityFloor && p <= 1.0 - kFeasibilityFloor && m >= kFeasibilityFloor &&
          m <= 1.0 - kFeasibilityFloor && p + m <= 1.0 - kFeasibilityFloor)) {
      throw InfeasibleParameters("transition: infeasible probabilities at state " + std::to_string(i) + " (a+=" +
                                 format_double(p) + ", a-=" + format_double(m) + ")");
    }
    a(idx(i), idx(up_of(i, n))) = p;
    a(idx(i), idx(down_of(i, n))) = m;
    a(idx(i), idx(i)) = 1.0 - p - m;
  }
  return a;
}

Eigen::VectorXd transition_gradient(const FourierParams& params, std::size_t i, std::size_t j) {
  params.validate_shape();
  const std::size_t n = params.n_states;
  const std::size_t c = params.coeffs_per_side();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(idx(2 * c));
  const Eigen::VectorXd phi = fourier_basis(i, n, params.n_harmonics);
  if (j == up_of(i, n)) {
    g.head(idx(c)) = phi;
  } else if (j == down_of(i, n)) {
    g.tail(idx(c)) = phi;
  } else if (j == i) {
    g.head(idx(c)) = -phi;
    g.tail(idx(c)) = -phi;
  }
  return g;
}

double mstep_objective(const FourierParams& params, const Eigen::MatrixXd& psi) {
  check_psi(params, psi);
  const Eigen::MatrixXd unit = unit_mass(psi);
  const auto probs = neighbour_probabilities(params);
  const std::size_t n = params.n_states;
  double q = 0.0;
  auto term = [](double weight, double a) { return weight > 0.0 ? weight * std::log(a) : 0.0; };
  for (std::size_t i = 0; i < n; ++i) {
    const double p = probs.up[i], m = probs.down[i];
    q += term(unit(idx(i), idx(up_of(i, n))), p);
    q += term(unit(idx(i), idx(down_of(i, n))), m);
    q += term(unit(idx(i), idx(i)), 1.0 - p - m);
  }
  return q;
}

Eigen::VectorXd mstep_residual(const FourierParams& params, const Eigen::MatrixXd& psi) {
  check_psi(params, psi);
  const Eigen::MatrixXd unit = unit_mass(psi);
  const auto probs = neighbour_probabilities(params);
  const std::size_t n = params.n_states;
  const std::size_t c = params.coeffs_per_side();
  Eigen::VectorXd r = Eigen::VectorXd::Zero(idx(2 * c));
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::VectorXd phi = fourier_basis(i, n, params.n_harmonics);
    const double p = probs.up[i], m = probs.down[i], d = 1.0 - p - m;
    const double self = unit(idx(i), idx(i)) / d;
    r.head(idx(c)) += (unit(idx(i), idx(up_of(i, n))) / p - self) * phi;
    r.tail(idx(c)) += (unit(idx(i), idx(down_of(i, n))) / m - self) * phi;
  }
  return r;
}

FourierParams homogeneous_mstep(const Eigen::MatrixXd& psi) {
  const auto n = static_cast<std::size_t>(psi.rows());
  if (n < 3 || psi.cols() != psi.rows()) throw std::invalid_argument("homogeneous M-step: Psi must be N x N, N >= 3");
  double up = 0.0, down = 0.0, total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    up += psi(idx(i), idx(up_of(i, n)));
    down += psi(idx(i), idx(down_of(i, n)));
    total += psi(idx(i), idx(up_of(i, n))) + psi(idx(i), idx(down_of(i, n))) + psi(idx(i), idx(i));
  }
  if (!(total > 0.0)) throw NewtonFailure("homogeneous M-step: Psi is empty");
  return FourierParams::homogeneous(n, 0, up / total, down / total);
}

MStepResult mstep_newton(const FourierParams& params, const Eigen::MatrixXd& psi, const MStepOptions& options) {
  params.validate_shape();
  check_psi(params, psi);
  if (!is_feasible(params)) throw InfeasibleParameters("M-step: starting point is infeasible");
  const Eigen::MatrixXd unit = unit_mass(psi);

  MStepResult out{params, 0.0, 0};
  Eigen::VectorXd theta = params.packed();
  double q = mstep_objective(out.params, unit);

  constexpr double kActiveSlack = 1e-10;
  const Index dim = theta.size();

  for (std::size_t iter = 0;; ++iter) {
    const Eigen::VectorXd g = mstep_residual(out.params, unit);
    const auto cons = floor_constraints(out.params);
    std::vector<Index> active;
    for (Index k = 0; k < cons.slack.size(); ++k) {
      if (cons.slack(k) <= kActiveSlack) active.push_back(k);
    }

    // Q is concave, so -H is positive semidefinite; solve (-H) step = g on the
    // face spanned by the bounds currently held at the floor.
    const Eigen::MatrixXd neg_h = -mstep_hessian(out.params, unit);
    Eigen::MatrixXd z;
    Eigen::VectorXd step;
    while (true) {
      Eigen::MatrixXd rows(idx(active.size()), dim);
      for (std::size_t r = 0; r < active.size(); ++r) rows.row(idx(r)) = cons.a.row(active[r]);
      z = null_space(rows, dim);
      step = Eigen::VectorXd::Zero(dim);
      if (z.cols() > 0) {
        const Eigen::LDLT<Eigen::MatrixXd> ldlt(z.transpose() * neg_h * z);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-14) {
          throw NewtonFailure("M-step: singular Jacobian");
        }
        step = z * ldlt.solve(z.transpose() * g);
      }
      if (active.empty()) break;
      // release the bound whose multiplier says Q wants to move inward
      const Eigen::VectorXd nu = rows.transpose().completeOrthogonalDecomposition().solve(neg_h * step - g);
      Index worst = 0;
      if (nu.minCoeff(&worst) >= -1e-12) break;
      active.erase(active.begin() + worst);
    }

    out.residual = (z * (z.transpose() * g)).lpNorm<Eigen::Infinity>();
    out.iterations = iter;
    if (out.residual <= options.tol) return out;
    if (iter == options.max_iter) {
      throw NewtonFailure("M-step: no convergence after " + std::to_string(options.max_iter) +
                          " iterations (residual " + format_double(out.residual) + ")");
    }

    // stop just short of the first bound the step would cross
    double lambda = 1.0;
    const Eigen::VectorXd rate = cons.a * step;
    for (Index k = 0; k < rate.size(); ++k) {
      if (rate(k) < 0.0 && cons.slack(k) > kActiveSlack) {
        lambda = std::min(lambda, (1.0 - 1e-6) * cons.slack(k) / -rate(k));
      }
    }

    bool accepted = false;
    for (int halving = 0; halving <= 30; ++halving, lambda *= 0.5) {
      const Eigen::VectorXd trial = theta + lambda * step;
      auto candidate = FourierParams::unpack(trial, params.n_states, params.n_harmonics);
      if (!is_feasible(candidate)) continue;
      const double q_trial = mstep_objective(candidate, unit);
      if (q_trial >= q - 1e-13) {
        theta = trial;
        out.params = std::move(candidate);
        q = q_trial;
        accepted = true;
        break;
      }
    }
    if (!accepted) throw NewtonFailure("M-step: no feasible ascent step after 30 halvings");
  }
}

FitReport fit(std::span<const Symbol> symbols, const FourierParams& init, const Eigen::MatrixXd& emission,
              const Eigen::VectorXd& initial, const FitOptions& options) {
  if (symbols.empty()) throw std::invalid_argument("fit: empty symbol sequence");
  init.validate_shape();

  FitReport report;
  report.params = init;
  Hmm hmm{build_transition(init), emission, initial};
  hmm.validate(1e-9);

  for (std::size_t n = 0;; ++n) {
    const FbResult fb = forward_backward(hmm, symbols);
    report.loglik_trace.push_back(fb.log_likelihood);
    if (n > 0) {
      const double prev = report.loglik_trace[n - 1];
      if (fb.log_likelihood < prev - 1e-8) ++report.non_monotone_steps;
      if (std::abs(fb.log_likelihood - prev) <= options.tol_ll) {
        report.converged = true;
        break;
      }
    }
    if (n == options.max_outer) break;
    report.params = mstep_newton(report.params, fb.xi_sums, options.mstep).params;
    hmm.transition = build_transition(report.params);
  }
  report.n_iterations = report.loglik_trace.size() - 1;
  return report;
}

DriftDiffusion extract_drift_diffusion(const FourierParams& params, double d0, double dx) {
  const auto probs = neighbour_probabilities(params);
  return dynamics_from_transitions(probs.up, probs.down, d0, dx);
}

DriftDiffusion reflect(const DriftDiffusion& dd) {
  const std::size_t n = dd.drift.size();
  DriftDiffusion out;
  out.drift.resize(n);
  out.diffusion.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t mirror = (n - i) % n;
    out.drift[mirror] = -dd.drift[i];
    out.diffusion[mirror] = dd.diffusion[i];
  }
  return out;
}

DriftSummary summarize(const DriftDiffusion& dd, std::size_t n_theta) {
  const std::size_t n = dd.drift.size();
  if (n == 0 || n <= 2 * n_theta) throw std::invalid_argument("summarize: too few states for the harmonics");
  DriftSummary s;
  s.theta.assign(n_theta + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    s.theta[0] += dd.drift[i];
    s.diffusion += dd.diffusion[i];
    for (std::size_t k = 1; k <= n_theta; ++k) {
      const double arg = 2.0 * std::numbers::pi * static_cast<double>(k * i) / static_cast<double>(n);
      s.theta[k] += 2.0 * dd.drift[i] * std::sin(arg);
    }
  }
  for (auto& t : s.theta) t /= static_cast<double>(n);
  s.diffusion /= static_cast<double>(n);
  return s;
}

void write_coefficients(std::ostream& out, const FitReport& report) {
  const auto& p = report.params;
  out << "key,value\n";
  out << "n_states," << p.n_states << '\n';
  out << "n_harmonics," << p.n_harmonics << '\n';
  for (std::size_t k = 0; k < p.plus.size(); ++k) out << "coeff_plus_" << k << ',' << format_double(p.plus[k]) << '\n';
  for (std::size_t k = 0; k < p.minus.size(); ++k) out << "coeff_minus_" << k << ',' << format_double(p.minus[k]) << '\n';
  out << "converged," << (report.converged ? "true" : "false") << '\n';
  out << "n_iterations," << report.n_iterations << '\n';
  out << "non_monotone_steps," << report.non_monotone_steps << '\n';
  out << "final_loglik," << format_double(report.loglik_trace.back()) << '\n';
}

void write_loglik_csv(std::ostream& out, const FitReport& report) {
  out << "iteration,loglik\n";
  for (std::size_t n = 0; n < report.loglik_trace.size(); ++n) {
    out << n << ',' << format_double(report.loglik_trace[n]) << '\n';
  }
}

void write_drift_diffusion_csv(std::ostream& out, const DriftDiffusion& dd, double dx) {
  out << "i,x,F_hat,D_hat\n";
  for (std::size_t i = 0; i < dd.drift.size(); ++i) {
    out << i << ',' << format_double(static_cast<double>(i) * dx) << ',' << format_double(dd.drift[i]) << ','
        << format_double(dd.diffusion[i]) << '\n';
  }
}

}  // namespace hdiff
