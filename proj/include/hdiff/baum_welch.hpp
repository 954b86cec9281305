#pragma once

// Baum-Welch reestimation with the transition matrix constrained to a
// truncated real Fourier series over the ring of states:
//
//   a(k, k+1) = c0+ + sum_n [cn+ cos(2 pi k n / N) + sn+ sin(2 pi k n / N)]
//   a(k, k-1) = same with the minus coefficients
//   a(k, k)   = 1 - a(k, k+1) - a(k, k-1)
//
// The M-step maximizes Q = sum_ij Psi_ij log a_ij(theta) by damped Newton.
// Because every a_ij is affine in theta, Q is concave and its stationarity
// condition is the implicit equation set
//
//   sum_{i != j} d a_ij / d theta_k (Psi_ij / a_ij - Psi_ii / a_ii) = 0.
//
// The number of unknowns is 2 (2K + 1) whatever the number of states.

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "hdiff/hmm.hpp"

namespace hdiff {

/// Lower bound on every off-diagonal and diagonal probability.
inline constexpr double kFeasibilityFloor = 1e-6;

struct FourierParams {
  std::size_t n_states = 32;
  std::size_t n_harmonics = 1;
  std::vector<double> plus;   ///< c0, c1..cK, s1..sK for a(k, k+1)
  std::vector<double> minus;  ///< same layout for a(k, k-1)

  std::size_t coeffs_per_side() const { return 2 * n_harmonics + 1; }
  std::size_t n_unknowns() const { return 2 * coeffs_per_side(); }

  /// Constant up/down probabilities, all harmonics zero.
  static FourierParams homogeneous(std::size_t n_states, std::size_t n_harmonics, double up, double down);

  /// Throws ConfigError on inconsistent sizes or N < max(3, 2K + 1).
  void validate_shape() const;

  /// Flat view: plus coefficients then minus coefficients.
  Eigen::VectorXd packed() const;
  static FourierParams unpack(const Eigen::VectorXd& v, std::size_t n_states, std::size_t n_harmonics);
};

/// Basis row (1, cos(2 pi k/N), .., cos(2 pi K k/N), sin(2 pi k/N), .., sin(2 pi K k/N)).
Eigen::VectorXd fourier_basis(std::size_t state, std::size_t n_states, std::size_t n_harmonics);

/// Off-diagonal probabilities without any feasibility check.
NeighbourProbabilities neighbour_probabilities(const FourierParams& params);

bool is_feasible(const FourierParams& params, double floor = kFeasibilityFloor);

/// Throws InfeasibleParameters when any probability leaves [floor, 1 - floor].
Eigen::MatrixXd build_transition(const FourierParams& params);

/// d a(i, j) / d theta over the packed coefficient vector. Zero unless j is a
/// neighbour of i.
Eigen::VectorXd transition_gradient(const FourierParams& params, std::size_t i, std::size_t j);

/// Q(theta) = sum_ij Psi_ij log a_ij with Psi scaled to unit total mass.
double mstep_objective(const FourierParams& params, const Eigen::MatrixXd& psi);

/// Left-hand side of the implicit M-step equations, Psi scaled to unit mass.
Eigen::VectorXd mstep_residual(const FourierParams& params, const Eigen::MatrixXd& psi);

/// Closed-form M-step for K = 0: a+ = sum Psi(i,i+1) / sum Psi, likewise a-.
FourierParams homogeneous_mstep(const Eigen::MatrixXd& psi);

struct MStepOptions {
  double tol = 1e-10;
  std::size_t max_iter = 100;
};

struct MStepResult {
  FourierParams params;
  double residual = 0.0;  ///< infinity norm at the returned point
  std::size_t iterations = 0;
};

/// Damped Newton on the M-step equations starting from `params`. Probabilities
/// sitting at the floor are held there while Q pushes outward; steps stop short
/// of new bounds and are halved (up to 30 times) until Q does not decrease.
/// The residual is the gradient projected onto the free directions.
/// Throws NewtonFailure on a singular Jacobian or non-convergence.
MStepResult mstep_newton(const FourierParams& params, const Eigen::MatrixXd& psi, const MStepOptions& options = {});

struct FitOptions {
  double tol_ll = 1e-6;
  std::size_t max_outer = 200;
  MStepOptions mstep;
};

struct FitReport {
  FourierParams params;
  std::vector<double> loglik_trace;
  std::size_t n_iterations = 0;  ///< number of reestimation steps
  bool converged = false;
  std::size_t non_monotone_steps = 0;  ///< log-likelihood drops larger than 1e-8
};

/// Alternates forward-backward and the Newton M-step until the log-likelihood
/// changes by at most tol_ll. The emission matrix and initial distribution
/// stay fixed.
FitReport fit(std::span<const Symbol> symbols, const FourierParams& init, const Eigen::MatrixXd& emission,
              const Eigen::VectorXd& initial, const FitOptions& options = {});

DriftDiffusion extract_drift_diffusion(const FourierParams& params, double d0, double dx);

/// Mirror image under x -> L - x: state i maps to N - i, drift changes sign.
DriftDiffusion reflect(const DriftDiffusion& dd);

/// Least-squares projection of sampled drift onto theta0 + sum_n theta_n sin(2 pi n x / L),
/// and the mean diffusion.
struct DriftSummary {
  std::vector<double> theta;
  double diffusion = 0.0;
};
DriftSummary summarize(const DriftDiffusion& dd, std::size_t n_theta);

void write_coefficients(std::ostream& out, const FitReport& report);
void write_loglik_csv(std::ostream& out, const FitReport& report);
/// Columns i, x, F_hat, D_hat.
void write_drift_diffusion_csv(std::ostream& out, const DriftDiffusion& dd, double dx);

}  // namespace hdiff
