#pragma once

// Discrete N-state / M-symbol hidden Markov machinery for the periodic
// nearest-neighbour random walk.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace hdiff {

using Symbol = std::uint32_t;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// True when a(i, j) == 0 unless j is i-1, i or i+1 modulo N.
bool is_periodic_tridiagonal(const Eigen::MatrixXd& a);

struct Hmm {
  Eigen::MatrixXd transition;  ///< N x N, row-stochastic, periodic tridiagonal
  Eigen::MatrixXd emission;    ///< N x M, row-stochastic
  Eigen::VectorXd initial;     ///< N

  std::size_t n_states() const { return static_cast<std::size_t>(transition.rows()); }
  std::size_t n_symbols() const { return static_cast<std::size_t>(emission.cols()); }

  /// Throws std::invalid_argument naming the first violated invariant.
  void validate(double tol = 1e-12) const;
};

struct QuantizerSpec {
  std::size_t n_symbols = 16;
  double lo = -1.0;
  double hi = 1.0;

  void validate() const;
  double bin_width() const { return (hi - lo) / static_cast<double>(n_symbols); }
};

/// Uniform bins over [lo, hi], closed on the right: symbol k covers
/// (lo + k w, lo + (k + 1) w]. Values outside the range, and lo itself, clamp
/// to the end bins.
Symbol quantize(double y, const QuantizerSpec& q);
std::vector<Symbol> quantize(std::span<const double> ys, const QuantizerSpec& q);

/// Row i: distribution of the symbol of cos(2 pi i dx / L) + sqrt(sigma) w,
/// with dx = L / N. One-hot when sigma == 0.
Eigen::MatrixXd emission_from_observation_model(std::size_t n_states, const QuantizerSpec& q, double period,
                                                double sigma);

/// Gaussian N(mean, variance) folded onto the ring of N states at spacing L / N.
Eigen::VectorXd initial_from_gaussian(std::size_t n_states, double period, double mean, double variance);

struct FbResult {
  double log_likelihood = 0.0;
  RowMatrix gamma;          ///< T x N state posteriors
  Eigen::MatrixXd xi_sums;  ///< N x N expected transition counts
};

/// Scaled forward-backward. Requires T >= 2 and all symbols < M. Throws
/// ZeroProbabilitySequence when a scale factor vanishes.
FbResult forward_backward(const Hmm& hmm, std::span<const Symbol> symbols);

/// Forward pass only.
double loglikelihood(const Hmm& hmm, std::span<const Symbol> symbols);

struct DriftDiffusion {
  std::vector<double> drift;
  std::vector<double> diffusion;
};

struct NeighbourProbabilities {
  std::vector<double> up;    ///< a(i, i+1)
  std::vector<double> down;  ///< a(i, i-1)
};

/// F = (a+ - a-) D0 / dx,  D = [(a+ + a-) - (a+ - a-)^2] D0.
DriftDiffusion dynamics_from_transitions(std::span<const double> up, std::span<const double> down, double d0,
                                         double dx);

/// Right inverse of dynamics_from_transitions. Throws InfeasibleParameters
/// when the implied probabilities leave [0, 1] or sum above 1.
NeighbourProbabilities transitions_from_dynamics(std::span<const double> drift, std::span<const double> diffusion,
                                                 double d0, double dx);

/// Text format: `hmm N M`, then `transition`, `emission`, `initial` blocks of
/// dense rows at 17 significant digits.
void write_hmm(std::ostream& out, const Hmm& hmm);
Hmm read_hmm(std::istream& in);

void write_symbols(std::ostream& out, std::span<const Symbol> symbols);
std::vector<Symbol> read_symbols(std::istream& in);

}  // namespace hdiff
