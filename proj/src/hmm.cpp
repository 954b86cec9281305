#include "hdiff/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>

#include "hdiff/config.hpp"
#include "hdiff/errors.hpp"

namespace hdiff {

namespace {

bool is_neighbour(std::size_t i, std::size_t j, std::size_t n) {
  return j == i || j == (i + 1) % n || j == (i + n - 1) % n;
}

void check_stochastic_rows(const Eigen::MatrixXd& m, double tol, const char* what) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      if (!(v >= 0.0 && v <= 1.0)) {
        throw std::invalid_argument(std::string(what) + ": entry outside [0, 1] in row " + std::to_string(i));
      }
    }
    if (std::abs(m.row(i).sum() - 1.0) > tol) {
      throw std::invalid_argument(std::string(what) + ": row " + std::to_string(i) + " does not sum to 1");
    }
  }
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace

bool is_periodic_tridiagonal(const Eigen::MatrixXd& a) {
  const auto n = static_cast<std::size_t>(a.rows());
  if (a.cols() != a.rows()) return false;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (!is_neighbour(i, j, n) && a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) != 0.0) {
        return false;
      }
    }
  }
  return true;
}

void Hmm::validate(double tol) const {
  if (transition.rows() < 2 || transition.rows() != transition.cols()) {
    throw std::invalid_argument("hmm: transition must be square with N >= 2");
  }
  if (emission.rows() != transition.rows() || emission.cols() < 1) {
    throw std::invalid_argument("hmm: emission must have N rows");
  }
  if (initial.size() != transition.rows()) throw std::invalid_argument("hmm: initial must have N entries");
  check_stochastic_rows(transition, tol, "hmm transition");
  check_stochastic_rows(emission, tol, "hmm emission");
  if ((initial.array() < 0.0).any() || std::abs(initial.sum() - 1.0) > tol) {
    throw std::invalid_argument("hmm: initial is not a probability vector");
  }
  if (!is_periodic_tridiagonal(transition)) {
    throw std::invalid_argument("hmm: transition has entries beyond nearest neighbours");
  }
}

void QuantizerSpec::validate() const {
  if (n_symbols < 2) throw ConfigError("quantizer: need at least 2 symbols");
  if (!(lo < hi)) throw ConfigError("quantizer: lo must be below hi");
}

Symbol quantize(double y, const QuantizerSpec& q) {
  const double k = std::ceil((y - q.lo) / q.bin_width()) - 1.0;
  const double top = static_cast<double>(q.n_symbols - 1);
  return static_cast<Symbol>(std::clamp(k, 0.0, top));
}

std::vector<Symbol> quantize(std::span<const double> ys, const QuantizerSpec& q) {
  q.validate();
  std::vector<Symbol> out(ys.size());
  std::transform(ys.begin(), ys.end(), out.begin(), [&q](double y) { return quantize(y, q); });
  return out;
}

Eigen::MatrixXd emission_from_observation_model(std::size_t n_states, const QuantizerSpec& q, double period,
                                                double sigma) {
  q.validate();
  if (n_states < 2) throw ConfigError("emission: need at least 2 states");
  if (!(period > 0.0) || !(sigma >= 0.0)) throw ConfigError("emission: need L > 0 and sigma >= 0");

  const auto n = static_cast<Eigen::Index>(n_states);
  const auto m = static_cast<Eigen::Index>(q.n_symbols);
  const double dx = period / static_cast<double>(n_states);
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double c = std::cos(2.0 * std::numbers::pi * static_cast<double>(i) * dx / period);
    if (sigma == 0.0) {
      e(i, quantize(c, q)) = 1.0;
      continue;
    }
    const double sd = std::sqrt(sigma);
    // End bins absorb the tails, matching the clamp in quantize().
    double below = 0.0;
    for (Eigen::Index k = 0; k < m; ++k) {
      const double upper =
          k == m - 1 ? 1.0 : normal_cdf((q.lo + static_cast<double>(k + 1) * q.bin_width() - c) / sd);
      e(i, k) = std::max(upper - below, 0.0);
      below = upper;
    }
    e.row(i) /= e.row(i).sum();
  }
  return e;
}

Eigen::VectorXd initial_from_gaussian(std::size_t n_states, double period, double mean, double variance) {
  if (n_states < 2) throw ConfigError("initial: need at least 2 states");
  const auto n = static_cast<Eigen::Index>(n_states);
  Eigen::VectorXd pi = Eigen::VectorXd::Zero(n);
  const double dx = period / static_cast<double>(n_states);
  if (!(variance > 0.0)) {
    const double pos = std::fmod(std::fmod(mean / dx, static_cast<double>(n)) + static_cast<double>(n),
                                 static_cast<double>(n));
    pi(static_cast<Eigen::Index>(std::lround(pos)) % n) = 1.0;
    return pi;
  }
  const double sd = std::sqrt(variance);
  const int images = 1 + static_cast<int>(std::ceil(8.0 * sd / period));
  for (Eigen::Index i = 0; i < n; ++i) {
    double w = 0.0;
    for (int k = -images; k <= images; ++k) {
      const double z = (static_cast<double>(i) * dx + k * period - mean) / sd;
      w += std::exp(-0.5 * z * z);
    }
    pi(i) = w;
  }
  return pi / pi.sum();
}

namespace {

void check_symbols(const Hmm& hmm, std::span<const Symbol> symbols) {
  const std::size_t m = hmm.n_symbols();
  for (Symbol s : symbols) {
    if (s >= m) throw std::invalid_argument("hmm: symbol " + std::to_string(s) + " out of range");
  }
}

}  // namespace

FbResult forward_backward(const Hmm& hmm, std::span<const Symbol> symbols) {
  const std::size_t t_len = symbols.size();
  if (t_len < 2) throw std::invalid_argument("forward_backward: need at least 2 observations");
  check_symbols(hmm, symbols);

  const auto n = static_cast<Eigen::Index>(hmm.n_states());
  const auto tt = static_cast<Eigen::Index>(t_len);
  const Eigen::MatrixXd& a = hmm.transition;
  const Eigen::MatrixXd& b = hmm.emission;

  RowMatrix alpha(tt, n);
  Eigen::VectorXd scale(tt);

  alpha.row(0) = hmm.initial.transpose().cwiseProduct(b.col(symbols[0]).transpose());
  for (Eigen::Index t = 0; t < tt; ++t) {
    if (t > 0) alpha.row(t) = (alpha.row(t - 1) * a).cwiseProduct(b.col(symbols[t]).transpose());
    scale(t) = alpha.row(t).sum();
    if (!(scale(t) > 0.0)) throw ZeroProbabilitySequence(static_cast<std::size_t>(t));
    alpha.row(t) /= scale(t);
  }

  FbResult r;
  r.log_likelihood = scale.array().log().sum();
  r.gamma.resize(tt, n);
  r.xi_sums = Eigen::MatrixXd::Zero(n, n);

  Eigen::RowVectorXd beta = Eigen::RowVectorXd::Ones(n);
  r.gamma.row(tt - 1) = alpha.row(tt - 1);
  for (Eigen::Index t = tt - 2; t >= 0; --t) {
    // next(j) = b_j(o_{t+1}) beta_{t+1}(j) / c_{t+1}
    const Eigen::RowVectorXd next = b.col(symbols[t + 1]).transpose().cwiseProduct(beta) / scale(t + 1);
    r.xi_sums.noalias() += (alpha.row(t).transpose() * next).cwiseProduct(a);
    beta = (a * next.transpose()).transpose();
    r.gamma.row(t) = alpha.row(t).cwiseProduct(beta);
  }
  return r;
}

double loglikelihood(const Hmm& hmm, std::span<const Symbol> symbols) {
  if (symbols.empty()) throw std::invalid_argument("loglikelihood: empty symbol sequence");
  check_symbols(hmm, symbols);
  const Eigen::MatrixXd& a = hmm.transition;
  const Eigen::MatrixXd& b = hmm.emission;
  Eigen::RowVectorXd alpha = hmm.initial.transpose().cwiseProduct(b.col(symbols[0]).transpose());
  double ll = 0.0;
  for (std::size_t t = 0; t < symbols.size(); ++t) {
    if (t > 0) alpha = (alpha * a).cwiseProduct(b.col(symbols[t]).transpose());
    const double c = alpha.sum();
    if (!(c > 0.0)) throw ZeroProbabilitySequence(t);
    alpha /= c;
    ll += std::log(c);
  }
  return ll;
}

DriftDiffusion dynamics_from_transitions(std::span<const double> up, std::span<const double> down, double d0,
                                         double dx) {
  if (up.size() != down.size()) throw std::invalid_argument("dynamics: a+ and a- lengths differ");
  if (!(d0 > 0.0) || !(dx > 0.0)) throw std::invalid_argument("dynamics: D0 and dx must be positive");
  DriftDiffusion out;
  out.drift.resize(up.size());
  out.diffusion.resize(up.size());
  for (std::size_t i = 0; i < up.size(); ++i) {
    const double p = up[i], m = down[i];
    if (!(p >= 0.0 && p <= 1.0 && m >= 0.0 && m <= 1.0 && p + m <= 1.0)) {
      throw std::invalid_argument("dynamics: infeasible transition probabilities at state " + std::to_string(i));
    }
    const double diff = p - m;
    out.drift[i] = diff * d0 / dx;
    out.diffusion[i] = ((p + m) - diff * diff) * d0;
  }
  return out;
}

NeighbourProbabilities transitions_from_dynamics(std::span<const double> drift, std::span<const double> diffusion,
                                                 double d0, double dx) {
  if (drift.size() != diffusion.size()) throw std::invalid_argument("transitions: F and D lengths differ");
  if (!(d0 > 0.0) || !(dx > 0.0)) throw std::invalid_argument("transitions: D0 and dx must be positive");
  constexpr double slack = 1e-12;
  NeighbourProbabilities out;
  out.up.resize(drift.size());
  out.down.resize(drift.size());
  for (std::size_t i = 0; i < drift.size(); ++i) {
    const double d = drift[i] * dx / d0;
    const double s = diffusion[i] / d0 + d * d;
    const double p = 0.5 * (s + d), m = 0.5 * (s - d);
    if (!(p >= -slack && m >= -slack && p + m <= 1.0 + slack)) {
      throw InfeasibleParameters("transitions: (F, D) = (" + format_double(drift[i]) + ", " +
                                 format_double(diffusion[i]) + ") has no nearest-neighbour walk at state " +
                                 std::to_string(i));
    }
    out.up[i] = p;
    out.down[i] = m;
  }
  return out;
}

void write_hmm(std::ostream& out, const Hmm& hmm) {
  auto rows = [&out](const auto& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << format_double(m(i, j));
      out << '\n';
    }
  };
  out << "hmm " << hmm.n_states() << ' ' << hmm.n_symbols() << '\n';
  out << "transition\n";
  rows(hmm.transition);
  out << "emission\n";
  rows(hmm.emission);
  out << "initial\n";
  rows(Eigen::RowVectorXd(hmm.initial.transpose()));
}

Hmm read_hmm(std::istream& in) {
  std::string tag;
  std::size_t n = 0, m = 0;
  if (!(in >> tag >> n >> m) || tag != "hmm") throw IoError("hmm text: missing 'hmm N M' header");
  auto block = [&in](const char* name, Eigen::Index rows, Eigen::Index cols) {
    std::string t;
    if (!(in >> t) || t != name) throw IoError(std::string("hmm text: expected '") + name + "'");
    Eigen::MatrixXd mat(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) {
        if (!(in >> mat(i, j))) throw IoError(std::string("hmm text: short block '") + name + "'");
      }
    }
    return mat;
  };
  Hmm hmm;
  const auto ni = static_cast<Eigen::Index>(n), mi = static_cast<Eigen::Index>(m);
  hmm.transition = block("transition", ni, ni);
  hmm.emission = block("emission", ni, mi);
  hmm.initial = block("initial", 1, ni).transpose();
  return hmm;
}

void write_symbols(std::ostream& out, std::span<const Symbol> symbols) {
  for (Symbol s : symbols) out << s << '\n';
}

std::vector<Symbol> read_symbols(std::istream& in) {
  std::vector<Symbol> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    try {
      std::size_t used = 0;
      const unsigned long v = std::stoul(line, &used);
      out.push_back(static_cast<Symbol>(v));
    } catch (const std::exception&) {
      throw IoError("symbol file: bad line '" + line + "'");
    }
  }
  return out;
}

}  // namespace hdiff
