#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "hdiff/kalman.hpp"

using namespace hdiff;

namespace {

// Information-form recursion: precisions add on update.
std::vector<double> information_filter(double a, double h, double q, double r, double m, double p,
                                       const std::vector<double>& ys) {
  std::vector<double> means;
  for (double y : ys) {
    const double prior_m = a * m;
    const double prior_p = a * a * p + q;
    const double post_prec = 1.0 / prior_p + h * h / r;
    p = 1.0 / post_prec;
    m = p * (prior_m / prior_p + h * y / r);
    means.push_back(m);
  }
  return means;
}

}  // namespace

TEST_CASE("uninformative observations leave the prior propagation") {
  const LinearGaussianModel model{.a = 0.8, .h = 0.0, .q = 0.3, .r = 1.0};
  const auto r = kalman_filter(model, 2.0, 1.5, std::vector<double>{5.0, -3.0, 7.0});
  double m = 2.0, p = 1.5;
  for (std::size_t k = 0; k < 3; ++k) {
    m *= 0.8;
    p = 0.64 * p + 0.3;
    CHECK(r.means[k] == doctest::Approx(m).epsilon(1e-15));
    CHECK(r.variances[k] == doctest::Approx(p).epsilon(1e-15));
  }
}

TEST_CASE("equal precision fusion averages prior and observation") {
  const LinearGaussianModel model{.a = 1.0, .h = 1.0, .q = 0.0, .r = 1.0};
  const auto r = kalman_filter(model, 0.4, 1.0, std::vector<double>{2.0});
  CHECK(r.means[0] == doctest::Approx(1.2).epsilon(1e-15));
  CHECK(r.variances[0] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("matches an information-form recursion") {
  const std::vector<double> ys{0.3, -0.7, 1.9, 0.2, -1.1};
  const LinearGaussianModel model{.a = 0.9, .h = 1.0, .q = 0.5, .r = 0.2};
  const auto r = kalman_filter(model, 0.0, 1.0, ys);
  const auto oracle = information_filter(0.9, 1.0, 0.5, 0.2, 0.0, 1.0, ys);
  for (std::size_t k = 0; k < ys.size(); ++k) CHECK(std::abs(r.means[k] - oracle[k]) < 1e-12);
}

TEST_CASE("invalid variances are rejected") {
  CHECK_THROWS_AS(kalman_filter({.r = 0.0}, 0.0, 1.0, std::vector<double>{1.0}), ConfigError);
  CHECK_THROWS_AS(kalman_filter({.q = -1.0}, 0.0, 1.0, std::vector<double>{1.0}), ConfigError);
  CHECK_THROWS_AS(kalman_filter({}, 0.0, -1.0, std::vector<double>{1.0}), ConfigError);
}

TEST_CASE("particle filter posterior mean tracks the Kalman mean") {
  const LinearGaussianModel model{.a = 0.9, .h = 1.0, .q = 0.5, .r = 0.2};
  const std::size_t t_len = 10, seeds = 10;
  std::vector<double> ys;
  {
    Stream rng(100, StreamKind::test);
    double x = rng.normal();
    for (std::size_t t = 0; t < t_len; ++t) {
      x = 0.9 * x + std::sqrt(0.5) * rng.normal();
      ys.push_back(x + std::sqrt(0.2) * rng.normal());
    }
  }
  const auto kf = kalman_filter(model, 0.0, 1.0, ys);

  std::vector<double> s1(t_len, 0.0), s2(t_len, 0.0);
  for (std::size_t s = 0; s < seeds; ++s) {
    SirSettings settings;
    settings.n_particles = 5000;
    settings.init_mean = {0.0};
    settings.init_cov_diag = {1.0};
    settings.seed = 500 + s;
    const auto trace = run_sir(model, ys, settings);
    for (std::size_t t = 0; t < t_len; ++t) {
      s1[t] += trace.means[t][0];
      s2[t] += trace.means[t][0] * trace.means[t][0];
    }
  }
  const double n = static_cast<double>(seeds);
  for (std::size_t t = 0; t < t_len; ++t) {
    const double mean = s1[t] / n;
    const double sd = std::sqrt((s2[t] - n * mean * mean) / (n - 1.0));
    CHECK(std::abs(mean - kf.means[t]) <= 4.0 * sd / std::sqrt(n));
  }
}
