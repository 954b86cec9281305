#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "hdiff/particle_filter.hpp"

using namespace hdiff;

namespace {

// chi-square 0.999 quantiles
constexpr double kChi2_9dof = 27.877164871256568;
constexpr double kChi2_4dof = 18.46682695290317;

ParticleCloud cloud_of(const std::vector<std::vector<double>>& particles, std::vector<double> weights = {}) {
  ParticleCloud c(particles.size(), particles.front().size());
  for (std::size_t i = 0; i < particles.size(); ++i) {
    std::copy(particles[i].begin(), particles[i].end(), c.particle(i).begin());
  }
  if (!weights.empty()) std::copy(weights.begin(), weights.end(), c.weights().begin());
  return c;
}

PfConfig frozen_config(std::size_t n, std::vector<double> mean) {
  PfConfig c;
  c.n_particles = n;
  c.jitter_eps = 0.0;
  c.init_mean = mean;
  c.init_cov_diag.assign(mean.size(), 0.0);
  c.snapshot_times = {};
  return c;
}

double sum(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0); }

ParticleCloud random_cloud(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Stream rng(seed, StreamKind::test);
  ParticleCloud c(n, dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& z : c.particle(i)) z = rng.normal();
    c.weights()[i] = rng.uniform() + 0.01;
  }
  normalize_weights(c.weights());
  return c;
}

}  // namespace

TEST_CASE("initial cloud has uniform weights and the requested moments") {
  PfConfig c;
  c.n_particles = 20000;
  const auto cloud = initialize(c);
  REQUIRE(cloud.size() == 20000);
  REQUIRE(cloud.dim() == 4);
  for (double w : cloud.weights()) CHECK(w == 1.0 / 20000.0);
  for (std::size_t d = 0; d < 4; ++d) {
    double m = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < cloud.size(); ++i) m += cloud.particle(i)[d];
    m /= 20000.0;
    for (std::size_t i = 0; i < cloud.size(); ++i) s2 += std::pow(cloud.particle(i)[d] - m, 2);
    s2 /= 19999.0;
    const double var = c.init_cov_diag[d];
    CHECK(std::abs(m - c.init_mean[d]) < 4.0 * std::sqrt(var / 20000.0));
    CHECK(std::abs(s2 - var) < 4.0 * var * std::sqrt(2.0 / 19999.0));
  }
}

TEST_CASE("zero initial covariance puts every particle at the mean") {
  const auto cloud = initialize(frozen_config(5, {1.0, 2.0, 3.0, 4.0}));
  for (std::size_t i = 0; i < 5; ++i) CHECK(std::vector<double>(cloud.particle(i).begin(), cloud.particle(i).end()) == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("bad filter configurations are rejected") {
  PfConfig c;
  c.n_particles = 0;
  CHECK_THROWS_AS(initialize(c), ConfigError);
  c = PfConfig{};
  c.init_cov_diag = {1.0};
  CHECK_THROWS_AS(initialize(c), ConfigError);
  c = PfConfig{};
  c.obs_bandwidth = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = PfConfig{};
  c.jitter_eps = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(parse_resampling("stratified"), ConfigError);
}

TEST_CASE("propagation without noise follows each particle's own drift") {
  ModelSpec spec;
  auto cfg = frozen_config(3, {0.0, 0.0, 0.0, 0.0});
  auto cloud = cloud_of({{0.0, -0.1, 0.1, 0.0}, {8.0, -0.1, 0.1, 0.0}, {3.0, 0.5, -0.2, 0.0}});
  const auto next = propagate(cloud, spec, cfg, 1);
  CHECK(next.particle(0)[0] == doctest::Approx(-0.1));
  CHECK(next.particle(1)[0] == doctest::Approx(8.0));
  CHECK(next.particle(2)[0] == doctest::Approx(3.0 + 0.5 - 0.2 * std::sin(2.0 * std::numbers::pi * 3.0 / 32.0)));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t d = 1; d < 4; ++d) CHECK(next.particle(i)[d] == cloud.particle(i)[d]);
  }
  CHECK(std::vector<double>(next.weights().begin(), next.weights().end()) ==
        std::vector<double>(cloud.weights().begin(), cloud.weights().end()));
}

TEST_CASE("parameter jitter has standard deviation eps sqrt(dt)") {
  ModelSpec spec;
  spec.dt = 0.25;
  auto cfg = frozen_config(50000, {0.0, 0.0, 0.0, 0.0});
  cfg.jitter_eps = 0.02;
  const auto cloud = initialize(cfg);
  const auto next = propagate(cloud, spec, cfg, 7);
  const double target = 0.02 * 0.5;
  for (std::size_t d = 1; d < 4; ++d) {
    double s2 = 0.0;
    for (std::size_t i = 0; i < next.size(); ++i) s2 += std::pow(next.particle(i)[d], 2);
    const double sd = std::sqrt(s2 / 50000.0);
    CHECK(std::abs(sd - target) < 3.0 * target / std::sqrt(2.0 * 50000.0));
  }
}

TEST_CASE("state noise scales with the particle's sqrt(D)") {
  ModelSpec spec;
  spec.theta = {0.0};
  spec.dt = 2.0;
  auto cfg = frozen_config(50000, {0.0, 0.0, 0.6});
  const auto next = propagate(initialize(cfg), spec, cfg, 3);
  double s2 = 0.0;
  for (std::size_t i = 0; i < next.size(); ++i) s2 += std::pow(next.particle(i)[0], 2);
  const double var = 0.36 * 2.0;
  CHECK(std::abs(s2 / 50000.0 - var) < 3.0 * var * std::sqrt(2.0 / 50000.0));
}

TEST_CASE("serial and parallel kernels give bit-identical clouds") {
  ModelSpec spec;
  PfConfig cfg;
  cfg.n_particles = 3001;
  cfg.execution = Execution::serial;
  auto a = initialize(cfg);
  cfg.execution = Execution::parallel;
  auto b = initialize(cfg);
  REQUIRE(a == b);
  for (std::uint64_t t = 1; t <= 5; ++t) {
    cfg.execution = Execution::serial;
    a = weight(propagate(a, spec, cfg, t), 0.3, spec.period, cfg);
    cfg.execution = Execution::parallel;
    b = weight(propagate(b, spec, cfg, t), 0.3, spec.period, cfg);
    CHECK(a == b);
  }
}

TEST_CASE("weights favour particles consistent with the observation") {
  const double period = 32.0;
  PfConfig cfg;
  const auto c = weight(cloud_of({{0.0}, {period / 2.0}}), 1.0, period, cfg);
  CHECK(c.weights()[0] > c.weights()[1]);

  auto same = weight(cloud_of({{5.0}, {5.0}, {5.0}}), 0.2, period, cfg);
  for (double v : same.weights()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("weights are normalized Gaussian kernel values") {
  const double period = 32.0;
  PfConfig cfg;
  cfg.obs_bandwidth = 0.25;
  const auto c = weight(cloud_of({{0.0}, {period / 4.0}, {period / 2.0}}), 0.0, period, cfg);
  // residuals r = 0 - cos(...) are -1, 0, 1
  const double k1 = std::exp(-1.0 / 0.5), k0 = 1.0;
  const double z = 2.0 * k1 + k0;
  CHECK(c.weights()[0] == doctest::Approx(k1 / z).epsilon(1e-12));
  CHECK(c.weights()[1] == doctest::Approx(k0 / z).epsilon(1e-12));
  CHECK(c.weights()[2] == doctest::Approx(k1 / z).epsilon(1e-12));
  CHECK(sum(c.weights()) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("all-zero likelihoods signal a weight collapse") {
  PfConfig cfg;
  cfg.obs_bandwidth = 1e-6;
  CHECK_THROWS_AS(weight(cloud_of({{0.0}, {1.0}}), 50.0, 32.0, cfg), WeightCollapse);
  std::vector<double> zeros{0.0, 0.0};
  CHECK_THROWS_AS(normalize_weights(zeros), WeightCollapse);
}

TEST_CASE("sequential importance update") {
  auto u = sis_update(std::vector<double>{0.25, 0.25, 0.25, 0.25}, std::vector<double>{0.3, 0.3, 0.3, 0.3});
  for (double v : u) CHECK(v == doctest::Approx(0.25));

  auto absorb = sis_update(std::vector<double>{0.5, 0.5}, std::vector<double>{1.0, 0.0});
  CHECK(absorb == std::vector<double>{1.0, 0.0});

  auto hand = sis_update(std::vector<double>{0.2, 0.8}, std::vector<double>{0.5, 0.125});
  CHECK(hand[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(hand[1] == doctest::Approx(0.5).epsilon(1e-15));

  CHECK_THROWS_AS(sis_update(std::vector<double>{0.5, 0.5}, std::vector<double>{0.0, 0.0}), WeightCollapse);
  CHECK_THROWS_AS(sis_update(std::vector<double>{1.0}, std::vector<double>{1.0, 1.0}), std::invalid_argument);
}

TEST_CASE("degenerate weights resample the single survivor") {
  auto c = cloud_of({{1.0}, {2.0}, {3.0}, {4.0}}, {1.0, 0.0, 0.0, 0.0});
  for (auto scheme : {ResamplingScheme::multinomial, ResamplingScheme::systematic}) {
    Stream rng(1, StreamKind::test);
    const auto r = resample(c, scheme, rng);
    for (std::size_t i = 0; i < 4; ++i) CHECK(r.particle(i)[0] == 1.0);
    for (double w : r.weights()) CHECK(w == 0.25);
  }
}

TEST_CASE("uniform weights give one expected copy of each ancestor") {
  const std::size_t n = 10, reps = 10000;
  const std::vector<double> w(n, 0.1);
  std::vector<double> counts(n, 0.0);
  Stream rng(5, StreamKind::test);
  for (std::size_t r = 0; r < reps; ++r) {
    for (auto a : resample_indices(w, ResamplingScheme::multinomial, rng)) counts[a] += 1.0;
  }
  const double expected = static_cast<double>(reps);
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < kChi2_9dof);
}

TEST_CASE("systematic resampling keeps exactly one copy under uniform weights") {
  const std::vector<double> w(8, 0.125);
  Stream rng(2, StreamKind::test);
  for (int r = 0; r < 100; ++r) {
    auto a = resample_indices(w, ResamplingScheme::systematic, rng);
    std::sort(a.begin(), a.end());
    for (std::size_t i = 0; i < 8; ++i) CHECK(a[i] == i);
  }
}

TEST_CASE("ancestor frequency under weights (0.75, 0.25)") {
  const std::size_t reps = 100000;
  const std::vector<double> w{0.75, 0.25};
  Stream rng(9, StreamKind::test);
  std::size_t zero = 0;
  for (std::size_t r = 0; r < reps; ++r) {
    for (auto a : resample_indices(w, ResamplingScheme::multinomial, rng)) zero += a == 0;
  }
  const double draws = 2.0 * reps;
  const double p = static_cast<double>(zero) / draws;
  CHECK(std::abs(p - 0.75) < 3.0 * std::sqrt(0.75 * 0.25 / draws));
}

TEST_CASE("resampling is unbiased for an arbitrary weight vector") {
  const std::vector<double> w{0.05, 0.4, 0.1, 0.3, 0.15};
  const std::size_t reps = 20000;
  for (auto scheme : {ResamplingScheme::multinomial, ResamplingScheme::systematic}) {
    std::vector<double> counts(w.size(), 0.0);
    Stream rng(13, StreamKind::test);
    for (std::size_t r = 0; r < reps; ++r) {
      for (auto a : resample_indices(w, scheme, rng)) counts[a] += 1.0;
    }
    if (scheme == ResamplingScheme::multinomial) {
      double chi2 = 0.0;
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double e = static_cast<double>(reps * w.size()) * w[j];
        chi2 += (counts[j] - e) * (counts[j] - e) / e;
      }
      CHECK(chi2 < kChi2_4dof);
    } else {
      // systematic counts are floor or ceil of N w_j, so the mean is within
      // a Bernoulli standard error of N w_j
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double nw = static_cast<double>(w.size()) * w[j];
        const double mean = counts[j] / static_cast<double>(reps);
        const double frac = nw - std::floor(nw);
        CHECK(std::abs(mean - nw) <= 3.0 * std::sqrt(frac * (1.0 - frac) / static_cast<double>(reps)) + 1e-12);
      }
    }
  }
}

TEST_CASE("resampling rejects unnormalized weights") {
  Stream rng(1, StreamKind::test);
  CHECK_THROWS_AS(resample_indices(std::vector<double>{0.5, 0.6}, ResamplingScheme::multinomial, rng),
                  std::invalid_argument);
  CHECK_NOTHROW(resample_indices(std::vector<double>{0.5, 0.5 + 5e-10}, ResamplingScheme::multinomial, rng));
}

TEST_CASE("resampled clouds have normalized weights") {
  auto c = random_cloud(257, 3, 4);
  Stream rng(3, StreamKind::test);
  const auto r = resample(c, ResamplingScheme::multinomial, rng);
  CHECK(std::abs(sum(r.weights()) - 1.0) < 1e-12);
  CHECK(std::abs(sum(c.weights()) - 1.0) < 1e-12);
}

TEST_CASE("estimate examples") {
  const auto one = estimate(cloud_of({{2.5, -0.1, 0.2, 0.9}}, {1.0}));
  CHECK(one.x == 2.5);
  CHECK(one.params == std::vector<double>{-0.1, 0.2, 0.9});

  CHECK(estimate(cloud_of({{0.0}, {2.0}}, {0.5, 0.5})).x == 1.0);
  CHECK(estimate(cloud_of({{1.0}, {2.0}, {3.0}}, {0.25, 0.5, 0.25})).x == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("estimate is invariant under permutation and duplication") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto c = random_cloud(50, 4, seed);
    const auto base = weighted_mean(c);

    Stream rng(seed, StreamKind::test, 1);
    std::vector<std::size_t> perm(c.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    ParticleCloud p(c.size(), c.dim()), dup(2 * c.size(), c.dim());
    for (std::size_t i = 0; i < c.size(); ++i) {
      std::copy(c.particle(perm[i]).begin(), c.particle(perm[i]).end(), p.particle(i).begin());
      p.weights()[i] = c.weights()[perm[i]];
      for (std::size_t k : {2 * i, 2 * i + 1}) {
        std::copy(c.particle(i).begin(), c.particle(i).end(), dup.particle(k).begin());
        dup.weights()[k] = c.weights()[i] / 2.0;
      }
    }
    const auto mp = weighted_mean(p), md = weighted_mean(dup);
    for (std::size_t d = 0; d < c.dim(); ++d) {
      CHECK(mp[d] == doctest::Approx(base[d]).epsilon(1e-12));
      CHECK(md[d] == doctest::Approx(base[d]).epsilon(1e-12));
    }
  }
}

TEST_CASE("effective sample size") {
  CHECK(effective_sample_size(std::vector<double>(40, 0.025)) == doctest::Approx(40.0));
  CHECK(effective_sample_size(std::vector<double>{0.0, 1.0, 0.0}) == 1.0);
  CHECK(effective_sample_size(std::vector<double>{0.5, 0.25, 0.25}) == doctest::Approx(1.0 / 0.375));
}

TEST_CASE("density snapshot masses sum to one") {
  const auto c = random_cloud(1000, 4, 21);
  const auto snap = density_snapshot(c, 64, 10);
  REQUIRE(snap.mass.size() == 64);
  CHECK(sum(snap.mass) == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t b = 1; b < 64; ++b) CHECK(snap.bin_centers[b] > snap.bin_centers[b - 1]);

  const auto point = density_snapshot(cloud_of({{3.0}, {3.0}}), 16, 1);
  CHECK(point.mass == std::vector<double>{1.0});
  CHECK(point.bin_centers == std::vector<double>{3.0});
}

TEST_CASE("frozen filter on a consistent constant observation stays at the origin") {
  ModelSpec spec;
  spec.theta = {0.0, 0.0};
  auto cfg = frozen_config(50, {0.0, 0.0, 0.0, 0.0});
  const std::vector<double> ys(200, 1.0);
  const auto r = run_filter(ys, spec, cfg);
  REQUIRE(r.estimates.size() == 200);
  for (const auto& e : r.estimates) CHECK(std::abs(e.x) <= std::sqrt(cfg.obs_bandwidth));
  for (double e : r.ess) CHECK(e == doctest::Approx(50.0));
}

TEST_CASE("filter output is deterministic and independent of execution mode") {
  ModelSpec spec;
  const auto traj = simulate(spec, GaussianStart{}, 200, 31);
  const std::vector<double> ys(traj.observations.begin() + 1, traj.observations.end());
  PfConfig cfg;
  cfg.n_particles = 300;
  cfg.snapshot_times = {10, 100};
  const auto a = run_filter(ys, spec, cfg);
  const auto b = run_filter(ys, spec, cfg);
  cfg.execution = Execution::serial;
  const auto c = run_filter(ys, spec, cfg);

  std::ostringstream sa, sb, sc;
  write_estimates_csv(sa, a, spec.dt);
  write_estimates_csv(sb, b, spec.dt);
  write_estimates_csv(sc, c, spec.dt);
  CHECK(sa.str() == sb.str());
  CHECK(sa.str() == sc.str());
  CHECK(sa.str().rfind("t,x_hat,theta0_hat,theta1_hat,D_hat,ess\n", 0) == 0);

  REQUIRE(a.snapshots.size() == 2);
  CHECK(a.snapshots[0].t == 10);
  for (const auto& s : a.snapshots) CHECK(sum(s.mass) == doctest::Approx(1.0).epsilon(1e-12));
  for (double e : a.ess) {
    CHECK(e >= 1.0 - 1e-9);
    CHECK(e <= 300.0 + 1e-9);
  }
}

TEST_CASE("filter collapse reports the time index") {
  ModelSpec spec;
  auto cfg = frozen_config(20, {0.0, 0.0, 0.0, 0.0});
  cfg.obs_bandwidth = 1e-6;
  const std::vector<double> ys{1.0, 1.0, 40.0, 1.0};
  try {
    run_filter(ys, spec, cfg);
    FAIL("expected a weight collapse");
  } catch (const WeightCollapse& e) {
    CHECK(e.time() == 3);
  }
}

TEST_CASE("filter input errors") {
  ModelSpec spec;
  PfConfig cfg;
  CHECK_THROWS_AS(run_filter(std::vector<double>{}, spec, cfg), ConfigError);
  cfg.init_mean = {0.0, 0.0, 0.0};
  cfg.init_cov_diag = {1.0, 1.0, 1.0};
  CHECK_THROWS_AS(run_filter(std::vector<double>{1.0}, spec, cfg), ConfigError);
}
