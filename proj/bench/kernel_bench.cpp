// Serial reference vs OpenMP particle kernels on the augmented periodic model.
//
//   kernel_bench [n_particles] [steps]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <vector>

#include <omp.h>

#include "hdiff/particle_filter.hpp"

namespace {

template <class F>
double time_ms(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  const std::size_t n = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 200000;
  const std::size_t steps = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 50;

  hdiff::ModelSpec spec;
  hdiff::PfConfig config;
  config.n_particles = n;
  const auto model = hdiff::PeriodicModel::from(spec, config);
  const hdiff::ParticleCloud start = hdiff::initialize(config);
  std::vector<double> lik(n);

  hdiff::ParticleCloud serial_cloud = start;
  const double serial_ms = time_ms([&] {
    for (std::size_t t = 1; t <= steps; ++t) {
      hdiff::kernels::serial::propagate(serial_cloud, model, config.seed, t);
      hdiff::kernels::serial::likelihoods(serial_cloud, model, 0.5, lik);
    }
  });

  hdiff::ParticleCloud omp_cloud = start;
  const double omp_ms = time_ms([&] {
    for (std::size_t t = 1; t <= steps; ++t) {
      hdiff::kernels::omp::propagate(omp_cloud, model, config.seed, t);
      hdiff::kernels::omp::likelihoods(omp_cloud, model, 0.5, lik);
    }
  });

  std::printf("particles %zu  steps %zu  threads %d\n", n, steps, omp_get_max_threads());
  std::printf("serial  %10.2f ms\n", serial_ms);
  std::printf("openmp  %10.2f ms  (speedup %.2fx)\n", omp_ms, serial_ms / omp_ms);
  std::printf("identical clouds: %s\n", serial_cloud == omp_cloud ? "yes" : "NO");
  return serial_cloud == omp_cloud ? 0 : 1;
}
