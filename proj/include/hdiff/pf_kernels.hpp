#pragma once

// Per-particle kernels. `serial` is the reference implementation; `omp`
// distributes particles over threads. Each particle draws from a stream
// addressed by (seed, step, particle index), so both produce bit-identical
// clouds regardless of thread count or scheduling.

#include <concepts>
#include <cstdint>
#include <span>

#include "hdiff/particle_cloud.hpp"
#include "hdiff/rng.hpp"

namespace hdiff {

/// A state-space model the SIR filter can run on.
template <class M>
concept StateSpaceModel = requires(const M& m, std::span<double> z, std::span<const double> cz,
                                   Stream& rng, double y) {
  { m.advance(z, rng) };
  { m.likelihood(cz, y) } -> std::convertible_to<double>;
};

enum class Execution { serial, parallel };

namespace kernels {

namespace serial {

template <StateSpaceModel M>
void propagate(ParticleCloud& cloud, const M& model, std::uint64_t seed, std::uint64_t step) {
  const std::size_t n = cloud.size();
  for (std::size_t i = 0; i < n; ++i) {
    Stream rng(seed, StreamKind::pf_propagate, step, i);
    model.advance(cloud.particle(i), rng);
  }
}

template <StateSpaceModel M>
void likelihoods(const ParticleCloud& cloud, const M& model, double y, std::span<double> out) {
  const std::size_t n = cloud.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = model.likelihood(cloud.particle(i), y);
}

}  // namespace serial

namespace omp {

template <StateSpaceModel M>
void propagate(ParticleCloud& cloud, const M& model, std::uint64_t seed, std::uint64_t step) {
  const auto n = static_cast<std::int64_t>(cloud.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    Stream rng(seed, StreamKind::pf_propagate, step, idx);
    model.advance(cloud.particle(idx), rng);
  }
}

template <StateSpaceModel M>
void likelihoods(const ParticleCloud& cloud, const M& model, double y, std::span<double> out) {
  const auto n = static_cast<std::int64_t>(cloud.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    out[idx] = model.likelihood(cloud.particle(idx), y);
  }
}

}  // namespace omp

template <StateSpaceModel M>
void propagate(ParticleCloud& cloud, const M& model, std::uint64_t seed, std::uint64_t step,
               Execution exec) {
  if (exec == Execution::parallel) {
    omp::propagate(cloud, model, seed, step);
  } else {
    serial::propagate(cloud, model, seed, step);
  }
}

template <StateSpaceModel M>
void likelihoods(const ParticleCloud& cloud, const M& model, double y, std::span<double> out,
                 Execution exec) {
  if (exec == Execution::parallel) {
    omp::likelihoods(cloud, model, y, out);
  } else {
    serial::likelihoods(cloud, model, y, out);
  }
}

}  // namespace kernels
}  // namespace hdiff
