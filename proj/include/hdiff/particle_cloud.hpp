#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace hdiff {

/// Weighted particle ensemble stored row-major: particle i occupies
/// coordinates [i*dim, (i+1)*dim). For the augmented periodic model
/// coordinate 0 is x and the rest are (theta_0..theta_K, sqrt(D)).
class ParticleCloud {
 public:
  ParticleCloud() = default;
  ParticleCloud(std::size_t n_particles, std::size_t dim)
      : dim_(dim),
        states_(n_particles * dim, 0.0),
        weights_(n_particles, n_particles ? 1.0 / static_cast<double>(n_particles) : 0.0) {}

  std::size_t size() const { return weights_.size(); }
  std::size_t dim() const { return dim_; }

  std::span<double> particle(std::size_t i) {
    assert(i < size());
    return {states_.data() + i * dim_, dim_};
  }
  std::span<const double> particle(std::size_t i) const {
    assert(i < size());
    return {states_.data() + i * dim_, dim_};
  }

  std::span<double> weights() { return weights_; }
  std::span<const double> weights() const { return weights_; }

  std::span<const double> states() const { return states_; }

  void set_uniform_weights() {
    const double w = size() ? 1.0 / static_cast<double>(size()) : 0.0;
    for (auto& x : weights_) x = w;
  }

  friend bool operator==(const ParticleCloud&, const ParticleCloud&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<double> states_;
  std::vector<double> weights_;
};

}  // namespace hdiff
