#pragma once

#include <span>
#include <vector>

#include "hdiff/particle_filter.hpp"

namespace hdiff {

struct KalmanResult {
  std::vector<double> means;
  std::vector<double> variances;
};

/// Exact filtering posterior of the scalar linear-Gaussian model. For each
/// observation: predict (a, q), then update (h, r). Same time convention as
/// run_sir: observations[k] is at t = k + 1, the prior describes t = 0.
KalmanResult kalman_filter(const LinearGaussianModel& model, double init_mean, double init_var,
                           std::span<const double> observations);

}  // namespace hdiff
