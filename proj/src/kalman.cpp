#include "hdiff/kalman.hpp"

#include "hdiff/errors.hpp"

namespace hdiff {

KalmanResult kalman_filter(const LinearGaussianModel& model, double init_mean, double init_var,
                           std::span<const double> observations) {
  if (!(model.q >= 0.0) || !(model.r > 0.0) || !(init_var >= 0.0)) {
    throw ConfigError("kalman: variances must be positive");
  }
  KalmanResult out;
  out.means.reserve(observations.size());
  out.variances.reserve(observations.size());
  double m = init_mean, p = init_var;
  for (double y : observations) {
    m = model.a * m;
    p = model.a * model.a * p + model.q;
    const double s = model.h * model.h * p + model.r;
    const double gain = p * model.h / s;
    m += gain * (y - model.h * m);
    p = (1.0 - gain * model.h) * p;
    out.means.push_back(m);
    out.variances.push_back(p);
  }
  return out;
}

}  // namespace hdiff
