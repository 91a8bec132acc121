#pragma once
#include <vector>

namespace scorl {

// Variance-preserving forward noising with a linear beta ramp.
//
//   dX = -0.5 beta(t) X dt + sqrt(beta(t)) dB,  t in [0, T] forward time.
//
// alpha(t) = exp(-0.5 int_0^t beta), sigma(t) = sqrt(1 - alpha^2), so
// alpha^2 + sigma^2 = 1 for all t. The integral is closed form for the
// linear ramp; no quadrature anywhere in the hot path.
//
// Convention used across the codebase: all schedule accessors take FORWARD
// time. Reverse-time operations (sampling runs t: 0 -> T) convert via
// tau = T - t exactly once, inside the operation that needs it. Call sites
// never pre-convert.
struct NoiseSchedule {
  double beta_min = 0.1;
  double beta_max = 20.0;
  double T = 1.0;

  NoiseSchedule() = default;
  NoiseSchedule(double bmin, double bmax, double horizon);

  double beta(double t) const { return beta_min + (beta_max - beta_min) * t / T; }
  double beta_integral(double t) const {
    return beta_min * t + 0.5 * (beta_max - beta_min) * t * t / T;
  }
  double alpha(double t) const;
  double sigma(double t) const;
  double g(double t) const;  // diffusion coefficient sqrt(beta(t))
};

// Discretization grid over [0, T], nodes strictly increasing with exact
// endpoints. Grids are owned by experiments, not by the schedule: the same
// schedule is sampled at many resolutions.
struct TimeGrid {
  std::vector<double> nodes;

  static TimeGrid uniform(double T, int n_steps);

  int steps() const { return static_cast<int>(nodes.size()) - 1; }
  double dt(int i) const { return nodes[i + 1] - nodes[i]; }
};

}  // namespace scorl
