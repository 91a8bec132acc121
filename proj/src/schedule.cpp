#include "scorl/schedule.hpp"

#include <cmath>

#include "scorl/errors.hpp"

namespace scorl {

NoiseSchedule::NoiseSchedule(double bmin, double bmax, double horizon)
    : beta_min(bmin), beta_max(bmax), T(horizon) {
  if (!(beta_min > 0.0)) throw ConfigError("schedule: beta_min must be > 0");
  if (!(beta_max >= beta_min)) throw ConfigError("schedule: beta_max must be >= beta_min");
  if (!(T > 0.0)) throw ConfigError("schedule: T must be > 0");
}

double NoiseSchedule::alpha(double t) const { return std::exp(-0.5 * beta_integral(t)); }

double NoiseSchedule::sigma(double t) const {
  // 1 - alpha^2 = 1 - exp(-B) = -expm1(-B); the expm1 form keeps sigma
  // accurate near t = 0 where alpha is within ulps of 1.
  return std::sqrt(-std::expm1(-beta_integral(t)));
}

double NoiseSchedule::g(double t) const { return std::sqrt(beta(t)); }

TimeGrid TimeGrid::uniform(double T, int n_steps) {
  if (n_steps < 1) throw ConfigError("time grid: need at least one step");
  TimeGrid grid;
  grid.nodes.resize(n_steps + 1);
  for (int i = 0; i <= n_steps; ++i) grid.nodes[i] = T * static_cast<double>(i) / n_steps;
  grid.nodes[0] = 0.0;
  grid.nodes[n_steps] = T;  // exact endpoints regardless of division rounding
  return grid;
}

}  // namespace scorl
