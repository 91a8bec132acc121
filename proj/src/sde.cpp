#include "scorl/sde.hpp"

#include <cmath>
#include <string>

#include "scorl/errors.hpp"

namespace scorl {

Eigen::VectorXd forward_perturb(const NoiseSchedule& sched, double t, const Eigen::VectorXd& x0,
                                const Eigen::VectorXd& eps) {
  if (t < 0.0 || t > sched.T) throw NumericError("forward_perturb: t outside [0, T]");
  return sched.alpha(t) * x0 + sched.sigma(t) * eps;
}

Eigen::VectorXd reverse_drift(const NoiseSchedule& sched, double t, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& a) {
  const double b = sched.beta(sched.T - t);
  return 0.5 * b * x + b * a;
}

SDEState em_step(const NoiseSchedule& sched, const SDEState& s, const Eigen::VectorXd& a,
                 double dt, const Eigen::VectorXd& z) {
  if (!(dt > 0.0)) throw NumericError("em_step: dt must be > 0");
  if (s.t + dt > sched.T + 1e-12) throw NumericError("em_step: step leaves [0, T]");
  const double gr = sched.g(sched.T - s.t);
  SDEState out;
  out.t = s.t + dt;
  out.x = s.x + reverse_drift(sched, s.t, s.x, a) * dt + gr * std::sqrt(dt) * z;
  return out;
}

SDEState ddpm_step(const NoiseSchedule& sched, const SDEState& s, const Eigen::VectorXd& score,
                   double dt, const Eigen::VectorXd& z) {
  if (!(dt > 0.0)) throw NumericError("ddpm_step: dt must be > 0");
  const double beta_i = sched.beta(sched.T - s.t) * dt;
  if (beta_i >= 1.0)
    throw NumericError("ddpm_step: per-step beta " + std::to_string(beta_i) + " >= 1, grid too coarse");
  SDEState out;
  out.t = s.t + dt;
  out.x = (s.x + beta_i * score) / std::sqrt(1.0 - beta_i) + std::sqrt(beta_i) * z;
  return out;
}

SDEState ddim_step(const NoiseSchedule& sched, const SDEState& s, const Eigen::VectorXd& x_hat,
                   double t_next) {
  if (t_next < s.t) throw NumericError("ddim_step: t_next must be >= current t");
  if (t_next > sched.T + 1e-12) throw NumericError("ddim_step: t_next outside [0, T]");
  const double tau_t = sched.T - s.t;
  const double tau_s = sched.T - t_next;
  const double sigma_t = sched.sigma(tau_t);
  if (sigma_t == 0.0) throw NumericError("ddim_step: sigma = 0 at current time, nothing to denoise");
  const double ratio = sched.sigma(tau_s) / sigma_t;
  SDEState out;
  out.t = t_next;
  out.x = ratio * (s.x - sched.alpha(tau_t) * x_hat) + sched.alpha(tau_s) * x_hat;
  return out;
}

}  // namespace scorl
