#pragma once
#include <Eigen/Core>

#include "scorl/schedule.hpp"

namespace scorl {

// State of a reverse-time sampling run. t is REVERSE time: t = 0 is the
// noise end (x ~ N(0, I)), t = T is the data end. Forward-time schedule
// lookups happen inside each step function via tau = T - t.
struct SDEState {
  double t = 0.0;
  Eigen::VectorXd x;
};

// Forward noising at forward time t: x_t = alpha(t) x0 + sigma(t) eps.
Eigen::VectorXd forward_perturb(const NoiseSchedule& sched, double t, const Eigen::VectorXd& x0,
                                const Eigen::VectorXd& eps);

// Controlled reverse drift with the action in score units:
//   b(t, x, a) = 0.5 beta(T-t) x + beta(T-t) a.
// With a equal to the true score of the forward marginal at T-t this is the
// exact reverse-time drift of the noising SDE.
Eigen::VectorXd reverse_drift(const NoiseSchedule& sched, double t, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& a);

// One Euler-Maruyama step of the controlled reverse SDE. z is a standard
// normal draw; passing it in keeps the kernels deterministic and lets tests
// share noise across discretizations.
SDEState em_step(const NoiseSchedule& sched, const SDEState& s, const Eigen::VectorXd& a,
                 double dt, const Eigen::VectorXd& z);

// One ancestral denoising step with per-step beta_i = beta(T-t) dt:
//   x' = (x + beta_i * score) / sqrt(1 - beta_i) + sqrt(beta_i) z.
// Requires beta_i < 1; the guard trips on absurdly coarse grids.
SDEState ddpm_step(const NoiseSchedule& sched, const SDEState& s, const Eigen::VectorXd& score,
                   double dt, const Eigen::VectorXd& z);

// Deterministic denoising step between two reverse times t < t_next, driven
// by a denoised-state prediction x_hat (E[x0 | x_t] or a model of it):
//   x' = (sigma_s / sigma_t) (x - alpha_t x_hat) + alpha_s x_hat
// with alpha/sigma evaluated at the forward images of the two times.
SDEState ddim_step(const NoiseSchedule& sched, const SDEState& s, const Eigen::VectorXd& x_hat,
                   double t_next);

}  // namespace scorl
