#pragma once
// Closed-form references for tests and calibration. Everything here is
// derived independently of the sampler and training code: moment recursions
// act on the affine step maps directly, mixture quantities come from
// responsibility algebra, and the LQ solvers are plain backward dynamic
// programming on quadratics. Nothing in this header feeds gradients back
// into training.

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "scorl/policy.hpp"
#include "scorl/reward.hpp"
#include "scorl/schedule.hpp"
#include "scorl/trajectory.hpp"

namespace scorl::oracle {

// ---- isotropic Gaussian mixtures ------------------------------------------

struct MixtureComponent {
  double w = 1.0;
  Eigen::VectorXd mean;
  double std = 1.0;
};

struct GaussianMixture {
  std::vector<MixtureComponent> comps;

  int dim() const { return comps.empty() ? 0 : static_cast<int>(comps[0].mean.size()); }
  double log_density(const Eigen::VectorXd& x) const;
  Eigen::VectorXd score(const Eigen::VectorXd& x) const;
  Eigen::VectorXd responsibilities(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd sample(int n, std::uint64_t seed) const;

  // law of alpha(t) X0 + sigma(t) Z, still a mixture of isotropic Gaussians
  GaussianMixture diffused(const NoiseSchedule& sched, double t_fwd) const;

  // E[X0 | X_t = x], responsibility-weighted per-component posterior means
  Eigen::VectorXd posterior_mean(const NoiseSchedule& sched, double t_fwd,
                                 const Eigen::VectorXd& x) const;
};

GaussianMixture two_modes(double offset, double std, int dim = 2);

// Optimal action: the diffused mixture's score at the state's forward time.
struct MixtureScoreMean final : MeanModel {
  const GaussianMixture* mix = nullptr;
  const NoiseSchedule* sched = nullptr;

  MixtureScoreMean(const GaussianMixture* m, const NoiseSchedule* s) : mix(m), sched(s) {}
  Eigen::VectorXd mean(double t_rev, const Eigen::VectorXd& x, int) const override {
    return mix->diffused(*sched, sched->T - t_rev).score(x);
  }
  int dim() const override { return mix->dim(); }
};

// ---- affine-drift moment transport ----------------------------------------

// mu(t, x) = S(t) x + v(t) in reverse time; the controlled drift is then
// 0.5 beta (T - t) x + beta (T - t) mu(t, x), affine as well.
struct AffineMean {
  std::function<Eigen::MatrixXd(double)> S;
  std::function<Eigen::VectorXd(double)> v;
};

struct AffineMeanModel final : MeanModel {
  const AffineMean* aff = nullptr;
  int d = 0;

  AffineMeanModel(const AffineMean* a, int dim_) : aff(a), d(dim_) {}
  Eigen::VectorXd mean(double t_rev, const Eigen::VectorXd& x, int) const override {
    return aff->S(t_rev) * x + aff->v(t_rev);
  }
  int dim() const override { return d; }
};

struct GaussianMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Exact first and second moments of the Euler chain / ancestral chain driven
// by an affine mean, step by step on the given grid.
GaussianMoments em_chain_moments(const NoiseSchedule& sched, const TimeGrid& grid,
                                 const AffineMean& mu, GaussianMoments init);
GaussianMoments ddpm_chain_moments(const NoiseSchedule& sched, const TimeGrid& grid,
                                   const AffineMean& mu, GaussianMoments init);

// Continuous-time moment ODEs integrated with RK4 from t0 to t1 (reverse time).
GaussianMoments reverse_ode_moments(const NoiseSchedule& sched, const AffineMean& mu,
                                    GaussianMoments init, double t0, double t1, int substeps);

// Fundamental matrix Phi(t1, t0) of the affine reverse drift, RK4.
Eigen::MatrixXd transition_matrix(const NoiseSchedule& sched, const AffineMean& mu, double t0,
                                  double t1, int d, int substeps);

double gaussian_kl(const GaussianMoments& p, const GaussianMoments& q);

// Pathwise KL of a constant action shift delta against its base policy:
// 0.5 |delta|^2 * integral of beta over [0, T], independent of the path.
double shift_path_kl(const NoiseSchedule& sched, const Eigen::VectorXd& delta);

// Both ends of the data-processing chain for a constant shift on top of the
// exact score of N(m0, s0^2 I) data: the closed-form path KL above, and the
// KL between the terminal laws obtained from the moment ODEs. terminal_kl
// <= path_kl always holds for the exact laws; RK4 keeps the gap honest.
struct ShiftKlReport {
  double path_kl = 0.0;
  double terminal_kl = 0.0;
};
ShiftKlReport gaussian_shift_kl(const NoiseSchedule& sched, const Eigen::VectorXd& m0, double s0,
                                const Eigen::VectorXd& delta, int substeps = 2000);

// Exact endpoint of the deterministic transport map for N(m, s^2 I) data:
// quantiles are preserved, so x(0) = m + (s / rho_T)(x_T - alpha_T m) with
// rho_T^2 = alpha_T^2 s^2 + sigma_T^2.
Eigen::VectorXd flow_endpoint_gaussian(const NoiseSchedule& sched, const Eigen::VectorXd& m,
                                       double s, const Eigen::VectorXd& x_start);

// ---- scalar linear-quadratic ladder ---------------------------------------

struct LQStep {
  double f = 0.0, b = 1.0;  // x' = x + (f x + b a) dt + noise sqrt(dt) z
  double noise = 1.0;
  double dt = 0.1;
  double rx2 = 0.0, rx = 0.0, ra2 = 0.0, ra = 0.0;  // running reward rate
};

struct LQPolicyLin {
  double k = 0.0, c = 0.0;  // a = k x + c + sigma xi
  double sigma = 0.0;
};

struct LQValue {
  double P = 0.0, Q = 0.0, R = 0.0;
  double eval(double x) const { return (P * x + Q) * x + R; }
};

struct LQTerminal {
  double x2 = 0.0, x1 = 0.0, x0 = 0.0;
};

// V_i under a fixed linear policy, i = 0..n (n+1 entries, last is terminal).
std::vector<LQValue> lq_policy_values(const std::vector<LQStep>& steps, const LQPolicyLin& pol,
                                      const LQTerminal& term);

// q_i(x, a) = r_i(x, a) + (E[V_{i+1}(x') | x, a] - V_i(x)) / dt. With values
// from lq_policy_values, E[q] along the policy's own actions is exactly 0.
double lq_q_rate(const LQStep& step, const LQValue& next, const LQValue& cur, double x, double a);

// Optimal linear policy per step under a fixed exploration width.
std::vector<LQPolicyLin> lq_optimal(const std::vector<LQStep>& steps, const LQTerminal& term,
                                    double sigma_expl, std::vector<LQValue>* values = nullptr);

// ---- simulation-side gradient reference ------------------------------------

// Central-difference gradient of the simulated objective for the constant
// shift family (base mean plus theta), common random numbers across the two
// sides of every difference. Row i is replicate i's full-gradient estimate.
// The objective is terminal reward plus, when beta_kl > 0, the action-form
// proximity penalty against the base mean.
Eigen::MatrixXd fd_shift_gradient_samples(const NoiseSchedule& sched, const TimeGrid& grid,
                                          const MeanModel& base, const Eigen::VectorXd& theta,
                                          double sigma_expl, const RewardModel& rm, int ctx,
                                          double beta_kl, double h, int n_rep,
                                          std::uint64_t seed);

// The same objective evaluated once per replicate at a fixed theta.
Eigen::VectorXd shift_objective_samples(const NoiseSchedule& sched, const TimeGrid& grid,
                                        const MeanModel& base, const Eigen::VectorXd& theta,
                                        double sigma_expl, const RewardModel& rm, int ctx,
                                        double beta_kl, int n_rep, std::uint64_t seed);

}  // namespace scorl::oracle
