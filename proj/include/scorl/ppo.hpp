#pragma once
// Proximal policy update over advantage-rate records.
//
// A record is one (state, pseudo action, old log-density, advantage rate,
// grid weight) tuple. The surrogate is the grid-weighted clipped objective
// averaged over records, maximized by minibatch ascent on the mean network.
// The value function enters only through a std::function so analytic values
// can stand in for trained ones in tests.

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "scorl/policy.hpp"
#include "scorl/schedule.hpp"
#include "scorl/trajectory.hpp"

namespace scorl {

struct AdvantageRecord {
  double t = 0.0;  // reverse time of the visited state
  Eigen::VectorXd x;
  int c = -1;
  Eigen::VectorXd a;      // pseudo action the surrogate evaluates
  double logp_old = 0.0;  // log-density of a under the collection policy
  double q = 0.0;         // advantage rate at (t, x, a)
  double dt = 0.0;        // width of the source grid step
  int traj = 0;           // source trajectory, for per-trajectory statistics
};

using ValueFn = std::function<double(double, const Eigen::VectorXd&, int)>;

struct AdvantageConfig {
  int n_pseudo = 4;             // pseudo actions per visited state
  double eta = 1e-2;            // probe length of the value finite difference
  bool raw_action_dir = false;  // probe along the pseudo action itself
  double beta_kl = 0.0;         // weight of the action-space proximity penalty
  const MeanModel* reference = nullptr;  // pretrained mean, required when beta_kl > 0
  std::uint64_t seed = 0;
};

// Pseudo actions a_ij = a_i + sigma * eps_j around each executed action. The
// advantage rate is a one-sided difference of the value along the exploration
// direction, plus the action-dependent part of the running reward:
//   q_ij = (V(t, x + eta g^2 dir_j) - V(t, x)) / eta
//          - (beta_kl / 2) g^2 |a_ij - mu_ref(t, x)|^2
// with dir_j = eps_j by default, or a_ij under raw_action_dir. Baseline V(t,x)
// is shared across the pseudo actions of a state.
std::vector<AdvantageRecord> build_advantage_dataset(const NoiseSchedule& sched,
                                                     const std::vector<Trajectory>& trajs,
                                                     const GaussianPolicy& pol,
                                                     const ValueFn& value,
                                                     const AdvantageConfig& cfg);

// One record per executed step, no pseudo sampling: the probe direction is
// recovered from the stored action ((a - mu) / sigma, or a itself under
// raw_action_dir) and logp_old comes from the rollout. Used by estimator
// checks that need records distributed exactly as the policy plays.
std::vector<AdvantageRecord> records_from_executed(const NoiseSchedule& sched,
                                                   const std::vector<Trajectory>& trajs,
                                                   const GaussianPolicy& pol,
                                                   const ValueFn& value,
                                                   const AdvantageConfig& cfg);

// min(ratio * q, clip(ratio, 1 - eps, 1 + eps) * q). Sets *unclipped when the
// unclipped branch attains the min (ties included); only then does gradient
// flow through ratio.
double clipped_term(double ratio, double q, double clip, bool* unclipped = nullptr);

// Mean over records of dt * clipped_term. When grad is non-null, adds the
// ascent gradient with respect to the mean-network parameters.
double ppo_surrogate(const NetMean& mean, double sigma_expl,
                     const std::vector<AdvantageRecord>& recs, double clip,
                     Eigen::VectorXd* grad = nullptr);

// Score-function estimator at the current parameters:
//   mean over records of dt * q * d log pi(a | t, x) / d theta.
// Equals the surrogate gradient whenever every ratio is 1 (tangency).
Eigen::VectorXd policy_gradient_from_records(const NetMean& mean, double sigma_expl,
                                             const std::vector<AdvantageRecord>& recs);

// Same estimator for a policy whose mean is a learned constant shift of some
// base (d mean / d theta = identity). Returns one row per trajectory, summed
// over that trajectory's records, so callers can form standard errors; the
// estimate itself is the column mean.
Eigen::MatrixXd shift_gradient_per_traj(const GaussianPolicy& pol,
                                        const std::vector<AdvantageRecord>& recs, int n_traj);

// End-to-end shift-family gradient estimate from collected rollouts: builds
// executed-action records against the given value probe, then averages the
// per-trajectory score-function rows. Optional per_traj output for standard
// errors. Unbiasedness requires cfg.raw_action_dir; the centered direction
// rescales the estimate by 1 / sigma.
Eigen::VectorXd policy_gradient_estimate(const NoiseSchedule& sched,
                                         const std::vector<Trajectory>& trajs,
                                         const GaussianPolicy& pol, const ValueFn& value,
                                         const AdvantageConfig& cfg,
                                         Eigen::MatrixXd* per_traj = nullptr);

struct PPOConfig {
  double clip = 0.1;
  double lr = 1e-4;
  int epochs = 4;
  int batch = 256;
  std::uint64_t seed = 0;
};

struct PPOReport {
  double surrogate_init = 0.0;
  double surrogate_final = 0.0;
  bool diverged = false;
};

PPOReport ppo_update(NetMean& mean, double sigma_expl, const std::vector<AdvantageRecord>& recs,
                     const PPOConfig& cfg);

}  // namespace scorl
