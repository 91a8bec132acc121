#pragma once
#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "scorl/policy.hpp"
#include "scorl/schedule.hpp"

namespace scorl {

// One controlled reverse-SDE rollout on a grid with n steps. Node i carries
// reverse time t[i]; actions/log-densities/running rewards are per step
// (n entries), states are per node (n+1 rows). r[i] is already dt-weighted.
struct Trajectory {
  std::vector<double> t;
  Eigen::MatrixXd x;        // (n+1) x d
  Eigen::MatrixXd a;        // n x d
  Eigen::VectorXd logp;     // n
  Eigen::VectorXd r;        // n
  double h = 0.0;           // terminal reward
  Eigen::VectorXd returns;  // n+1, returns[i] = sum_{j >= i} r[j] + h
  int ctx = 0;

  int steps() const { return static_cast<int>(t.size()) - 1; }
  int dim() const { return static_cast<int>(x.cols()); }
  void compute_returns();
};

// per-time running reward RATE r(t, x, c); rollout multiplies by dt
using RunningReward = std::function<double(double t_rev, const Eigen::VectorXd& x, int c)>;

// Simulate the policy-controlled reverse SDE from x ~ N(0, I) at t = 0 to
// t = T with Euler-Maruyama steps. Every stochastic draw comes from the
// given seed, so a (seed, grid, policy) triple pins the trajectory exactly.
// Non-finite states abort with the offending step index in the message.
Trajectory rollout(const NoiseSchedule& sched, const TimeGrid& grid, const GaussianPolicy& pol,
                   int ctx, uint64_t seed, const RunningReward* rr = nullptr);

// Ancestral (per-step denoising) rollout where the policy mean plays the
// score. Transitions are x' ~ N((x + beta_i mu) / sqrt(1 - beta_i), beta_i I);
// logp[i] records the realized transition density, which is the quantity a
// discrete-time fine-tuner reweights. a[i] stores the mean-model output mu;
// the transition mean is recoverable from x[i] and beta_i.
Trajectory rollout_ddpm(const NoiseSchedule& sched, const TimeGrid& grid, const MeanModel& mean,
                        int ctx, uint64_t seed);

// n_traj independent rollouts with per-trajectory derived seeds; identical
// results for any n_threads. Thrown rollout errors are re-thrown on join.
std::vector<Trajectory> collect_round(const NoiseSchedule& sched, const TimeGrid& grid,
                                      const GaussianPolicy& pol, int ctx, int n_traj,
                                      uint64_t base_seed, int n_threads = 1,
                                      const RunningReward* rr = nullptr);

// columnar binary serialization for replay
void save_trajectory(const std::string& path, const Trajectory& traj);
Trajectory load_trajectory(const std::string& path);

}  // namespace scorl
