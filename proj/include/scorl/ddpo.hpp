#pragma once
// Discrete-time fine-tuning baseline. The sampler chain is treated as a
// fixed-horizon MDP: each denoising transition is a Gaussian step whose
// log-likelihood is reweighted PPO-style, with the trajectory's centered
// terminal reward as the advantage for every step. No running reward, no
// value function, no grid weighting; what it learns is tied to the grid it
// was trained on.

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "scorl/policy.hpp"
#include "scorl/reward.hpp"
#include "scorl/schedule.hpp"
#include "scorl/train.hpp"
#include "scorl/trajectory.hpp"

namespace scorl {

struct DDPORecord {
  double t = 0.0;  // reverse time at the start of the transition
  double dt = 0.0;
  Eigen::VectorXd x;
  Eigen::VectorXd x_next;
  int c = 0;
  double logp_old = 0.0;  // transition log-likelihood at collection time
  double adv = 0.0;       // centered terminal reward of the source trajectory
};

struct DDPOConfig {
  int rounds = 20;
  int n_traj = 32;
  int ctx = 0;
  std::uint64_t seed = 0;
  PPOConfig ppo;
};

std::vector<DDPORecord> build_ddpo_dataset(const std::vector<Trajectory>& trajs);

// Mean over records of the clipped objective on transition likelihood
// ratios. When grad is non-null, adds the ascent gradient for the mean net.
double ddpo_surrogate(const NoiseSchedule& sched, const NetMean& mean,
                      const std::vector<DDPORecord>& recs, double clip,
                      Eigen::VectorXd* grad = nullptr);

class DDPOTrainer {
 public:
  DDPOTrainer(const NoiseSchedule& sched, const TimeGrid& grid, const MLPSpec& policy_spec,
              const Eigen::VectorXd& pretrained, const RewardModel& rm, const DDPOConfig& cfg);

  RoundMetrics run_round();

  const NetMean& policy_mean() const { return mean_; }
  NetMean& policy_mean() { return mean_; }
  int round() const { return round_; }

  void save_run_state(const std::string& path) const;
  void load_run_state(const std::string& path);

 private:
  NoiseSchedule sched_;
  TimeGrid grid_;
  DDPOConfig cfg_;
  RewardModel rm_;
  NetMean mean_;
  NetMean ref_mean_;
  int round_ = 0;
};

}  // namespace scorl
