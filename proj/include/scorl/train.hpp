#pragma once
// Outer fine-tuning loop. One round: collect rollouts under the current
// policy, refit the structured value on empirical returns, score pseudo
// actions against it, run the clipped policy update, emit one metrics row.
// Every stochastic stage reseeds from (seed, stage tag, round), so a run is
// a pure function of its config and resuming from saved state is exact.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "scorl/policy.hpp"
#include "scorl/ppo.hpp"
#include "scorl/reward.hpp"
#include "scorl/schedule.hpp"
#include "scorl/score_model.hpp"
#include "scorl/sde.hpp"
#include "scorl/trajectory.hpp"
#include "scorl/value_net.hpp"

namespace scorl {

struct CTRLConfig {
  int rounds = 20;
  int n_traj = 32;
  int n_pseudo = 4;
  double eta = 1e-2;
  bool raw_action_dir = false;
  double beta_kl = 0.0;
  double sigma_expl = 0.1;
  int ctx = 0;
  int n_threads = 1;
  std::uint64_t seed = 0;
  ValueFitConfig value_fit;
  PPOConfig ppo;
};

struct RoundMetrics {
  int round = 0;
  double mean_terminal_reward = 0.0;
  double kl_path = 0.0;     // vs the frozen reference, beta excluded
  double value_mse = 0.0;   // holdout after the round's fit
  double surrogate = 0.0;   // clipped objective after the round's update
  double wallclock_s = 0.0;
};

class CTRLTrainer {
 public:
  // pretrained holds the score parameters; the policy mean starts from them
  // and the frozen copy doubles as the KL reference
  CTRLTrainer(const NoiseSchedule& sched, const TimeGrid& grid, const MLPSpec& policy_spec,
              const Eigen::VectorXd& pretrained, const RewardModel& rm,
              const MLPSpec& value_spec, const CTRLConfig& cfg);

  RoundMetrics run_round();

  GaussianPolicy policy() const { return GaussianPolicy{&mean_, cfg_.sigma_expl}; }
  const NetMean& policy_mean() const { return mean_; }
  NetMean& policy_mean() { return mean_; }
  const NetMean& reference_mean() const { return ref_mean_; }
  ValueNet& value() { return vnet_; }
  const ValueNet& value() const { return vnet_; }
  int round() const { return round_; }
  const CTRLConfig& config() const { return cfg_; }

  // full-precision snapshot of everything a later round depends on
  void save_run_state(const std::string& path) const;
  void load_run_state(const std::string& path);

 private:
  NoiseSchedule sched_;
  TimeGrid grid_;
  CTRLConfig cfg_;
  RewardModel rm_;
  NetMean mean_;      // trainable policy mean
  NetMean ref_mean_;  // frozen pretrained mean
  ScoreNet denoiser_; // forward-time view of mean_, resynced each round
  ValueNet vnet_;
  int round_ = 0;
};

// Reverse-SDE sampler: Euler rollouts with the mean net as the action, no
// exploration noise. Rows are terminal states.
Eigen::MatrixXd sample_em(const NoiseSchedule& sched, const TimeGrid& grid, const MeanModel& mean,
                          int ctx, int n, std::uint64_t seed);

// Ancestral sampler on the same grid.
Eigen::MatrixXd sample_ddpm(const NoiseSchedule& sched, const TimeGrid& grid,
                            const MeanModel& mean, int ctx, int n, std::uint64_t seed);

}  // namespace scorl
