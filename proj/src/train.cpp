#include "scorl/train.hpp"

#include <chrono>

#include "scorl/errors.hpp"
#include "scorl/rng.hpp"
#include "scorl/run_io.hpp"

namespace scorl {

CTRLTrainer::CTRLTrainer(const NoiseSchedule& sched, const TimeGrid& grid,
                         const MLPSpec& policy_spec, const Eigen::VectorXd& pretrained,
                         const RewardModel& rm, const MLPSpec& value_spec, const CTRLConfig& cfg)
    : sched_(sched), grid_(grid), cfg_(cfg), rm_(rm),
      mean_(policy_spec, pretrained, sched.T),
      ref_mean_(policy_spec, pretrained, sched.T),
      denoiser_{policy_spec, pretrained} {
  if (pretrained.size() != policy_spec.n_params())
    throw ConfigError("trainer: pretrained parameter count does not match the policy spec");
  if (value_spec.out_dim != 1) throw ConfigError("trainer: value residual net must be scalar");
  if (value_spec.x_dim != policy_spec.x_dim)
    throw ConfigError("trainer: value net state dimension mismatch");
  vnet_.sched = sched_;
  vnet_.rm = rm_;
  vnet_.denoiser = &denoiser_;
  vnet_.fspec = value_spec;
  vnet_.phi = value_spec.init_params(derive_seed(cfg_.seed, 0x7a10), true);
}

RoundMetrics CTRLTrainer::run_round() {
  const auto t0 = std::chrono::steady_clock::now();
  GaussianPolicy pol{&mean_, cfg_.sigma_expl};

  RunningRewardParams rrp{cfg_.beta_kl, &ref_mean_};
  RunningReward rate = [&](double t, const Eigen::VectorXd& x, int c) {
    return running_reward(sched_, rrp, pol, t, x, c);
  };
  const RunningReward* rate_ptr = cfg_.beta_kl != 0.0 ? &rate : nullptr;

  std::vector<Trajectory> trajs =
      collect_round(sched_, grid_, pol, cfg_.ctx, cfg_.n_traj,
                    derive_seed(cfg_.seed, 0xc011, round_), cfg_.n_threads, rate_ptr);

  double mean_reward = 0.0;
  const int n = grid_.steps();
  for (auto& traj : trajs) {
    traj.h = rm_.eval(traj.x.row(n).transpose(), traj.ctx);
    traj.compute_returns();
    mean_reward += traj.h;
  }
  mean_reward /= trajs.size();

  const double kl = kl_path_estimate(sched_, pol, ref_mean_, trajs);

  // the value net denoises with the policy that generated this round's data
  denoiser_.params = mean_.params;
  std::vector<ValueSample> vdata;
  vdata.reserve(trajs.size() * (n + 1));
  for (const auto& traj : trajs)
    for (int i = 0; i <= n; ++i)
      vdata.push_back(ValueSample{traj.t[i], traj.x.row(i).transpose(), traj.ctx,
                                  traj.returns[i]});
  ValueFitConfig vf = cfg_.value_fit;
  vf.seed = derive_seed(cfg_.seed, 0xfa17, round_);
  const ValueFitReport vrep = fit_value(vnet_, vdata, vf);

  ValueFn vfun = [&](double t, const Eigen::VectorXd& x, int c) {
    return value_eval(vnet_, t, x, c);
  };
  AdvantageConfig acfg;
  acfg.n_pseudo = cfg_.n_pseudo;
  acfg.eta = cfg_.eta;
  acfg.raw_action_dir = cfg_.raw_action_dir;
  acfg.beta_kl = cfg_.beta_kl;
  acfg.reference = &ref_mean_;
  acfg.seed = derive_seed(cfg_.seed, 0xadd0, round_);
  std::vector<AdvantageRecord> recs = build_advantage_dataset(sched_, trajs, pol, vfun, acfg);

  PPOConfig pcfg = cfg_.ppo;
  pcfg.seed = derive_seed(cfg_.seed, 0x9901, round_);
  const PPOReport prep = ppo_update(mean_, cfg_.sigma_expl, recs, pcfg);

  RoundMetrics row;
  row.round = round_;
  row.mean_terminal_reward = mean_reward;
  row.kl_path = kl;
  row.value_mse = vrep.holdout_mse_final;
  row.surrogate = prep.surrogate_final;
  row.wallclock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ++round_;
  return row;
}

void CTRLTrainer::save_run_state(const std::string& path) const {
  save_state_blob(path, round_, {mean_.params, vnet_.phi});
}

void CTRLTrainer::load_run_state(const std::string& path) {
  StateBlob blob = load_state_blob(path);
  if (blob.vecs.size() != 2) throw ConfigError("run state: expected policy and value vectors");
  if (blob.vecs[0].size() != mean_.spec.n_params())
    throw ConfigError("run state: policy parameter count mismatch");
  if (blob.vecs[1].size() != vnet_.fspec.n_params())
    throw ConfigError("run state: value parameter count mismatch");
  round_ = blob.round;
  mean_.params = std::move(blob.vecs[0]);
  vnet_.phi = std::move(blob.vecs[1]);
  denoiser_.params = mean_.params;
}

Eigen::MatrixXd sample_em(const NoiseSchedule& sched, const TimeGrid& grid, const MeanModel& mean,
                          int ctx, int n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("sample_em: n must be >= 1");
  GaussianPolicy pol{&mean, 0.0};
  Eigen::MatrixXd out(n, mean.dim());
  for (int i = 0; i < n; ++i) {
    const Trajectory traj = rollout(sched, grid, pol, ctx, derive_seed(seed, 0x5a3e, i));
    out.row(i) = traj.x.row(grid.steps());
  }
  return out;
}

Eigen::MatrixXd sample_ddpm(const NoiseSchedule& sched, const TimeGrid& grid,
                            const MeanModel& mean, int ctx, int n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("sample_ddpm: n must be >= 1");
  Eigen::MatrixXd out(n, mean.dim());
  for (int i = 0; i < n; ++i) {
    const Trajectory traj = rollout_ddpm(sched, grid, mean, ctx, derive_seed(seed, 0xddb3, i));
    out.row(i) = traj.x.row(grid.steps());
  }
  return out;
}

}  // namespace scorl
