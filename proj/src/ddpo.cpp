#include "scorl/ddpo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "scorl/errors.hpp"
#include "scorl/mlp.hpp"
#include "scorl/optimizer.hpp"
#include "scorl/ppo.hpp"
#include "scorl/rng.hpp"
#include "scorl/run_io.hpp"
#include "scorl/value_net.hpp"

namespace scorl {
namespace {

// transition mean and its scale for one ancestral step at (t, x)
struct Transition {
  Eigen::VectorXd m;
  double beta_i = 0.0;
  double shrink = 0.0;  // 1 / sqrt(1 - beta_i)
};

Transition transition_at(const NoiseSchedule& sched, const NetMean& mean, double t, double dt,
                         const Eigen::VectorXd& x, int c, MlpCache* cache) {
  Transition tr;
  tr.beta_i = sched.beta(sched.T - t) * dt;
  if (tr.beta_i >= 1.0) throw NumericError("ddpo: grid too coarse for ancestral steps");
  tr.shrink = 1.0 / std::sqrt(1.0 - tr.beta_i);
  const Eigen::VectorXd mu = mlp_forward(mean.spec, mean.params, mean.T - t, x, c, cache);
  tr.m = (x + tr.beta_i * mu) * tr.shrink;
  return tr;
}

}  // namespace

std::vector<DDPORecord> build_ddpo_dataset(const std::vector<Trajectory>& trajs) {
  if (trajs.empty()) throw ConfigError("ddpo: no trajectories");
  double mean_h = 0.0;
  for (const auto& traj : trajs) mean_h += traj.h;
  mean_h /= trajs.size();

  std::vector<DDPORecord> recs;
  recs.reserve(trajs.size() * trajs[0].steps());
  for (const auto& traj : trajs) {
    for (int i = 0; i < traj.steps(); ++i) {
      DDPORecord rec;
      rec.t = traj.t[i];
      rec.dt = traj.t[i + 1] - traj.t[i];
      rec.x = traj.x.row(i).transpose();
      rec.x_next = traj.x.row(i + 1).transpose();
      rec.c = traj.ctx;
      rec.logp_old = traj.logp[i];
      rec.adv = traj.h - mean_h;
      recs.push_back(std::move(rec));
    }
  }
  return recs;
}

double ddpo_surrogate(const NoiseSchedule& sched, const NetMean& mean,
                      const std::vector<DDPORecord>& recs, double clip, Eigen::VectorXd* grad) {
  if (recs.empty()) throw ConfigError("ddpo_surrogate: no records");
  const double inv_n = 1.0 / static_cast<double>(recs.size());
  double total = 0.0;
  MlpCache cache;
  for (const auto& rec : recs) {
    const Transition tr =
        transition_at(sched, mean, rec.t, rec.dt, rec.x, rec.c, grad ? &cache : nullptr);
    const double logp = gaussian_logp(rec.x_next, tr.m, std::sqrt(tr.beta_i));
    const double ratio = std::exp(logp - rec.logp_old);
    bool unclipped = false;
    total += clipped_term(ratio, rec.adv, clip, &unclipped);
    if (grad && unclipped) {
      // d logp / d mu = (x' - m) / beta_i * (beta_i * shrink) = (x' - m) * shrink
      const Eigen::VectorXd dout =
          (inv_n * rec.adv * ratio * tr.shrink) * (rec.x_next - tr.m);
      mlp_backward(mean.spec, mean.params, cache, dout, *grad);
    }
  }
  return total * inv_n;
}

DDPOTrainer::DDPOTrainer(const NoiseSchedule& sched, const TimeGrid& grid,
                         const MLPSpec& policy_spec, const Eigen::VectorXd& pretrained,
                         const RewardModel& rm, const DDPOConfig& cfg)
    : sched_(sched), grid_(grid), cfg_(cfg), rm_(rm),
      mean_(policy_spec, pretrained, sched.T),
      ref_mean_(policy_spec, pretrained, sched.T) {
  if (pretrained.size() != policy_spec.n_params())
    throw ConfigError("ddpo: pretrained parameter count does not match the policy spec");
}

RoundMetrics DDPOTrainer::run_round() {
  const auto t0 = std::chrono::steady_clock::now();
  const int n = grid_.steps();

  std::vector<Trajectory> trajs(cfg_.n_traj);
  double mean_reward = 0.0;
  for (int i = 0; i < cfg_.n_traj; ++i) {
    trajs[i] = rollout_ddpm(sched_, grid_, mean_, cfg_.ctx,
                            derive_seed(cfg_.seed, 0xdd01, round_, i));
    trajs[i].h = rm_.eval(trajs[i].x.row(n).transpose(), trajs[i].ctx);
    trajs[i].compute_returns();
    mean_reward += trajs[i].h;
  }
  mean_reward /= cfg_.n_traj;

  GaussianPolicy view{&mean_, 1.0};  // width unused by the mean-gap estimate
  const double kl = kl_path_estimate(sched_, view, ref_mean_, trajs);

  std::vector<DDPORecord> recs = build_ddpo_dataset(trajs);

  Optimizer opt = Optimizer::adam(cfg_.ppo.lr);
  Eigen::VectorXd grad(mean_.params.size());
  bool diverged = false;
  const int n_rec = static_cast<int>(recs.size());
  for (int epoch = 0; epoch < cfg_.ppo.epochs && !diverged; ++epoch) {
    Rng erng(derive_seed(cfg_.seed, 0xdd02, round_, epoch));
    std::vector<int> perm = shuffled_indices(n_rec, erng);
    const Eigen::VectorXd snapshot = mean_.params;
    for (int start = 0; start < n_rec; start += cfg_.ppo.batch) {
      const int stop = std::min(n_rec, start + cfg_.ppo.batch);
      std::vector<DDPORecord> batch;
      batch.reserve(stop - start);
      for (int k = start; k < stop; ++k) batch.push_back(recs[perm[k]]);
      grad.setZero();
      const double obj = ddpo_surrogate(sched_, mean_, batch, cfg_.ppo.clip, &grad);
      if (!std::isfinite(obj) || !grad.allFinite()) {
        mean_.params = snapshot;
        diverged = true;
        break;
      }
      grad = -grad;  // ascent
      opt.step(mean_.params, grad);
    }
  }

  RoundMetrics row;
  row.round = round_;
  row.mean_terminal_reward = mean_reward;
  row.kl_path = kl;
  row.surrogate = ddpo_surrogate(sched_, mean_, recs, cfg_.ppo.clip);
  row.wallclock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ++round_;
  return row;
}

void DDPOTrainer::save_run_state(const std::string& path) const {
  save_state_blob(path, round_, {mean_.params});
}

void DDPOTrainer::load_run_state(const std::string& path) {
  StateBlob blob = load_state_blob(path);
  if (blob.vecs.size() != 1 || blob.vecs[0].size() != mean_.spec.n_params())
    throw ConfigError("run state: policy parameter count mismatch");
  round_ = blob.round;
  mean_.params = std::move(blob.vecs[0]);
}

}  // namespace scorl
