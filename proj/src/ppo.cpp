#include "scorl/ppo.hpp"

#include <algorithm>
#include <cmath>

#include "scorl/errors.hpp"
#include "scorl/mlp.hpp"
#include "scorl/optimizer.hpp"
#include "scorl/rng.hpp"

namespace scorl {

std::vector<AdvantageRecord> build_advantage_dataset(const NoiseSchedule& sched,
                                                     const std::vector<Trajectory>& trajs,
                                                     const GaussianPolicy& pol,
                                                     const ValueFn& value,
                                                     const AdvantageConfig& cfg) {
  if (cfg.n_pseudo < 1) throw ConfigError("advantage: n_pseudo must be >= 1");
  if (!(cfg.eta > 0.0)) throw ConfigError("advantage: eta must be > 0");
  if (!(pol.sigma_expl > 0.0)) throw ConfigError("advantage: pseudo actions need exploration noise");
  if (cfg.beta_kl != 0.0 && !cfg.reference)
    throw ConfigError("advantage: beta_kl > 0 requires a reference mean");

  std::vector<AdvantageRecord> recs;
  recs.reserve(trajs.size() * (trajs.empty() ? 0 : trajs[0].steps()) * cfg.n_pseudo);
  for (size_t ti = 0; ti < trajs.size(); ++ti) {
    const Trajectory& traj = trajs[ti];
    for (int i = 0; i < traj.steps(); ++i) {
      const double t = traj.t[i];
      const double dt = traj.t[i + 1] - t;
      const Eigen::VectorXd x = traj.x.row(i).transpose();
      const Eigen::VectorXd a_exec = traj.a.row(i).transpose();
      const double g = sched.g(sched.T - t);
      const double g2 = g * g;
      const double v_base = value(t, x, traj.ctx);
      Eigen::VectorXd mu_ref;
      if (cfg.beta_kl != 0.0) mu_ref = cfg.reference->mean(t, x, traj.ctx);

      Rng rng(derive_seed(cfg.seed, 0xad7a, ti, static_cast<std::uint64_t>(i)));
      for (int j = 0; j < cfg.n_pseudo; ++j) {
        const Eigen::VectorXd eps = rng.normal_vec(static_cast<int>(x.size()));
        AdvantageRecord rec;
        rec.t = t;
        rec.x = x;
        rec.c = traj.ctx;
        rec.a = a_exec + pol.sigma_expl * eps;
        rec.logp_old = gaussian_logp(rec.a, pol.mean(t, x, traj.ctx), pol.sigma_expl);
        const Eigen::VectorXd& dir = cfg.raw_action_dir ? rec.a : eps;
        rec.q = (value(t, x + cfg.eta * g2 * dir, traj.ctx) - v_base) / cfg.eta;
        if (cfg.beta_kl != 0.0)
          rec.q -= 0.5 * cfg.beta_kl * g2 * (rec.a - mu_ref).squaredNorm();
        rec.dt = dt;
        rec.traj = static_cast<int>(ti);
        recs.push_back(std::move(rec));
      }
    }
  }
  return recs;
}

std::vector<AdvantageRecord> records_from_executed(const NoiseSchedule& sched,
                                                   const std::vector<Trajectory>& trajs,
                                                   const GaussianPolicy& pol,
                                                   const ValueFn& value,
                                                   const AdvantageConfig& cfg) {
  if (!(cfg.eta > 0.0)) throw ConfigError("advantage: eta must be > 0");
  if (!(pol.sigma_expl > 0.0))
    throw ConfigError("advantage: executed-action records need exploration noise");
  if (cfg.beta_kl != 0.0 && !cfg.reference)
    throw ConfigError("advantage: beta_kl > 0 requires a reference mean");

  std::vector<AdvantageRecord> recs;
  for (size_t ti = 0; ti < trajs.size(); ++ti) {
    const Trajectory& traj = trajs[ti];
    for (int i = 0; i < traj.steps(); ++i) {
      AdvantageRecord rec;
      rec.t = traj.t[i];
      rec.x = traj.x.row(i).transpose();
      rec.c = traj.ctx;
      rec.a = traj.a.row(i).transpose();
      rec.logp_old = traj.logp[i];
      rec.dt = traj.t[i + 1] - rec.t;
      rec.traj = static_cast<int>(ti);
      const double g = sched.g(sched.T - rec.t);
      const double g2 = g * g;
      const Eigen::VectorXd dir =
          cfg.raw_action_dir ? rec.a
                             : ((rec.a - pol.mean(rec.t, rec.x, rec.c)) / pol.sigma_expl).eval();
      rec.q = (value(rec.t, rec.x + cfg.eta * g2 * dir, rec.c) - value(rec.t, rec.x, rec.c)) /
              cfg.eta;
      if (cfg.beta_kl != 0.0) {
        const Eigen::VectorXd gap = rec.a - cfg.reference->mean(rec.t, rec.x, rec.c);
        rec.q -= 0.5 * cfg.beta_kl * g2 * gap.squaredNorm();
      }
      recs.push_back(std::move(rec));
    }
  }
  if (recs.empty()) throw ConfigError("advantage: no records");
  return recs;
}

double clipped_term(double ratio, double q, double clip, bool* unclipped) {
  const double clipped_ratio = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
  const double plain = ratio * q;
  const double capped = clipped_ratio * q;
  if (unclipped) *unclipped = plain <= capped;
  return std::min(plain, capped);
}

double ppo_surrogate(const NetMean& mean, double sigma_expl,
                     const std::vector<AdvantageRecord>& recs, double clip,
                     Eigen::VectorXd* grad) {
  if (recs.empty()) throw ConfigError("ppo_surrogate: no records");
  if (!(sigma_expl > 0.0)) throw ConfigError("ppo_surrogate: sigma_expl must be > 0");
  const double inv_n = 1.0 / static_cast<double>(recs.size());
  const double inv_var = 1.0 / (sigma_expl * sigma_expl);
  double total = 0.0;
  MlpCache cache;
  for (const auto& rec : recs) {
    const double tau = mean.T - rec.t;
    const Eigen::VectorXd mu =
        mlp_forward(mean.spec, mean.params, tau, rec.x, rec.c, grad ? &cache : nullptr);
    const double logp_new = gaussian_logp(rec.a, mu, sigma_expl);
    const double ratio = std::exp(logp_new - rec.logp_old);
    bool unclipped = false;
    total += rec.dt * clipped_term(ratio, rec.q, clip, &unclipped);
    if (grad && unclipped) {
      const Eigen::VectorXd dout = (inv_n * rec.dt * rec.q * ratio * inv_var) * (rec.a - mu);
      mlp_backward(mean.spec, mean.params, cache, dout, *grad);
    }
  }
  return total * inv_n;
}

Eigen::VectorXd policy_gradient_from_records(const NetMean& mean, double sigma_expl,
                                             const std::vector<AdvantageRecord>& recs) {
  if (recs.empty()) throw ConfigError("policy_gradient_from_records: no records");
  if (!(sigma_expl > 0.0))
    throw ConfigError("policy_gradient_from_records: sigma_expl must be > 0");
  const double inv_n = 1.0 / static_cast<double>(recs.size());
  const double inv_var = 1.0 / (sigma_expl * sigma_expl);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(mean.params.size());
  MlpCache cache;
  for (const auto& rec : recs) {
    const Eigen::VectorXd mu =
        mlp_forward(mean.spec, mean.params, mean.T - rec.t, rec.x, rec.c, &cache);
    const Eigen::VectorXd dout = (inv_n * rec.dt * rec.q * inv_var) * (rec.a - mu);
    mlp_backward(mean.spec, mean.params, cache, dout, grad);
  }
  return grad;
}

Eigen::MatrixXd shift_gradient_per_traj(const GaussianPolicy& pol,
                                        const std::vector<AdvantageRecord>& recs, int n_traj) {
  if (recs.empty()) throw ConfigError("shift_gradient_per_traj: no records");
  if (n_traj < 1) throw ConfigError("shift_gradient_per_traj: n_traj must be >= 1");
  const double inv_var = 1.0 / (pol.sigma_expl * pol.sigma_expl);
  Eigen::MatrixXd per_traj = Eigen::MatrixXd::Zero(n_traj, recs[0].x.size());
  for (const auto& rec : recs) {
    if (rec.traj < 0 || rec.traj >= n_traj)
      throw ConfigError("shift_gradient_per_traj: record points outside the trajectory batch");
    const Eigen::VectorXd mu = pol.mean(rec.t, rec.x, rec.c);
    per_traj.row(rec.traj) += rec.dt * rec.q * inv_var * (rec.a - mu).transpose();
  }
  return per_traj;
}

Eigen::VectorXd policy_gradient_estimate(const NoiseSchedule& sched,
                                         const std::vector<Trajectory>& trajs,
                                         const GaussianPolicy& pol, const ValueFn& value,
                                         const AdvantageConfig& cfg,
                                         Eigen::MatrixXd* per_traj) {
  const std::vector<AdvantageRecord> recs = records_from_executed(sched, trajs, pol, value, cfg);
  Eigen::MatrixXd rows = shift_gradient_per_traj(pol, recs, static_cast<int>(trajs.size()));
  Eigen::VectorXd estimate = rows.colwise().mean();
  if (per_traj) *per_traj = std::move(rows);
  return estimate;
}

PPOReport ppo_update(NetMean& mean, double sigma_expl, const std::vector<AdvantageRecord>& recs,
                     const PPOConfig& cfg) {
  if (recs.empty()) throw ConfigError("ppo_update: no records");
  if (cfg.batch < 1 || cfg.epochs < 1) throw ConfigError("ppo_update: bad epoch or batch size");
  if (!(sigma_expl > 0.0)) throw ConfigError("ppo_update: sigma_expl must be > 0");
  if (!(cfg.clip > 0.0)) throw ConfigError("ppo_update: clip width must be > 0");

  PPOReport rep;
  rep.surrogate_init = ppo_surrogate(mean, sigma_expl, recs, cfg.clip);

  const int n = static_cast<int>(recs.size());
  const double inv_var = 1.0 / (sigma_expl * sigma_expl);
  Optimizer opt = Optimizer::adam(cfg.lr);
  Eigen::VectorXd grad(mean.params.size());
  MlpCache cache;

  for (int epoch = 0; epoch < cfg.epochs && !rep.diverged; ++epoch) {
    Rng erng(derive_seed(cfg.seed, 0x99f0, epoch));
    std::vector<int> perm = shuffled_indices(n, erng);
    const Eigen::VectorXd snapshot = mean.params;
    for (int start = 0; start < n; start += cfg.batch) {
      const int stop = std::min(n, start + cfg.batch);
      const double inv_b = 1.0 / (stop - start);
      grad.setZero();
      double batch_obj = 0.0;
      for (int k = start; k < stop; ++k) {
        const AdvantageRecord& rec = recs[perm[k]];
        const Eigen::VectorXd mu =
            mlp_forward(mean.spec, mean.params, mean.T - rec.t, rec.x, rec.c, &cache);
        const double ratio = std::exp(gaussian_logp(rec.a, mu, sigma_expl) - rec.logp_old);
        bool unclipped = false;
        batch_obj += rec.dt * clipped_term(ratio, rec.q, cfg.clip, &unclipped);
        if (unclipped) {
          // descent on the negated objective
          const Eigen::VectorXd dout =
              (-inv_b * rec.dt * rec.q * ratio * inv_var) * (rec.a - mu);
          mlp_backward(mean.spec, mean.params, cache, dout, grad);
        }
      }
      if (!std::isfinite(batch_obj) || !grad.allFinite()) {
        mean.params = snapshot;
        rep.diverged = true;
        break;
      }
      opt.step(mean.params, grad);
    }
  }

  rep.surrogate_final = ppo_surrogate(mean, sigma_expl, recs, cfg.clip);
  return rep;
}

}  // namespace scorl
