#include "scorl/score_model.hpp"

#include <cmath>
#include <string>

#include "scorl/errors.hpp"
#include "scorl/optimizer.hpp"
#include "scorl/rng.hpp"
#include "scorl/sde.hpp"

namespace scorl {
namespace {

double default_weight(const NoiseSchedule& sched, double t) {
  const double s = sched.sigma(t);
  return s * s;
}

}  // namespace

double dsm_loss(const NoiseSchedule& sched, const ScoreFn& score, const std::vector<DSMSample>& batch,
                const DSMWeight& weight) {
  if (batch.empty()) throw NumericError("dsm_loss: empty batch");
  double total = 0.0;
  for (const auto& s : batch) {
    const double sig = sched.sigma(s.t);
    if (sig == 0.0) throw NumericError("dsm_loss: sigma(t) = 0 in batch, t too small");
    const double w = weight ? weight(s.t) : default_weight(sched, s.t);
    const Eigen::VectorXd xt = forward_perturb(sched, s.t, s.x0, s.eps);
    const Eigen::VectorXd resid = score(s.t, xt, s.c) + s.eps / sig;
    total += w * resid.squaredNorm();
  }
  return total / static_cast<double>(batch.size());
}

double dsm_loss_grad(const NoiseSchedule& sched, const MLPSpec& spec, const Eigen::VectorXd& p,
                     const std::vector<DSMSample>& batch, Eigen::VectorXd& grad,
                     const DSMWeight& weight) {
  if (batch.empty()) throw NumericError("dsm_loss_grad: empty batch");
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  std::vector<NetSample> net_batch(batch.size());
  std::vector<Eigen::VectorXd> targets(batch.size());
  std::vector<double> weights(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) {
    const auto& s = batch[i];
    const double sig = sched.sigma(s.t);
    if (sig == 0.0) throw NumericError("dsm_loss_grad: sigma(t) = 0 in batch, t too small");
    net_batch[i] = NetSample{s.t, forward_perturb(sched, s.t, s.x0, s.eps), s.c};
    targets[i] = s.eps / sig;
    weights[i] = (weight ? weight(s.t) : default_weight(sched, s.t)) * inv_n;
  }
  auto loss = [&](int i, const Eigen::VectorXd& out, Eigen::VectorXd& dout) {
    const Eigen::VectorXd resid = out + targets[i];
    dout = 2.0 * weights[i] * resid;
    return weights[i] * resid.squaredNorm();
  };
  return mlp_value_and_grad(spec, p, net_batch, loss, grad);
}

PretrainResult pretrain(const NoiseSchedule& sched, const MLPSpec& spec, const Dataset& data,
                        const PretrainConfig& cfg) {
  if (data.n() == 0) throw ConfigError("pretrain: empty dataset");
  if (data.dim() != spec.x_dim) throw ConfigError("pretrain: dataset dim does not match net");
  const double t_min = cfg.t_min_frac * sched.T;
  if (!(t_min > 0.0)) throw ConfigError("pretrain: t_min_frac must be > 0");

  PretrainResult res;
  res.params = spec.init_params(derive_seed(cfg.seed, 0x1717));
  Optimizer opt = Optimizer::adam(cfg.lr);
  Eigen::VectorXd grad;
  std::vector<DSMSample> batch(cfg.batch);

  double block_sum = 0.0;
  int block_n = 0;
  for (int step = 0; step < cfg.steps; ++step) {
    // Cosine decay toward final_lr_frac * lr; the tail would otherwise hover
    // at the constant-lr noise floor instead of converging.
    const double progress = cfg.steps > 1 ? static_cast<double>(step) / (cfg.steps - 1) : 1.0;
    const double shape = 0.5 * (1.0 + std::cos(M_PI * progress));
    opt.lr = cfg.lr * (cfg.final_lr_frac + (1.0 - cfg.final_lr_frac) * shape);
    Rng rng(derive_seed(cfg.seed, 0xd5a, static_cast<uint64_t>(step)));
    for (int b = 0; b < cfg.batch; ++b) {
      const int row = rng.uniform_int(data.n());
      DSMSample& s = batch[b];
      s.t = t_min + (sched.T - t_min) * rng.uniform();
      s.x0 = data.x0.row(row).transpose();
      s.eps = rng.normal_vec(data.dim());
      s.c = data.context(row);
    }
    const double loss = dsm_loss_grad(sched, spec, res.params, batch, grad);
    if (!std::isfinite(loss)) {
      res.diverged = true;  // keep last finite parameters rather than stepping into NaN
      break;
    }
    opt.step(res.params, grad);
    block_sum += loss;
    block_n += 1;
    if (block_n == cfg.curve_stride || step + 1 == cfg.steps) {
      res.loss_curve.push_back(block_sum / block_n);
      block_sum = 0.0;
      block_n = 0;
    }
  }
  return res;
}

Eigen::VectorXd tweedie_denoise(const NoiseSchedule& sched, const ScoreNet& net, double t_rev,
                                const Eigen::VectorXd& x, int c) {
  const double tau = sched.T - t_rev;
  if (tau < 0.0 || tau > sched.T) throw NumericError("tweedie_denoise: t outside [0, T]");
  const double a = sched.alpha(tau);
  if (a == 0.0) throw NumericError("tweedie_denoise: alpha(t) underflowed to 0");
  const double sig = sched.sigma(tau);
  return (sig * sig * net.eval(tau, x, c) + x) / a;
}

}  // namespace scorl
