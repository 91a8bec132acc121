#include "scorl/value_net.hpp"

#include <cmath>

#include "scorl/errors.hpp"
#include "scorl/optimizer.hpp"
#include "scorl/rng.hpp"

namespace scorl {
namespace {

struct DenoiseParts {
  double alpha = 1.0;
  double sigma2 = 0.0;
  Eigen::VectorXd x_hat;
};

DenoiseParts denoise_parts(const ValueNet& vnet, double tau, const Eigen::VectorXd& x, int c) {
  DenoiseParts p;
  p.alpha = vnet.sched.alpha(tau);
  if (p.alpha == 0.0) throw NumericError("value: alpha underflowed to 0");
  const double sig = vnet.sched.sigma(tau);
  p.sigma2 = sig * sig;
  p.x_hat = (p.sigma2 * vnet.denoiser->eval(tau, x, c) + x) / p.alpha;
  return p;
}

}  // namespace

double c_skip_coeff(double tau, double T) {
  if (tau == 0.0) return 1.0;  // exact boundary constant, not cos(0)
  return std::cos(0.5 * M_PI * tau / T);
}

double c_out_coeff(COutKind kind, double tau, double T) {
  if (tau == 0.0) return 0.0;
  const double arg = 0.5 * M_PI * tau / T;
  return kind == COutKind::Sin ? std::sin(arg) : 1.0 - std::cos(arg);
}

double value_eval(const ValueNet& vnet, double t_rev, const Eigen::VectorXd& x, int c) {
  const double tau = vnet.sched.T - t_rev;
  if (tau < 0.0) throw NumericError("value_eval: t beyond horizon");
  if (tau == 0.0) return vnet.rm.eval(x, c);  // terminal boundary, reward exactly

  const bool want_denoised = vnet.needs_denoiser();
  DenoiseParts dp;
  if (want_denoised) {
    if (!vnet.denoiser) throw NumericError("value_eval: denoiser handle missing");
    dp = denoise_parts(vnet, tau, x, c);
  }
  const Eigen::VectorXd& pred_in =
      vnet.predictor_input == ValueInput::Denoised ? dp.x_hat : x;
  const Eigen::VectorXd& f_in =
      vnet.corrector_input == ValueInput::Denoised ? dp.x_hat : x;
  const double skip = c_skip_coeff(tau, vnet.sched.T);
  const double cout = c_out_coeff(vnet.c_out_kind, tau, vnet.sched.T);
  const double f = mlp_forward(vnet.fspec, vnet.phi, tau, f_in, c)[0];
  return skip * vnet.rm.eval(pred_in, c) + cout * f;
}

Eigen::VectorXd value_grad_x(const ValueNet& vnet, double t_rev, const Eigen::VectorXd& x, int c) {
  const double tau = vnet.sched.T - t_rev;
  if (tau < 0.0) throw NumericError("value_grad_x: t beyond horizon");
  if (tau == 0.0) return vnet.rm.grad(x, c);

  const bool want_denoised = vnet.needs_denoiser();
  DenoiseParts dp;
  if (want_denoised) dp = denoise_parts(vnet, tau, x, c);
  const double skip = c_skip_coeff(tau, vnet.sched.T);
  const double cout = c_out_coeff(vnet.c_out_kind, tau, vnet.sched.T);

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(x.size());
  // seed for the single VJP through the denoiser covering both branches
  Eigen::VectorXd xhat_seed = Eigen::VectorXd::Zero(x.size());

  if (vnet.predictor_input == ValueInput::Denoised) {
    xhat_seed += skip * vnet.rm.grad(dp.x_hat, c);
  } else {
    grad += skip * vnet.rm.grad(x, c);
  }

  const Eigen::VectorXd& f_in =
      vnet.corrector_input == ValueInput::Denoised ? dp.x_hat : x;
  const Eigen::VectorXd df = cout * mlp_grad_input(vnet.fspec, vnet.phi, tau, f_in, c);
  if (vnet.corrector_input == ValueInput::Denoised) {
    xhat_seed += df;
  } else {
    grad += df;
  }

  if (want_denoised && xhat_seed.squaredNorm() > 0.0) {
    // d x_hat / dx = (sigma^2 J_s + I) / alpha
    const Eigen::VectorXd js_t =
        mlp_vjp_input(vnet.denoiser->spec, vnet.denoiser->params, tau, x, c, xhat_seed);
    grad += (dp.sigma2 * js_t + xhat_seed) / dp.alpha;
  }
  return grad;
}

double advantage_rate_fd(const ValueNet& vnet, double t_rev, const Eigen::VectorXd& x, int c,
                         const Eigen::VectorXd& dir, double eta) {
  if (!(eta > 0.0)) throw NumericError("advantage_rate_fd: eta must be > 0");
  const double g = vnet.sched.g(vnet.sched.T - t_rev);
  const Eigen::VectorXd x_off = x + eta * g * g * dir;
  return (value_eval(vnet, t_rev, x_off, c) - value_eval(vnet, t_rev, x, c)) / eta;
}

double advantage_rate_backprop(const ValueNet& vnet, double t_rev, const Eigen::VectorXd& x, int c,
                               const Eigen::VectorXd& dir) {
  const double g = vnet.sched.g(vnet.sched.T - t_rev);
  return g * g * dir.dot(value_grad_x(vnet, t_rev, x, c));
}

double running_reward(const NoiseSchedule& sched, const RunningRewardParams& params,
                      const GaussianPolicy& pol, double t_rev, const Eigen::VectorXd& x, int c) {
  if (params.beta_kl == 0.0) return 0.0;
  if (!params.reference) throw NumericError("running_reward: reference policy missing");
  const double g = sched.g(sched.T - t_rev);
  const Eigen::VectorXd diff = pol.mean(t_rev, x, c) - params.reference->mean(t_rev, x, c);
  return -0.5 * params.beta_kl * g * g * diff.squaredNorm();
}

double kl_path_estimate(const NoiseSchedule& sched, const GaussianPolicy& pol,
                        const MeanModel& reference, const std::vector<Trajectory>& trajs) {
  if (trajs.empty()) throw NumericError("kl_path_estimate: no trajectories");
  double total = 0.0;
  for (const auto& traj : trajs) {
    double acc = 0.0;
    for (int i = 0; i < traj.steps(); ++i) {
      const double ti = traj.t[i];
      const double g = sched.g(sched.T - ti);
      const Eigen::VectorXd xi = traj.x.row(i).transpose();
      const Eigen::VectorXd diff = pol.mean(ti, xi, traj.ctx) - reference.mean(ti, xi, traj.ctx);
      acc += 0.5 * g * g * diff.squaredNorm() * (traj.t[i + 1] - ti);
    }
    total += acc;
  }
  return total / static_cast<double>(trajs.size());
}

ValueFitReport fit_value(ValueNet& vnet, const std::vector<ValueSample>& data,
                         const ValueFitConfig& cfg, ScoreNet* mutable_denoiser) {
  if (data.size() < 8) throw ConfigError("fit_value: not enough samples");
  if (cfg.denoiser_fraction > 0.0) {
    if (!mutable_denoiser || mutable_denoiser != vnet.denoiser)
      throw ConfigError("fit_value: unfreezing the denoiser requires passing the shared handle");
  }

  // split once, seeded; holdout is the tail of the shuffle
  Rng split_rng(derive_seed(cfg.seed, 0x5011));
  std::vector<int> order = shuffled_indices(static_cast<int>(data.size()), split_rng);
  const int n_hold = std::max(1, static_cast<int>(cfg.holdout_frac * data.size()));
  const int n_train = static_cast<int>(data.size()) - n_hold;
  if (n_train < 1) throw ConfigError("fit_value: holdout fraction leaves no training data");

  const double T = vnet.sched.T;
  const bool slow_path = cfg.denoiser_fraction > 0.0;

  // cached per-sample pieces, valid while the denoiser is frozen
  struct Cached {
    double tau, pred, cout;
    NetSample net;
  };
  std::vector<Cached> cache;
  auto build_cache = [&]() {
    cache.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) {
      const auto& s = data[i];
      const double tau = T - s.t;
      Cached& cs = cache[i];
      cs.tau = tau;
      if (tau == 0.0) {
        cs.pred = vnet.rm.eval(s.x, s.c);
        cs.cout = 0.0;
        cs.net = NetSample{0.0, s.x, s.c};
        continue;
      }
      DenoiseParts dp;
      if (vnet.needs_denoiser()) dp = denoise_parts(vnet, tau, s.x, s.c);
      const Eigen::VectorXd& pred_in =
          vnet.predictor_input == ValueInput::Denoised ? dp.x_hat : s.x;
      const Eigen::VectorXd& f_in =
          vnet.corrector_input == ValueInput::Denoised ? dp.x_hat : s.x;
      cs.pred = c_skip_coeff(tau, T) * vnet.rm.eval(pred_in, s.c);
      cs.cout = c_out_coeff(vnet.c_out_kind, tau, T);
      cs.net = NetSample{tau, f_in, s.c};
    }
  };
  build_cache();

  auto mse_over = [&](int lo, int hi) {
    double acc = 0.0;
    for (int k = lo; k < hi; ++k) {
      const auto& cs = cache[order[k]];
      const double v = cs.pred + cs.cout * mlp_forward(vnet.fspec, vnet.phi, cs.net.t, cs.net.x,
                                                       cs.net.c)[0];
      const double e = v - data[order[k]].ret;
      acc += e * e;
    }
    return acc / (hi - lo);
  };

  ValueFitReport rep;
  rep.holdout_mse_init = mse_over(n_train, static_cast<int>(data.size()));

  Optimizer opt = Optimizer::adam(cfg.lr);
  Optimizer opt_den = Optimizer::adam(cfg.lr);
  Eigen::VectorXd grad, grad_den;
  const int den_unfrozen =
      slow_path ? static_cast<int>(cfg.denoiser_fraction * vnet.denoiser->params.size()) : 0;

  for (int epoch = 0; epoch < cfg.epochs && !rep.diverged; ++epoch) {
    Rng erng(derive_seed(cfg.seed, 0xf17, epoch));
    std::vector<int> perm = shuffled_indices(n_train, erng);
    const Eigen::VectorXd phi_snapshot = vnet.phi;
    for (int start = 0; start < n_train; start += cfg.batch) {
      const int stop = std::min(n_train, start + cfg.batch);
      const double inv = 1.0 / (stop - start);
      grad = Eigen::VectorXd::Zero(vnet.phi.size());
      if (slow_path) grad_den = Eigen::VectorXd::Zero(vnet.denoiser->params.size());
      double loss = 0.0;
      MlpCache mc;
      for (int k = start; k < stop; ++k) {
        const int idx = order[perm[k]];
        const auto& cs = cache[idx];
        const double f =
            mlp_forward(vnet.fspec, vnet.phi, cs.net.t, cs.net.x, cs.net.c, &mc)[0];
        const double e = cs.pred + cs.cout * f - data[idx].ret;
        loss += e * e * inv;
        Eigen::VectorXd dout(1);
        dout[0] = 2.0 * inv * e * cs.cout;
        mlp_backward(vnet.fspec, vnet.phi, mc, dout, grad);
        if (slow_path && cs.tau > 0.0) {
          // chain through x_hat into the (partially unfrozen) denoiser
          const auto& s = data[idx];
          DenoiseParts dp = denoise_parts(vnet, cs.tau, s.x, s.c);
          Eigen::VectorXd seed = Eigen::VectorXd::Zero(s.x.size());
          if (vnet.predictor_input == ValueInput::Denoised)
            seed += c_skip_coeff(cs.tau, T) * vnet.rm.grad(dp.x_hat, s.c);
          if (vnet.corrector_input == ValueInput::Denoised)
            seed += cs.cout * mlp_grad_input(vnet.fspec, vnet.phi, cs.tau, dp.x_hat, s.c);
          if (seed.squaredNorm() > 0.0) {
            MlpCache dc;
            mlp_forward(vnet.denoiser->spec, vnet.denoiser->params, cs.tau, s.x, s.c, &dc);
            const Eigen::VectorXd dout_s = (2.0 * inv * e * dp.sigma2 / dp.alpha) * seed;
            mlp_backward(vnet.denoiser->spec, vnet.denoiser->params, dc, dout_s, grad_den);
          }
        }
      }
      if (!std::isfinite(loss)) {
        vnet.phi = phi_snapshot;
        rep.diverged = true;
        break;
      }
      opt.step(vnet.phi, grad);
      if (slow_path && den_unfrozen > 0) {
        grad_den.tail(grad_den.size() - den_unfrozen).setZero();
        opt_den.step(mutable_denoiser->params, grad_den);
        build_cache();  // cached predictions stale once the denoiser moves
      }
    }
  }

  rep.holdout_mse_final = mse_over(n_train, static_cast<int>(data.size()));
  rep.train_mse_final = mse_over(0, n_train);
  return rep;
}

}  // namespace scorl
