#pragma once
#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <vector>

#include "scorl/mlp.hpp"
#include "scorl/schedule.hpp"

namespace scorl {

// Score network s(t, x, c) in FORWARD time. Reverse-time callers (policies,
// denoisers) convert once at their own boundary.
struct ScoreNet {
  MLPSpec spec;
  Eigen::VectorXd params;

  Eigen::VectorXd eval(double t_fwd, const Eigen::VectorXd& x, int c) const {
    return mlp_forward(spec, params, t_fwd, x, c);
  }
};

// Training set for denoising score matching: clean points plus context ids.
struct Dataset {
  Eigen::MatrixXd x0;      // n x d, one row per point
  std::vector<int> ctx;    // empty means all-zero contexts

  int n() const { return static_cast<int>(x0.rows()); }
  int dim() const { return static_cast<int>(x0.cols()); }
  int context(int i) const { return ctx.empty() ? 0 : ctx[i]; }
};

struct DSMSample {
  double t;               // forward time
  Eigen::VectorXd x0;
  Eigen::VectorXd eps;    // the standard normal draw used to perturb
  int c = 0;
};

// weight(t) multiplying the squared residual; the default sigma(t)^2 turns
// the score residual into the bounded noise-prediction residual
using DSMWeight = std::function<double(double)>;

using ScoreFn = std::function<Eigen::VectorXd(double t_fwd, const Eigen::VectorXd& x, int c)>;

// Monte Carlo denoising score-matching objective over an explicit batch:
//   mean_i w(t_i) || s(t_i, alpha x0 + sigma eps, c_i) + eps_i / sigma(t_i) ||^2.
// Throws if any sample sits at sigma(t) = 0.
double dsm_loss(const NoiseSchedule& sched, const ScoreFn& score, const std::vector<DSMSample>& batch,
                const DSMWeight& weight = nullptr);

// Same objective plus gradient with respect to the network parameters.
double dsm_loss_grad(const NoiseSchedule& sched, const MLPSpec& spec, const Eigen::VectorXd& p,
                     const std::vector<DSMSample>& batch, Eigen::VectorXd& grad,
                     const DSMWeight& weight = nullptr);

struct PretrainConfig {
  int steps = 20000;          // minibatch steps
  int batch = 256;
  double lr = 1e-3;
  double final_lr_frac = 0.01;  // cosine-anneal lr down to this fraction; 1 disables
  double t_min_frac = 0.01;   // sample t uniformly on [t_min_frac * T, T]
  uint64_t seed = 1;
  int curve_stride = 50;      // record smoothed loss every this many steps
};

struct PretrainResult {
  Eigen::VectorXd params;
  std::vector<double> loss_curve;  // block-averaged minibatch losses
  bool diverged = false;
};

PretrainResult pretrain(const NoiseSchedule& sched, const MLPSpec& spec, const Dataset& data,
                        const PretrainConfig& cfg);

// Posterior-mean reconstruction from a score evaluation, reverse-time entry:
//   x_hat = (sigma^2 s(T - t, x, c) + x) / alpha   at forward time T - t.
Eigen::VectorXd tweedie_denoise(const NoiseSchedule& sched, const ScoreNet& net, double t_rev,
                                const Eigen::VectorXd& x, int c);

}  // namespace scorl
