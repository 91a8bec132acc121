#pragma once
#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "scorl/mlp.hpp"
#include "scorl/policy.hpp"
#include "scorl/reward.hpp"
#include "scorl/schedule.hpp"
#include "scorl/score_model.hpp"
#include "scorl/trajectory.hpp"

namespace scorl {

// Structured value function in reverse time t over remaining time tau = T - t:
//
//   V(t, x, c) = c_skip(tau) * RM(pred_in) + c_out(tau) * F_phi(T - t, f_in, c)
//
// with c_skip(tau) = cos(pi tau / (2T)) and c_out either sin(pi tau / (2T))
// or 1 - cos(pi tau / (2T)). pred_in / f_in are each either the raw state x
// or the posterior-mean reconstruction x_hat from the denoiser handle. At
// tau = 0 the coefficients are the exact constants 1 and 0 (no trigonometry),
// so V(T, x, c) == RM(x, c) bit for bit.
enum class COutKind { Sin, OneMinusCos };
enum class ValueInput { Raw, Denoised };

struct ValueNet {
  NoiseSchedule sched;
  RewardModel rm;
  const ScoreNet* denoiser = nullptr;  // shared with the policy mean; not owned
  MLPSpec fspec;                       // scalar-output residual net
  Eigen::VectorXd phi;
  ValueInput predictor_input = ValueInput::Denoised;
  ValueInput corrector_input = ValueInput::Raw;
  COutKind c_out_kind = COutKind::Sin;

  bool needs_denoiser() const {
    return predictor_input == ValueInput::Denoised || corrector_input == ValueInput::Denoised;
  }
};

double c_skip_coeff(double tau, double T);
double c_out_coeff(COutKind kind, double tau, double T);

double value_eval(const ValueNet& vnet, double t_rev, const Eigen::VectorXd& x, int c);

// dV/dx, chaining through the denoiser when it feeds either branch
Eigen::VectorXd value_grad_x(const ValueNet& vnet, double t_rev, const Eigen::VectorXd& x, int c);

// Advantage rate along a direction: (V(t, x + eta g^2(T-t) dir, c) - V(t, x, c)) / eta.
double advantage_rate_fd(const ValueNet& vnet, double t_rev, const Eigen::VectorXd& x, int c,
                         const Eigen::VectorXd& dir, double eta);

// Exact small-eta limit of the same quantity: g^2(T-t) dir . dV/dx.
double advantage_rate_backprop(const ValueNet& vnet, double t_rev, const Eigen::VectorXd& x, int c,
                               const Eigen::VectorXd& dir);

// KL-shaped running reward rate evaluated at policy means:
//   r(t, x, c) = -(beta_kl / 2) g^2(T-t) || mu(t,x,c) - mu_ref(t,x,c) ||^2.
struct RunningRewardParams {
  double beta_kl = 0.0;
  const MeanModel* reference = nullptr;
};

double running_reward(const NoiseSchedule& sched, const RunningRewardParams& params,
                      const GaussianPolicy& pol, double t_rev, const Eigen::VectorXd& x, int c);

// Pathwise KL estimate between the policy's sampler and the reference one,
// beta excluded, over trajectories sampled under the CURRENT policy:
//   mean_traj sum_i (g^2(T - t_i) / 2) || mu - mu_ref ||^2 (t_i, x_i) dt_i.
double kl_path_estimate(const NoiseSchedule& sched, const GaussianPolicy& pol,
                        const MeanModel& reference, const std::vector<Trajectory>& trajs);

struct ValueSample {
  double t = 0.0;  // reverse time
  Eigen::VectorXd x;
  int c = 0;
  double ret = 0.0;  // empirical return target
};

struct ValueFitConfig {
  int epochs = 10;
  int batch = 256;
  double lr = 1e-3;
  double holdout_frac = 0.2;
  uint64_t seed = 1;
  // fraction of denoiser parameters unfrozen during the fit (leading
  // coordinates of the flat vector); 0 keeps the denoiser read-only
  double denoiser_fraction = 0.0;
};

struct ValueFitReport {
  double holdout_mse_init = 0.0;
  double holdout_mse_final = 0.0;
  double train_mse_final = 0.0;
  bool diverged = false;
};

// Fits phi (and optionally part of the denoiser) to squared-error targets.
// The denoiser stays frozen on the default path, so reward-predictor
// structure is preserved; only the residual moves.
ValueFitReport fit_value(ValueNet& vnet, const std::vector<ValueSample>& data,
                         const ValueFitConfig& cfg, ScoreNet* mutable_denoiser = nullptr);

}  // namespace scorl
