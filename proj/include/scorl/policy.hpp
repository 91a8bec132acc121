#pragma once
#include <Eigen/Core>
#include <memory>

#include "scorl/mlp.hpp"
#include "scorl/rng.hpp"
#include "scorl/schedule.hpp"

namespace scorl {

// Policy mean in REVERSE time: mu(t, x, c) plays the role of the score in
// the controlled reverse drift. Abstract so that experiments can swap a
// closed-form mean (analytic scores, shifted references) for the network one.
struct MeanModel {
  virtual ~MeanModel() = default;
  virtual Eigen::VectorXd mean(double t_rev, const Eigen::VectorXd& x, int c) const = 0;
  virtual int dim() const = 0;  // state (and action) dimension
};

// Network-backed mean. Wraps a forward-time score-shaped net; the T - t
// conversion happens here and nowhere else on the policy path, so a policy
// initialized with pretrained score parameters reproduces the pretrained
// sampler exactly.
struct NetMean final : MeanModel {
  MLPSpec spec;
  Eigen::VectorXd params;
  double T = 1.0;

  NetMean() = default;
  NetMean(const MLPSpec& s, Eigen::VectorXd p, double horizon)
      : spec(s), params(std::move(p)), T(horizon) {}

  Eigen::VectorXd mean(double t_rev, const Eigen::VectorXd& x, int c) const override {
    return mlp_forward(spec, params, T - t_rev, x, c);
  }
  int dim() const override { return spec.x_dim; }
};

// Closed-form mean plus a constant shift; the d shift coordinates double as
// a small differentiable policy family for gradient checks.
struct ShiftedMean final : MeanModel {
  const MeanModel* base = nullptr;
  Eigen::VectorXd shift;

  ShiftedMean(const MeanModel* b, Eigen::VectorXd s) : base(b), shift(std::move(s)) {}

  Eigen::VectorXd mean(double t_rev, const Eigen::VectorXd& x, int c) const override {
    return base->mean(t_rev, x, c) + shift;
  }
  int dim() const override { return base->dim(); }
};

// Gaussian exploratory policy a ~ N(mu(t, x, c), sigma_expl^2 I) with a
// constant exploration width. sigma_expl = 0 degrades to the deterministic
// mean policy; samples are then flagged and carry no log density.
struct GaussianPolicy {
  const MeanModel* mean_model = nullptr;
  double sigma_expl = 0.1;

  Eigen::VectorXd mean(double t_rev, const Eigen::VectorXd& x, int c) const {
    return mean_model->mean(t_rev, x, c);
  }
};

struct ActionSample {
  Eigen::VectorXd a;
  double logp = 0.0;
  bool deterministic = false;
};

ActionSample sample_action(const GaussianPolicy& pol, double t_rev, const Eigen::VectorXd& x, int c,
                           Rng& rng);

// log N(a; mu, sigma^2 I) given a precomputed mean
double gaussian_logp(const Eigen::VectorXd& a, const Eigen::VectorXd& mu, double sigma);

double action_logp(const GaussianPolicy& pol, double t_rev, const Eigen::VectorXd& x, int c,
                   const Eigen::VectorXd& a);

// pi_new(a | t, x, c) / pi_old(a | t, x, c), computed in log space
double likelihood_ratio(const GaussianPolicy& pol_new, const GaussianPolicy& pol_old, double t_rev,
                        const Eigen::VectorXd& x, int c, const Eigen::VectorXd& a);

// KL between two equal-width Gaussian policies at one (t, x, c):
// ||mu_new - mu_old||^2 / (2 sigma^2)
double policy_kl(const GaussianPolicy& pol_new, const GaussianPolicy& pol_old, double t_rev,
                 const Eigen::VectorXd& x, int c);

}  // namespace scorl
