#include "scorl/oracles.hpp"

#include <cmath>

#include <Eigen/Cholesky>

#include "scorl/errors.hpp"
#include "scorl/rng.hpp"

namespace scorl::oracle {
namespace {

double log_normal_iso(const Eigen::VectorXd& x, const Eigen::VectorXd& m, double s) {
  const double d = static_cast<double>(x.size());
  return -0.5 * (x - m).squaredNorm() / (s * s) - d * std::log(s) -
         0.5 * d * std::log(2.0 * M_PI);
}

// per-component log joint weights, shifted by their max for stability
Eigen::VectorXd log_weights(const GaussianMixture& mix, const Eigen::VectorXd& x, double* shift) {
  Eigen::VectorXd lw(mix.comps.size());
  for (size_t k = 0; k < mix.comps.size(); ++k)
    lw[k] = std::log(mix.comps[k].w) + log_normal_iso(x, mix.comps[k].mean, mix.comps[k].std);
  *shift = lw.maxCoeff();
  return lw;
}

}  // namespace

double GaussianMixture::log_density(const Eigen::VectorXd& x) const {
  if (comps.empty()) throw ConfigError("mixture: no components");
  double shift = 0.0;
  const Eigen::VectorXd lw = log_weights(*this, x, &shift);
  return shift + std::log((lw.array() - shift).exp().sum());
}

Eigen::VectorXd GaussianMixture::responsibilities(const Eigen::VectorXd& x) const {
  if (comps.empty()) throw ConfigError("mixture: no components");
  double shift = 0.0;
  const Eigen::VectorXd lw = log_weights(*this, x, &shift);
  Eigen::VectorXd r = (lw.array() - shift).exp();
  return r / r.sum();
}

Eigen::VectorXd GaussianMixture::score(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd r = responsibilities(x);
  Eigen::VectorXd s = Eigen::VectorXd::Zero(x.size());
  for (size_t k = 0; k < comps.size(); ++k)
    s -= r[k] / (comps[k].std * comps[k].std) * (x - comps[k].mean);
  return s;
}

Eigen::MatrixXd GaussianMixture::sample(int n, std::uint64_t seed) const {
  if (comps.empty()) throw ConfigError("mixture: no components");
  double wsum = 0.0;
  for (const auto& c : comps) wsum += c.w;
  Rng rng(derive_seed(seed, 0x3a17));
  Eigen::MatrixXd out(n, dim());
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform() * wsum;
    size_t k = 0;
    while (k + 1 < comps.size() && u >= comps[k].w) {
      u -= comps[k].w;
      ++k;
    }
    out.row(i) =
        (comps[k].mean + comps[k].std * rng.normal_vec(dim())).transpose();
  }
  return out;
}

GaussianMixture GaussianMixture::diffused(const NoiseSchedule& sched, double t_fwd) const {
  const double a = sched.alpha(t_fwd);
  const double sig = sched.sigma(t_fwd);
  GaussianMixture out;
  out.comps.reserve(comps.size());
  for (const auto& c : comps)
    out.comps.push_back({c.w, a * c.mean, std::sqrt(a * a * c.std * c.std + sig * sig)});
  return out;
}

Eigen::VectorXd GaussianMixture::posterior_mean(const NoiseSchedule& sched, double t_fwd,
                                                const Eigen::VectorXd& x) const {
  const double a = sched.alpha(t_fwd);
  const double sig = sched.sigma(t_fwd);
  const Eigen::VectorXd r = diffused(sched, t_fwd).responsibilities(x);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(x.size());
  for (size_t k = 0; k < comps.size(); ++k) {
    const double s2 = comps[k].std * comps[k].std;
    const double v = a * a * s2 + sig * sig;
    out += r[k] * (comps[k].mean + (a * s2 / v) * (x - a * comps[k].mean));
  }
  return out;
}

GaussianMixture two_modes(double offset, double std, int dim) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(dim);
  m[0] = offset;
  return GaussianMixture{{{0.5, m, std}, {0.5, -m, std}}};
}

namespace {

struct AffineStep {
  Eigen::MatrixXd M;
  Eigen::VectorXd u;
  double noise_var;
};

GaussianMoments apply(const AffineStep& st, const GaussianMoments& in) {
  GaussianMoments out;
  out.mean = st.M * in.mean + st.u;
  out.cov = st.M * in.cov * st.M.transpose();
  out.cov.diagonal().array() += st.noise_var;
  return out;
}

}  // namespace

GaussianMoments em_chain_moments(const NoiseSchedule& sched, const TimeGrid& grid,
                                 const AffineMean& mu, GaussianMoments init) {
  const int d = static_cast<int>(init.mean.size());
  GaussianMoments m = std::move(init);
  for (int i = 0; i < grid.steps(); ++i) {
    const double t = grid.nodes[i];
    const double dt = grid.dt(i);
    const double beta = sched.beta(sched.T - t);
    AffineStep st;
    st.M = Eigen::MatrixXd::Identity(d, d) * (1.0 + 0.5 * beta * dt) + beta * dt * mu.S(t);
    st.u = beta * dt * mu.v(t);
    st.noise_var = beta * dt;
    m = apply(st, m);
  }
  return m;
}

GaussianMoments ddpm_chain_moments(const NoiseSchedule& sched, const TimeGrid& grid,
                                   const AffineMean& mu, GaussianMoments init) {
  const int d = static_cast<int>(init.mean.size());
  GaussianMoments m = std::move(init);
  for (int i = 0; i < grid.steps(); ++i) {
    const double t = grid.nodes[i];
    const double beta_i = sched.beta(sched.T - t) * grid.dt(i);
    if (beta_i >= 1.0) throw NumericError("ddpm_chain_moments: grid too coarse");
    const double sh = 1.0 / std::sqrt(1.0 - beta_i);
    AffineStep st;
    st.M = sh * (Eigen::MatrixXd::Identity(d, d) + beta_i * mu.S(t));
    st.u = sh * beta_i * mu.v(t);
    st.noise_var = beta_i;
    m = apply(st, m);
  }
  return m;
}

GaussianMoments reverse_ode_moments(const NoiseSchedule& sched, const AffineMean& mu,
                                    GaussianMoments init, double t0, double t1, int substeps) {
  if (substeps < 1) throw ConfigError("reverse_ode_moments: substeps must be >= 1");
  const int d = static_cast<int>(init.mean.size());
  const double h = (t1 - t0) / substeps;

  auto deriv = [&](double t, const GaussianMoments& s) {
    const double beta = sched.beta(sched.T - t);
    const Eigen::MatrixXd A =
        0.5 * beta * Eigen::MatrixXd::Identity(d, d) + beta * mu.S(t);
    GaussianMoments ds;
    ds.mean = A * s.mean + beta * mu.v(t);
    ds.cov = A * s.cov + s.cov * A.transpose();
    ds.cov.diagonal().array() += beta;
    return ds;
  };
  auto axpy = [](const GaussianMoments& s, double c, const GaussianMoments& k) {
    return GaussianMoments{s.mean + c * k.mean, s.cov + c * k.cov};
  };

  GaussianMoments s = std::move(init);
  for (int i = 0; i < substeps; ++i) {
    const double t = t0 + i * h;
    const GaussianMoments k1 = deriv(t, s);
    const GaussianMoments k2 = deriv(t + 0.5 * h, axpy(s, 0.5 * h, k1));
    const GaussianMoments k3 = deriv(t + 0.5 * h, axpy(s, 0.5 * h, k2));
    const GaussianMoments k4 = deriv(t + h, axpy(s, h, k3));
    s.mean += (h / 6.0) * (k1.mean + 2.0 * k2.mean + 2.0 * k3.mean + k4.mean);
    s.cov += (h / 6.0) * (k1.cov + 2.0 * k2.cov + 2.0 * k3.cov + k4.cov);
  }
  return s;
}

Eigen::MatrixXd transition_matrix(const NoiseSchedule& sched, const AffineMean& mu, double t0,
                                  double t1, int d, int substeps) {
  if (substeps < 1) throw ConfigError("transition_matrix: substeps must be >= 1");
  const double h = (t1 - t0) / substeps;
  auto A_of = [&](double t) -> Eigen::MatrixXd {
    const double beta = sched.beta(sched.T - t);
    return 0.5 * beta * Eigen::MatrixXd::Identity(d, d) + beta * mu.S(t);
  };
  Eigen::MatrixXd phi = Eigen::MatrixXd::Identity(d, d);
  for (int i = 0; i < substeps; ++i) {
    const double t = t0 + i * h;
    const Eigen::MatrixXd k1 = A_of(t) * phi;
    const Eigen::MatrixXd k2 = A_of(t + 0.5 * h) * (phi + 0.5 * h * k1);
    const Eigen::MatrixXd k3 = A_of(t + 0.5 * h) * (phi + 0.5 * h * k2);
    const Eigen::MatrixXd k4 = A_of(t + h) * (phi + h * k3);
    phi += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return phi;
}

double gaussian_kl(const GaussianMoments& p, const GaussianMoments& q) {
  const int d = static_cast<int>(p.mean.size());
  const Eigen::LLT<Eigen::MatrixXd> lq(q.cov);
  if (lq.info() != Eigen::Success) throw NumericError("gaussian_kl: q covariance not SPD");
  const Eigen::LLT<Eigen::MatrixXd> lp(p.cov);
  if (lp.info() != Eigen::Success) throw NumericError("gaussian_kl: p covariance not SPD");

  const Eigen::MatrixXd solved = lq.solve(p.cov);
  const Eigen::VectorXd diff = q.mean - p.mean;
  double logdet_q = 0.0, logdet_p = 0.0;
  for (int i = 0; i < d; ++i) {
    logdet_q += 2.0 * std::log(lq.matrixL()(i, i));
    logdet_p += 2.0 * std::log(lp.matrixL()(i, i));
  }
  return 0.5 * (solved.trace() + diff.dot(lq.solve(diff)) - d + logdet_q - logdet_p);
}

double shift_path_kl(const NoiseSchedule& sched, const Eigen::VectorXd& delta) {
  return 0.5 * delta.squaredNorm() * sched.beta_integral(sched.T);
}

ShiftKlReport gaussian_shift_kl(const NoiseSchedule& sched, const Eigen::VectorXd& m0, double s0,
                                const Eigen::VectorXd& delta, int substeps) {
  if (s0 <= 0.0) throw NumericError("gaussian_shift_kl: s0 must be positive");
  if (delta.size() != m0.size()) throw NumericError("gaussian_shift_kl: dimension mismatch");
  const int d = static_cast<int>(m0.size());

  // Marginal of the forward process at tau is N(alpha m0, rho^2 I); its score
  // is affine, so both the base and the shifted reverse laws stay Gaussian.
  auto rho2 = [&](double tau) {
    const double a = sched.alpha(tau);
    const double sig = sched.sigma(tau);
    return a * a * s0 * s0 + sig * sig;
  };
  AffineMean base;
  base.S = [&, d](double t_rev) -> Eigen::MatrixXd {
    return (-1.0 / rho2(sched.T - t_rev)) * Eigen::MatrixXd::Identity(d, d);
  };
  base.v = [&](double t_rev) -> Eigen::VectorXd {
    const double tau = sched.T - t_rev;
    return (sched.alpha(tau) / rho2(tau)) * m0;
  };
  AffineMean shifted;
  shifted.S = base.S;
  // Evaluate inside the lambda: with a deduced return type the Eigen expression
  // would keep a reference to the temporary from base.v after it is destroyed.
  shifted.v = [&, delta](double t_rev) -> Eigen::VectorXd { return base.v(t_rev) + delta; };

  GaussianMoments init;
  init.mean = sched.alpha(sched.T) * m0;
  init.cov = rho2(sched.T) * Eigen::MatrixXd::Identity(d, d);

  ShiftKlReport rep;
  rep.path_kl = shift_path_kl(sched, delta);
  const GaussianMoments base_term = reverse_ode_moments(sched, base, init, 0.0, sched.T, substeps);
  const GaussianMoments shift_term =
      reverse_ode_moments(sched, shifted, init, 0.0, sched.T, substeps);
  rep.terminal_kl = gaussian_kl(shift_term, base_term);
  return rep;
}

Eigen::VectorXd flow_endpoint_gaussian(const NoiseSchedule& sched, const Eigen::VectorXd& m,
                                       double s, const Eigen::VectorXd& x_start) {
  const double a = sched.alpha(sched.T);
  const double sig = sched.sigma(sched.T);
  const double rho = std::sqrt(a * a * s * s + sig * sig);
  return m + (s / rho) * (x_start - a * m);
}

namespace {

// one-step backward pass for a fixed linear policy
LQValue lq_backup(const LQStep& st, const LQPolicyLin& pol, const LQValue& next) {
  const double M = 1.0 + st.f * st.dt + st.b * pol.k * st.dt;
  const double vb = st.b * pol.c * st.dt;
  const double var = st.b * st.dt * pol.sigma * st.b * st.dt * pol.sigma +
                     st.noise * st.noise * st.dt;
  LQValue cur;
  cur.P = st.dt * (st.rx2 + st.ra2 * pol.k * pol.k) + next.P * M * M;
  cur.Q = st.dt * (st.rx + 2.0 * st.ra2 * pol.k * pol.c + st.ra * pol.k) +
          2.0 * next.P * M * vb + next.Q * M;
  cur.R = st.dt * (st.ra2 * (pol.c * pol.c + pol.sigma * pol.sigma) + st.ra * pol.c) +
          next.P * (vb * vb + var) + next.Q * vb + next.R;
  return cur;
}

}  // namespace

std::vector<LQValue> lq_policy_values(const std::vector<LQStep>& steps, const LQPolicyLin& pol,
                                      const LQTerminal& term) {
  std::vector<LQValue> vals(steps.size() + 1);
  vals.back() = LQValue{term.x2, term.x1, term.x0};
  for (int i = static_cast<int>(steps.size()) - 1; i >= 0; --i)
    vals[i] = lq_backup(steps[i], pol, vals[i + 1]);
  return vals;
}

double lq_q_rate(const LQStep& st, const LQValue& next, const LQValue& cur, double x, double a) {
  const double r = st.rx2 * x * x + st.rx * x + st.ra2 * a * a + st.ra * a;
  const double m = x + (st.f * x + st.b * a) * st.dt;
  const double ev = next.P * (m * m + st.noise * st.noise * st.dt) + next.Q * m + next.R;
  return r + (ev - cur.eval(x)) / st.dt;
}

std::vector<LQPolicyLin> lq_optimal(const std::vector<LQStep>& steps, const LQTerminal& term,
                                    double sigma_expl, std::vector<LQValue>* values) {
  std::vector<LQPolicyLin> pols(steps.size());
  std::vector<LQValue> vals(steps.size() + 1);
  vals.back() = LQValue{term.x2, term.x1, term.x0};
  for (int i = static_cast<int>(steps.size()) - 1; i >= 0; --i) {
    const LQStep& st = steps[i];
    const LQValue& next = vals[i + 1];
    const double curv = st.dt * st.ra2 + next.P * st.b * st.b * st.dt * st.dt;
    if (!(curv < 0.0)) throw NumericError("lq_optimal: objective not concave in the action");
    const double mx = 1.0 + st.f * st.dt;  // slope of E[x'] in x at a = 0
    pols[i].k = -(2.0 * next.P * st.b * st.dt * mx) / (2.0 * curv);
    pols[i].c = -(st.dt * st.ra + next.Q * st.b * st.dt) / (2.0 * curv);
    pols[i].sigma = sigma_expl;
    vals[i] = lq_backup(st, pols[i], next);
  }
  if (values) *values = std::move(vals);
  return pols;
}

namespace {

double shift_objective(const NoiseSchedule& sched, const TimeGrid& grid, const MeanModel& base,
                       const Eigen::VectorXd& theta, double sigma_expl, const RewardModel& rm,
                       int ctx, double beta_kl, std::uint64_t seed) {
  ShiftedMean shifted(&base, theta);
  GaussianPolicy pol{&shifted, sigma_expl};
  const Trajectory traj = rollout(sched, grid, pol, ctx, seed);
  double j = rm.eval(traj.x.row(grid.steps()).transpose(), ctx);
  if (beta_kl != 0.0) {
    for (int i = 0; i < traj.steps(); ++i) {
      const double t = traj.t[i];
      const double g = sched.g(sched.T - t);
      const Eigen::VectorXd gap =
          traj.a.row(i).transpose() - base.mean(t, traj.x.row(i).transpose(), ctx);
      j -= 0.5 * beta_kl * g * g * gap.squaredNorm() * (traj.t[i + 1] - t);
    }
  }
  return j;
}

}  // namespace

Eigen::MatrixXd fd_shift_gradient_samples(const NoiseSchedule& sched, const TimeGrid& grid,
                                          const MeanModel& base, const Eigen::VectorXd& theta,
                                          double sigma_expl, const RewardModel& rm, int ctx,
                                          double beta_kl, double h, int n_rep,
                                          std::uint64_t seed) {
  if (!(h > 0.0)) throw ConfigError("fd gradient: step must be > 0");
  if (n_rep < 2) throw ConfigError("fd gradient: need at least 2 replicates");
  const int d = static_cast<int>(theta.size());
  Eigen::MatrixXd out(n_rep, d);
  for (int i = 0; i < n_rep; ++i) {
    const std::uint64_t si = derive_seed(seed, 0xfd00, i);
    for (int j = 0; j < d; ++j) {
      Eigen::VectorXd tp = theta, tm = theta;
      tp[j] += h;
      tm[j] -= h;
      const double jp = shift_objective(sched, grid, base, tp, sigma_expl, rm, ctx, beta_kl, si);
      const double jm = shift_objective(sched, grid, base, tm, sigma_expl, rm, ctx, beta_kl, si);
      out(i, j) = (jp - jm) / (2.0 * h);
    }
  }
  return out;
}

Eigen::VectorXd shift_objective_samples(const NoiseSchedule& sched, const TimeGrid& grid,
                                        const MeanModel& base, const Eigen::VectorXd& theta,
                                        double sigma_expl, const RewardModel& rm, int ctx,
                                        double beta_kl, int n_rep, std::uint64_t seed) {
  if (n_rep < 1) throw ConfigError("objective samples: need at least 1 replicate");
  Eigen::VectorXd out(n_rep);
  for (int i = 0; i < n_rep; ++i)
    out[i] = shift_objective(sched, grid, base, theta, sigma_expl, rm, ctx, beta_kl,
                             derive_seed(seed, 0xfd00, i));
  return out;
}

}  // namespace scorl::oracle
