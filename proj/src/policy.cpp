#include "scorl/policy.hpp"

#include <cmath>

#include "scorl/errors.hpp"

namespace scorl {

ActionSample sample_action(const GaussianPolicy& pol, double t_rev, const Eigen::VectorXd& x, int c,
                           Rng& rng) {
  ActionSample out;
  const Eigen::VectorXd mu = pol.mean(t_rev, x, c);
  if (pol.sigma_expl == 0.0) {
    out.a = mu;
    out.deterministic = true;
    out.logp = 0.0;  // no density on a point mass; flagged instead
    return out;
  }
  if (!(pol.sigma_expl > 0.0)) throw NumericError("sample_action: negative exploration width");
  out.a = mu + pol.sigma_expl * rng.normal_vec(static_cast<int>(mu.size()));
  out.logp = gaussian_logp(out.a, mu, pol.sigma_expl);
  return out;
}

double gaussian_logp(const Eigen::VectorXd& a, const Eigen::VectorXd& mu, double sigma) {
  const int d = static_cast<int>(a.size());
  const double quad = (a - mu).squaredNorm() / (sigma * sigma);
  return -0.5 * quad - d * std::log(sigma) - 0.5 * d * std::log(2.0 * M_PI);
}

double action_logp(const GaussianPolicy& pol, double t_rev, const Eigen::VectorXd& x, int c,
                   const Eigen::VectorXd& a) {
  if (!(pol.sigma_expl > 0.0)) throw NumericError("action_logp: deterministic policy has no density");
  return gaussian_logp(a, pol.mean(t_rev, x, c), pol.sigma_expl);
}

double likelihood_ratio(const GaussianPolicy& pol_new, const GaussianPolicy& pol_old, double t_rev,
                        const Eigen::VectorXd& x, int c, const Eigen::VectorXd& a) {
  return std::exp(action_logp(pol_new, t_rev, x, c, a) - action_logp(pol_old, t_rev, x, c, a));
}

double policy_kl(const GaussianPolicy& pol_new, const GaussianPolicy& pol_old, double t_rev,
                 const Eigen::VectorXd& x, int c) {
  if (pol_new.sigma_expl != pol_old.sigma_expl)
    throw NumericError("policy_kl: exploration widths differ, closed form assumes shared width");
  if (!(pol_new.sigma_expl > 0.0)) throw NumericError("policy_kl: needs sigma_expl > 0");
  const double s2 = pol_new.sigma_expl * pol_new.sigma_expl;
  const Eigen::VectorXd diff =
      pol_new.mean(t_rev, x, c) - pol_old.mean(t_rev, x, c);
  return diff.squaredNorm() / (2.0 * s2);
}

}  // namespace scorl
