#include "scorl/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "scorl/errors.hpp"
#include "scorl/rng.hpp"

namespace scorl {

namespace {

Eigen::MatrixXd subsample_rows(const Eigen::MatrixXd& x, int keep, Rng& rng) {
  if (x.rows() <= keep) return x;
  std::vector<int> idx = shuffled_indices(static_cast<int>(x.rows()), rng);
  Eigen::MatrixXd out(keep, x.cols());
  for (int i = 0; i < keep; ++i) out.row(i) = x.row(idx[i]);
  return out;
}

// Unbiased MMD^2 over a pooled kernel matrix, with the first block of
// `labels` entries set to true marking side A.
double mmd2_from_kernel(const Eigen::MatrixXd& k, const std::vector<char>& labels, int m, int n) {
  double s_aa = 0.0, s_bb = 0.0, s_ab = 0.0;
  const int total = static_cast<int>(labels.size());
  for (int i = 0; i < total; ++i) {
    for (int j = i + 1; j < total; ++j) {
      const double v = k(i, j);
      if (labels[i] && labels[j]) {
        s_aa += v;
      } else if (!labels[i] && !labels[j]) {
        s_bb += v;
      } else {
        s_ab += v;
      }
    }
  }
  const double mm = static_cast<double>(m) * (m - 1) / 2.0;
  const double nn = static_cast<double>(n) * (n - 1) / 2.0;
  const double mn = static_cast<double>(m) * n;
  return s_aa / mm + s_bb / nn - 2.0 * s_ab / mn;
}

}  // namespace

MMDResult mmd_gaussian(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, int n_perm,
                       uint64_t seed, int max_side) {
  if (x.rows() < 2 || y.rows() < 2) throw NumericError("mmd_gaussian: need >= 2 points per side");
  if (x.cols() != y.cols()) throw NumericError("mmd_gaussian: dimension mismatch");

  Rng rng(derive_seed(seed, 0x33d7));
  const Eigen::MatrixXd xs = subsample_rows(x, max_side, rng);
  const Eigen::MatrixXd ys = subsample_rows(y, max_side, rng);
  const int m = static_cast<int>(xs.rows());
  const int n = static_cast<int>(ys.rows());
  const int total = m + n;

  Eigen::MatrixXd pooled(total, xs.cols());
  pooled.topRows(m) = xs;
  pooled.bottomRows(n) = ys;

  // Squared distances via the norm expansion; clamp tiny negatives from
  // cancellation before they reach exp().
  const Eigen::VectorXd sq = pooled.rowwise().squaredNorm();
  Eigen::MatrixXd d2 = sq.replicate(1, total) + sq.transpose().replicate(total, 1) -
                       2.0 * pooled * pooled.transpose();
  d2 = d2.cwiseMax(0.0);

  std::vector<double> offdiag;
  offdiag.reserve(static_cast<size_t>(total) * (total - 1) / 2);
  for (int i = 0; i < total; ++i)
    for (int j = i + 1; j < total; ++j) offdiag.push_back(d2(i, j));
  const size_t mid = offdiag.size() / 2;
  std::nth_element(offdiag.begin(), offdiag.begin() + mid, offdiag.end());
  double h2 = offdiag[mid] / 2.0;
  if (!(h2 > 0.0)) h2 = 1e-12;  // degenerate cloud of identical points

  const Eigen::MatrixXd k = (-d2 / (2.0 * h2)).array().exp().matrix();

  MMDResult res;
  res.bandwidth = std::sqrt(h2);
  res.n_x = m;
  res.n_y = n;

  std::vector<char> labels(total, 0);
  std::fill(labels.begin(), labels.begin() + m, 1);
  res.mmd2 = mmd2_from_kernel(k, labels, m, n);

  std::vector<double> null_vals;
  null_vals.reserve(n_perm);
  std::vector<int> order(total);
  for (int p = 0; p < n_perm; ++p) {
    order = shuffled_indices(total, rng);
    std::vector<char> perm(total, 0);
    for (int i = 0; i < m; ++i) perm[order[i]] = 1;
    null_vals.push_back(mmd2_from_kernel(k, perm, m, n));
  }
  if (!null_vals.empty()) {
    const size_t q = std::min(null_vals.size() - 1,
                              static_cast<size_t>(std::ceil(0.95 * null_vals.size())) - 1);
    std::nth_element(null_vals.begin(), null_vals.begin() + q, null_vals.end());
    res.null_q95 = null_vals[q];
  }
  return res;
}

oracle::GaussianMoments empirical_moments(const Eigen::MatrixXd& x) {
  if (x.rows() < 2) throw NumericError("empirical_moments: need >= 2 samples");
  oracle::GaussianMoments mom;
  mom.mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mom.mean.transpose();
  mom.cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
  return mom;
}

double moment_kl(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  return oracle::gaussian_kl(empirical_moments(x), empirical_moments(y));
}

ScoreGridReport score_grid_error(const NoiseSchedule& sched, const ScoreFn& score,
                                 const oracle::GaussianMixture& mix,
                                 const std::vector<double>& t_slices, int grid_n, int ctx) {
  if (mix.dim() != 2) throw NumericError("score_grid_error: grid comparison is 2-D only");
  ScoreGridReport rep;
  for (double t : t_slices) {
    const oracle::GaussianMixture diff = mix.diffused(sched, t);

    // Square window wide enough to cover every diffused mode to ~3.5 sigma.
    double span = 0.0, max_std = 0.0;
    for (const auto& comp : diff.comps) {
      span = std::max(span, comp.mean.cwiseAbs().maxCoeff());
      max_std = std::max(max_std, comp.std);
    }
    const double half = span + 3.5 * max_std;

    double num = 0.0, den = 0.0, wsum = 0.0;
    Eigen::VectorXd pt(2);
    for (int i = 0; i < grid_n; ++i) {
      for (int j = 0; j < grid_n; ++j) {
        pt(0) = -half + 2.0 * half * i / (grid_n - 1);
        pt(1) = -half + 2.0 * half * j / (grid_n - 1);
        const double w = std::exp(diff.log_density(pt));
        const Eigen::VectorXd truth = diff.score(pt);
        const Eigen::VectorXd learned = score(t, pt, ctx);
        num += w * (learned - truth).squaredNorm();
        den += w * truth.squaredNorm();
        wsum += w;
      }
    }
    if (!(wsum > 0.0) || !(den > 0.0))
      throw NumericError("score_grid_error: degenerate density weights on grid");
    rep.times.push_back(t);
    rep.rel_error.push_back(std::sqrt(num / den));
    rep.max_rel_error = std::max(rep.max_rel_error, rep.rel_error.back());
  }
  return rep;
}

}  // namespace scorl
