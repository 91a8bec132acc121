#pragma once
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "scorl/oracles.hpp"
#include "scorl/schedule.hpp"
#include "scorl/score_model.hpp"

namespace scorl {

// Sample-quality metrics: kernel two-sample distance with a permutation null,
// Gaussian moment matching, and a grid comparison of a learned score field
// against an analytic mixture score.

struct MMDResult {
  double mmd2 = 0.0;       // unbiased U-statistic estimate
  double null_q95 = 0.0;   // 95th percentile of the label-permutation null
  double bandwidth = 0.0;  // median-heuristic kernel width
  int n_x = 0;             // side sizes after subsampling
  int n_y = 0;
};

// Gaussian-kernel MMD^2 between two point sets (rows are samples). Sides
// larger than max_side are subsampled with the given seed before the kernel
// matrix is formed, keeping cost bounded at (2 * max_side)^2.
MMDResult mmd_gaussian(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, int n_perm,
                       uint64_t seed, int max_side = 1000);

oracle::GaussianMoments empirical_moments(const Eigen::MatrixXd& x);

// KL(N(moments of x) || N(moments of y)); a moment-matched fidelity score
// that is exact when both populations are Gaussian.
double moment_kl(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

struct ScoreGridReport {
  std::vector<double> times;      // forward times of the evaluated slices
  std::vector<double> rel_error;  // density-weighted relative L2 per slice
  double max_rel_error = 0.0;
};

// Compares score(t, x, c) with the analytic diffused-mixture score on a
// square grid per time slice, weighting cells by the diffused density so the
// error is dominated by regions the process actually visits. 2-D data only.
ScoreGridReport score_grid_error(const NoiseSchedule& sched, const ScoreFn& score,
                                 const oracle::GaussianMixture& mix,
                                 const std::vector<double>& t_slices, int grid_n = 21,
                                 int ctx = 0);

}  // namespace scorl
