#pragma once
#include <Eigen/Core>

namespace scorl {

// Terminal reward models r(x) with |r| <= bound, declared in configs by kind.
//   TargetDistance: -||x - target||^2, clipped below at -bound.
//   ModeLogistic:   bound * tanh(slope * (u . x - offset) / bound); a soft
//                   linear reward along direction u that saturates at the
//                   bound instead of clipping.
//   RbfTable:       sum_k v_k exp(-||x - p_k||^2 / (2 w^2)), clipped to the
//                   bound; a free-form lookup reward.
// Gradients use the subgradient 0 inside clipped regions.
struct RewardModel {
  enum class Kind { TargetDistance, ModeLogistic, RbfTable };

  Kind kind = Kind::TargetDistance;
  double bound = 25.0;

  Eigen::VectorXd target;     // TargetDistance

  Eigen::VectorXd direction;  // ModeLogistic
  double offset = 0.0;
  double slope = 1.0;

  Eigen::MatrixXd points;     // RbfTable, one row per center
  Eigen::VectorXd values;
  double width = 1.0;

  static RewardModel target_distance(Eigen::VectorXd target, double bound);
  static RewardModel mode_logistic(Eigen::VectorXd direction, double offset, double slope,
                                   double bound);
  static RewardModel rbf_table(Eigen::MatrixXd points, Eigen::VectorXd values, double width,
                               double bound);

  // context id reserved for conditional rewards; current kinds ignore it
  double eval(const Eigen::VectorXd& x, int c = 0) const;
  Eigen::VectorXd grad(const Eigen::VectorXd& x, int c = 0) const;
};

}  // namespace scorl
