#include "scorl/reward.hpp"

#include <cmath>

#include "scorl/errors.hpp"

namespace scorl {

RewardModel RewardModel::target_distance(Eigen::VectorXd target, double bound) {
  if (!(bound > 0.0)) throw ConfigError("reward: bound must be > 0");
  RewardModel r;
  r.kind = Kind::TargetDistance;
  r.target = std::move(target);
  r.bound = bound;
  return r;
}

RewardModel RewardModel::mode_logistic(Eigen::VectorXd direction, double offset, double slope,
                                       double bound) {
  if (!(bound > 0.0)) throw ConfigError("reward: bound must be > 0");
  if (direction.norm() == 0.0) throw ConfigError("reward: zero direction");
  RewardModel r;
  r.kind = Kind::ModeLogistic;
  r.direction = std::move(direction);
  r.offset = offset;
  r.slope = slope;
  r.bound = bound;
  return r;
}

RewardModel RewardModel::rbf_table(Eigen::MatrixXd points, Eigen::VectorXd values, double width,
                                   double bound) {
  if (!(bound > 0.0)) throw ConfigError("reward: bound must be > 0");
  if (points.rows() != values.size()) throw ConfigError("reward: table size mismatch");
  if (!(width > 0.0)) throw ConfigError("reward: rbf width must be > 0");
  RewardModel r;
  r.kind = Kind::RbfTable;
  r.points = std::move(points);
  r.values = std::move(values);
  r.width = width;
  r.bound = bound;
  return r;
}

double RewardModel::eval(const Eigen::VectorXd& x, int) const {
  switch (kind) {
    case Kind::TargetDistance: {
      const double raw = -(x - target).squaredNorm();
      return raw < -bound ? -bound : raw;
    }
    case Kind::ModeLogistic:
      return bound * std::tanh(slope * (direction.dot(x) - offset) / bound);
    case Kind::RbfTable: {
      double raw = 0.0;
      for (int k = 0; k < points.rows(); ++k) {
        const double d2 = (x - points.row(k).transpose()).squaredNorm();
        raw += values[k] * std::exp(-d2 / (2.0 * width * width));
      }
      if (raw > bound) return bound;
      if (raw < -bound) return -bound;
      return raw;
    }
  }
  return 0.0;
}

Eigen::VectorXd RewardModel::grad(const Eigen::VectorXd& x, int) const {
  switch (kind) {
    case Kind::TargetDistance: {
      if (-(x - target).squaredNorm() < -bound) return Eigen::VectorXd::Zero(x.size());
      return -2.0 * (x - target);
    }
    case Kind::ModeLogistic: {
      const double z = slope * (direction.dot(x) - offset) / bound;
      const double th = std::tanh(z);
      return slope * (1.0 - th * th) * direction;
    }
    case Kind::RbfTable: {
      double raw = 0.0;
      Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
      for (int k = 0; k < points.rows(); ++k) {
        const Eigen::VectorXd diff = x - points.row(k).transpose();
        const double kern = values[k] * std::exp(-diff.squaredNorm() / (2.0 * width * width));
        raw += kern;
        g -= kern * diff / (width * width);
      }
      if (raw > bound || raw < -bound) return Eigen::VectorXd::Zero(x.size());
      return g;
    }
  }
  return Eigen::VectorXd::Zero(x.size());
}

}  // namespace scorl
