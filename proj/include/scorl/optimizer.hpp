#pragma once
#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>

namespace scorl {

// First-order optimizers over flat parameter vectors, descent convention:
// step() moves parameters against the supplied gradient. Callers maximizing
// an objective pass the negated gradient.
struct Optimizer {
  enum class Kind { Sgd, Adam };

  Kind kind = Kind::Adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  int64_t t = 0;
  Eigen::VectorXd m, v;  // adam moments, sized lazily on first step

  static Optimizer sgd(double lr);
  static Optimizer adam(double lr);

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
  void reset();

  // exact-state serialization (doubles), used by run resume files
  void save_state(std::ostream& os) const;
  void load_state(std::istream& is);
};

}  // namespace scorl
