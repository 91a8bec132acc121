#include "scorl/optimizer.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "scorl/errors.hpp"

namespace scorl {

Optimizer Optimizer::sgd(double lr) {
  Optimizer o;
  o.kind = Kind::Sgd;
  o.lr = lr;
  return o;
}

Optimizer Optimizer::adam(double lr) {
  Optimizer o;
  o.kind = Kind::Adam;
  o.lr = lr;
  return o;
}

void Optimizer::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (grad.size() != params.size()) throw NumericError("optimizer: gradient size mismatch");
  if (kind == Kind::Sgd) {
    params -= lr * grad;
    return;
  }
  if (m.size() != params.size()) {
    m = Eigen::VectorXd::Zero(params.size());
    v = Eigen::VectorXd::Zero(params.size());
    t = 0;
  }
  t += 1;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (int i = 0; i < params.size(); ++i) {
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

void Optimizer::reset() {
  t = 0;
  m.resize(0);
  v.resize(0);
}

void Optimizer::save_state(std::ostream& os) const {
  const int64_t n = m.size();
  os.write(reinterpret_cast<const char*>(&t), sizeof(t));
  os.write(reinterpret_cast<const char*>(&n), sizeof(n));
  if (n > 0) {
    os.write(reinterpret_cast<const char*>(m.data()), n * sizeof(double));
    os.write(reinterpret_cast<const char*>(v.data()), n * sizeof(double));
  }
}

void Optimizer::load_state(std::istream& is) {
  int64_t n = 0;
  is.read(reinterpret_cast<char*>(&t), sizeof(t));
  is.read(reinterpret_cast<char*>(&n), sizeof(n));
  m.resize(n);
  v.resize(n);
  if (n > 0) {
    is.read(reinterpret_cast<char*>(m.data()), n * sizeof(double));
    is.read(reinterpret_cast<char*>(v.data()), n * sizeof(double));
  }
  if (!is) throw ConfigError("optimizer: truncated state");
}

}  // namespace scorl
