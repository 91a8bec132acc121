#include "scorl/mlp.hpp"

#include <cmath>

#include "scorl/errors.hpp"
#include "scorl/rng.hpp"

namespace scorl {
namespace {

struct LayerShape {
  int in, out, w_off, b_off;
};

std::vector<LayerShape> layer_shapes(const MLPSpec& spec) {
  std::vector<LayerShape> shapes;
  int prev = spec.in_dim();
  int off = 0;
  for (size_t l = 0; l <= spec.hidden.size(); ++l) {
    int out = (l == spec.hidden.size()) ? spec.out_dim : spec.hidden[l];
    LayerShape s{prev, out, off, off + prev * out};
    off = s.b_off + out;
    shapes.push_back(s);
    prev = out;
  }
  return shapes;
}

inline double act_fwd(Activation a, double z) {
  if (a == Activation::Tanh) return std::tanh(z);
  return z / (1.0 + std::exp(-z));  // silu
}

inline double act_deriv(Activation a, double z) {
  if (a == Activation::Tanh) {
    const double th = std::tanh(z);
    return 1.0 - th * th;
  }
  const double s = 1.0 / (1.0 + std::exp(-z));
  return s * (1.0 + z * (1.0 - s));
}

using WMap = Eigen::Map<const Eigen::MatrixXd>;
using WMapMut = Eigen::Map<Eigen::MatrixXd>;

}  // namespace

int MLPSpec::n_params() const {
  const auto shapes = layer_shapes(*this);
  const auto& last = shapes.back();
  return last.b_off + last.out;
}

std::vector<MLPSpec::Segment> MLPSpec::segments() const {
  std::vector<Segment> segs;
  const auto shapes = layer_shapes(*this);
  for (size_t l = 0; l < shapes.size(); ++l) {
    const auto& s = shapes[l];
    segs.push_back({"layer" + std::to_string(l) + ".W", s.w_off, s.in * s.out});
    segs.push_back({"layer" + std::to_string(l) + ".b", s.b_off, s.out});
  }
  return segs;
}

int MLPSpec::output_bias_offset() const { return layer_shapes(*this).back().b_off; }

Eigen::VectorXd MLPSpec::init_params(uint64_t seed, bool zero_output_layer) const {
  Rng rng(seed);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(n_params());
  const auto shapes = layer_shapes(*this);
  for (size_t l = 0; l < shapes.size(); ++l) {
    const auto& s = shapes[l];
    if (zero_output_layer && l + 1 == shapes.size()) break;  // leave final layer at zero
    const double std = std::sqrt(2.0 / (s.in + s.out));
    for (int i = 0; i < s.in * s.out; ++i) p[s.w_off + i] = std * rng.normal();
    // biases stay zero
  }
  return p;
}

Eigen::VectorXd mlp_features(const MLPSpec& spec, double t, const Eigen::VectorXd& x, int c) {
  if (x.size() != spec.x_dim) throw NumericError("mlp: x dimension mismatch");
  if (spec.n_contexts > 0 && (c < 0 || c >= spec.n_contexts))
    throw NumericError("mlp: context id out of range");
  Eigen::VectorXd f = Eigen::VectorXd::Zero(spec.in_dim());
  f.head(spec.x_dim) = x;
  if (spec.time_freqs > 0) {
    const double tt = t / spec.t_scale;
    const int K = spec.time_freqs;
    for (int k = 0; k < K; ++k) {
      // geometric ladder from pi/2 up to 64*pi over the unit horizon
      const double w = 0.5 * M_PI * std::pow(128.0, K > 1 ? static_cast<double>(k) / (K - 1) : 0.0);
      f[spec.x_dim + 2 * k] = std::sin(w * tt);
      f[spec.x_dim + 2 * k + 1] = std::cos(w * tt);
    }
  }
  if (spec.n_contexts > 0) f[spec.x_dim + 2 * spec.time_freqs + c] = 1.0;
  return f;
}

Eigen::VectorXd mlp_forward(const MLPSpec& spec, const Eigen::VectorXd& p, double t,
                            const Eigen::VectorXd& x, int c, MlpCache* cache) {
  if (p.size() != spec.n_params()) throw NumericError("mlp: parameter vector size mismatch");
  const auto shapes = layer_shapes(spec);
  Eigen::VectorXd h = mlp_features(spec, t, x, c);
  if (cache) {
    cache->feat = h;
    cache->z.clear();
    cache->h.clear();
  }
  for (size_t l = 0; l < shapes.size(); ++l) {
    const auto& s = shapes[l];
    WMap W(p.data() + s.w_off, s.out, s.in);
    Eigen::VectorXd z = W * h + p.segment(s.b_off, s.out);
    if (l + 1 == shapes.size()) return z;  // linear output layer
    if (cache) cache->z.push_back(z);
    for (int i = 0; i < z.size(); ++i) z[i] = act_fwd(spec.act, z[i]);
    if (cache) cache->h.push_back(z);
    h = std::move(z);
  }
  return h;  // unreachable; shapes is never empty
}

void mlp_backward(const MLPSpec& spec, const Eigen::VectorXd& p, const MlpCache& cache,
                  const Eigen::VectorXd& dout, Eigen::VectorXd& grad, Eigen::VectorXd* dx) {
  const auto shapes = layer_shapes(spec);
  const int L = static_cast<int>(shapes.size());
  Eigen::VectorXd delta = dout;
  for (int l = L - 1; l >= 0; --l) {
    const auto& s = shapes[l];
    const Eigen::VectorXd& input = (l == 0) ? cache.feat : cache.h[l - 1];
    WMapMut gW(grad.data() + s.w_off, s.out, s.in);
    gW.noalias() += delta * input.transpose();
    grad.segment(s.b_off, s.out) += delta;
    if (l == 0 && dx == nullptr) break;
    WMap W(p.data() + s.w_off, s.out, s.in);
    Eigen::VectorXd dinput = W.transpose() * delta;
    if (l == 0) {
      *dx += dinput.head(spec.x_dim);
      break;
    }
    const Eigen::VectorXd& z = cache.z[l - 1];
    for (int i = 0; i < dinput.size(); ++i) dinput[i] *= act_deriv(spec.act, z[i]);
    delta = std::move(dinput);
  }
}

Eigen::VectorXd mlp_vjp_input(const MLPSpec& spec, const Eigen::VectorXd& p, double t,
                              const Eigen::VectorXd& x, int c, const Eigen::VectorXd& dout) {
  const auto shapes = layer_shapes(spec);
  MlpCache cache;
  mlp_forward(spec, p, t, x, c, &cache);
  Eigen::VectorXd delta = dout;
  for (int l = static_cast<int>(shapes.size()) - 1; l >= 0; --l) {
    const auto& s = shapes[l];
    WMap W(p.data() + s.w_off, s.out, s.in);
    Eigen::VectorXd dinput = W.transpose() * delta;
    if (l == 0) return dinput.head(spec.x_dim);
    const Eigen::VectorXd& z = cache.z[l - 1];
    for (int i = 0; i < dinput.size(); ++i) dinput[i] *= act_deriv(spec.act, z[i]);
    delta = std::move(dinput);
  }
  return Eigen::VectorXd::Zero(spec.x_dim);
}

Eigen::VectorXd mlp_grad_input(const MLPSpec& spec, const Eigen::VectorXd& p, double t,
                               const Eigen::VectorXd& x, int c) {
  if (spec.out_dim != 1) throw NumericError("mlp_grad_input: scalar-output network required");
  Eigen::VectorXd one = Eigen::VectorXd::Ones(1);
  return mlp_vjp_input(spec, p, t, x, c, one);
}

double mlp_batch_loss(const MLPSpec& spec, const Eigen::VectorXd& p,
                      const std::vector<NetSample>& batch, const OutputLoss& loss) {
  double total = 0.0;
  Eigen::VectorXd dout(spec.out_dim);
  for (size_t i = 0; i < batch.size(); ++i) {
    const Eigen::VectorXd out = mlp_forward(spec, p, batch[i].t, batch[i].x, batch[i].c);
    total += loss(static_cast<int>(i), out, dout);
  }
  return total;
}

double mlp_value_and_grad(const MLPSpec& spec, const Eigen::VectorXd& p,
                          const std::vector<NetSample>& batch, const OutputLoss& loss,
                          Eigen::VectorXd& grad) {
  grad = Eigen::VectorXd::Zero(p.size());
  double total = 0.0;
  MlpCache cache;
  Eigen::VectorXd dout(spec.out_dim);
  for (size_t i = 0; i < batch.size(); ++i) {
    const Eigen::VectorXd out = mlp_forward(spec, p, batch[i].t, batch[i].x, batch[i].c, &cache);
    total += loss(static_cast<int>(i), out, dout);
    mlp_backward(spec, p, cache, dout, grad);
  }
  return total;
}

}  // namespace scorl
