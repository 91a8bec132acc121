#pragma once
#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace scorl {

enum class Activation { Tanh, Silu };

// Fully connected net over features [x | sinusoidal(t) | one-hot(c)].
// Parameters live OUTSIDE the spec in a flat double vector; every routine
// takes the flat vector explicitly. That makes optimizer state, checkpoint
// serialization and finite-difference checks trivial, at the cost of passing
// one extra argument around.
struct MLPSpec {
  int x_dim = 2;
  int out_dim = 2;
  std::vector<int> hidden = {64, 64};
  Activation act = Activation::Silu;
  int time_freqs = 16;  // sin/cos pairs, geometrically spaced; 0 disables the time input
  int n_contexts = 0;   // one-hot width; 0 disables the context input
  double t_scale = 1.0; // time is divided by this before embedding (set to schedule T)

  int in_dim() const { return x_dim + 2 * time_freqs + n_contexts; }
  int n_layers() const { return static_cast<int>(hidden.size()) + 1; }
  int n_params() const;

  // named views into the flat parameter vector; offsets partition [0, n_params)
  struct Segment {
    std::string name;
    int offset;
    int size;
  };
  std::vector<Segment> segments() const;

  // offset of the output layer's bias; adding a constant to these coordinates
  // shifts the network output by that constant (used by shift families)
  int output_bias_offset() const;

  Eigen::VectorXd init_params(uint64_t seed, bool zero_output_layer = false) const;
};

struct MlpCache {
  Eigen::VectorXd feat;
  std::vector<Eigen::VectorXd> z;  // pre-activations of hidden layers
  std::vector<Eigen::VectorXd> h;  // post-activations of hidden layers
};

Eigen::VectorXd mlp_features(const MLPSpec& spec, double t, const Eigen::VectorXd& x, int c);

Eigen::VectorXd mlp_forward(const MLPSpec& spec, const Eigen::VectorXd& p, double t,
                            const Eigen::VectorXd& x, int c, MlpCache* cache = nullptr);

// Reverse-mode accumulation. dout is dLoss/d(output); gradients are ADDED to
// grad (and to dx when given), so callers can accumulate over a batch.
void mlp_backward(const MLPSpec& spec, const Eigen::VectorXd& p, const MlpCache& cache,
                  const Eigen::VectorXd& dout, Eigen::VectorXd& grad, Eigen::VectorXd* dx = nullptr);

// d(output)/d(x) contracted with dout, no parameter gradient.
Eigen::VectorXd mlp_vjp_input(const MLPSpec& spec, const Eigen::VectorXd& p, double t,
                              const Eigen::VectorXd& x, int c, const Eigen::VectorXd& dout);

// gradient of a scalar-output net with respect to x
Eigen::VectorXd mlp_grad_input(const MLPSpec& spec, const Eigen::VectorXd& p, double t,
                               const Eigen::VectorXd& x, int c);

struct NetSample {
  double t = 0.0;
  Eigen::VectorXd x;
  int c = 0;
};

// Per-sample loss over network outputs: returns the loss contribution and
// writes dLoss/d(output) into dout. The same closure drives both the
// reverse-mode path and forward-only finite-difference checks.
using OutputLoss = std::function<double(int index, const Eigen::VectorXd& out, Eigen::VectorXd& dout)>;

double mlp_batch_loss(const MLPSpec& spec, const Eigen::VectorXd& p,
                      const std::vector<NetSample>& batch, const OutputLoss& loss);

// total loss over the batch plus dLoss/d(params); grad is overwritten.
double mlp_value_and_grad(const MLPSpec& spec, const Eigen::VectorXd& p,
                          const std::vector<NetSample>& batch, const OutputLoss& loss,
                          Eigen::VectorXd& grad);

}  // namespace scorl
