#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "scorl/checkpoint.hpp"
#include "scorl/errors.hpp"
#include "scorl/mlp.hpp"
#include "scorl/optimizer.hpp"
#include "scorl/rng.hpp"
#include "support/testutil.hpp"

using namespace scorl;

namespace {

MLPSpec small_spec(Activation act, int out_dim = 2, int n_ctx = 0) {
  MLPSpec spec;
  spec.x_dim = 2;
  spec.out_dim = out_dim;
  spec.hidden = {8, 6};
  spec.act = act;
  spec.time_freqs = 4;
  spec.n_contexts = n_ctx;
  spec.t_scale = 1.0;
  return spec;
}

// Scalar probe dout . f(p) used to turn the vector net into an FD target.
double probe(const MLPSpec& spec, const Eigen::VectorXd& p, double t, const Eigen::VectorXd& x,
             int c, const Eigen::VectorXd& dout) {
  return dout.dot(mlp_forward(spec, p, t, x, c));
}

void check_param_grad(const MLPSpec& spec, uint64_t seed) {
  Rng rng(seed);
  const Eigen::VectorXd p = spec.init_params(seed);
  const Eigen::VectorXd x = rng.normal_vec(spec.x_dim);
  const Eigen::VectorXd dout = rng.normal_vec(spec.out_dim);
  const double t = 0.37;
  const int c = spec.n_contexts > 0 ? 1 : 0;

  MlpCache cache;
  mlp_forward(spec, p, t, x, c, &cache);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(spec.n_params());
  Eigen::VectorXd dx = Eigen::VectorXd::Zero(spec.x_dim);
  mlp_backward(spec, p, cache, dout, grad, &dx);

  auto f = [&](const Eigen::VectorXd& q) { return probe(spec, q, t, x, c, dout); };
  int bad = 0;
  for (int k = 0; k < 100; ++k) {
    Eigen::VectorXd d = rng.normal_vec(spec.n_params());
    d /= d.norm();
    const double fd = testutil::fd_dir(f, p, d, 1e-5);
    const double an = grad.dot(d);
    const double scale = std::max({std::abs(fd), std::abs(an), 1e-8});
    if (std::abs(fd - an) / scale > 1e-3) ++bad;
  }
  CHECK(bad == 0);

  // Input gradient from the same backward pass, and via the dedicated probes.
  auto fx = [&](const Eigen::VectorXd& q) { return probe(spec, p, t, q, c, dout); };
  const Eigen::VectorXd fd_x = testutil::fd_grad(fx, x, 1e-6);
  CHECK((fd_x - dx).norm() <= 1e-6 * std::max(1.0, fd_x.norm()));
  CHECK((mlp_vjp_input(spec, p, t, x, c, dout) - dx).norm() <= 1e-12);
}

}  // namespace

TEST_CASE("parameter segments partition the flat vector") {
  const MLPSpec spec = small_spec(Activation::Silu, 3, 2);
  const auto segs = spec.segments();
  int cursor = 0;
  for (const auto& s : segs) {
    CHECK(s.offset == cursor);
    CHECK(s.size > 0);
    cursor += s.size;
  }
  CHECK(cursor == spec.n_params());
  CHECK(spec.in_dim() == 2 + 2 * 4 + 2);
}

TEST_CASE("init is seed-deterministic and the zeroed head outputs zero") {
  const MLPSpec spec = small_spec(Activation::Tanh);
  CHECK(spec.init_params(5) == spec.init_params(5));
  CHECK(spec.init_params(5) != spec.init_params(6));

  const Eigen::VectorXd pz = spec.init_params(5, true);
  Rng rng(1);
  for (int i = 0; i < 5; ++i) {
    const Eigen::VectorXd out = mlp_forward(spec, pz, 0.3, rng.normal_vec(2), 0);
    CHECK(out.norm() == 0.0);
  }
}

TEST_CASE("output bias coordinates shift the output additively") {
  const MLPSpec spec = small_spec(Activation::Silu);
  Eigen::VectorXd p = spec.init_params(2);
  const Eigen::VectorXd x = Eigen::Vector2d(0.4, -1.2);
  const Eigen::VectorXd before = mlp_forward(spec, p, 0.6, x, 0);
  const int off = spec.output_bias_offset();
  p(off) += 0.25;
  p(off + 1) -= 0.5;
  const Eigen::VectorXd after = mlp_forward(spec, p, 0.6, x, 0);
  CHECK(std::abs(after(0) - before(0) - 0.25) <= 1e-14);
  CHECK(std::abs(after(1) - before(1) + 0.5) <= 1e-14);
}

TEST_CASE("reverse mode matches finite differences for every net shape") {
  check_param_grad(small_spec(Activation::Silu), 21);
  check_param_grad(small_spec(Activation::Tanh), 22);
  check_param_grad(small_spec(Activation::Silu, 1), 23);       // scalar head
  check_param_grad(small_spec(Activation::Tanh, 2, 3), 24);    // with contexts
  MLPSpec no_time = small_spec(Activation::Silu);
  no_time.time_freqs = 0;
  check_param_grad(no_time, 25);
}

TEST_CASE("scalar-output input gradient") {
  const MLPSpec spec = small_spec(Activation::Tanh, 1);
  const Eigen::VectorXd p = spec.init_params(31);
  const Eigen::VectorXd x = Eigen::Vector2d(-0.3, 0.9);
  auto f = [&](const Eigen::VectorXd& q) { return mlp_forward(spec, p, 0.5, q, 0)(0); };
  const Eigen::VectorXd fd = testutil::fd_grad(f, x, 1e-6);
  const Eigen::VectorXd an = mlp_grad_input(spec, p, 0.5, x, 0);
  CHECK((fd - an).norm() <= 1e-6 * std::max(1.0, fd.norm()));
}

TEST_CASE("backward accumulates instead of overwriting") {
  const MLPSpec spec = small_spec(Activation::Silu);
  const Eigen::VectorXd p = spec.init_params(8);
  Rng rng(8);
  const Eigen::VectorXd x = rng.normal_vec(2), dout = rng.normal_vec(2);
  MlpCache cache;
  mlp_forward(spec, p, 0.2, x, 0, &cache);

  Eigen::VectorXd once = Eigen::VectorXd::Zero(spec.n_params());
  mlp_backward(spec, p, cache, dout, once);
  Eigen::VectorXd twice = Eigen::VectorXd::Zero(spec.n_params());
  mlp_backward(spec, p, cache, dout, twice);
  mlp_backward(spec, p, cache, dout, twice);
  CHECK((twice - 2.0 * once).norm() <= 1e-12 * std::max(1.0, once.norm()));
}

TEST_CASE("batch loss gradient matches finite differences") {
  const MLPSpec spec = small_spec(Activation::Silu);
  Rng rng(12);
  const Eigen::VectorXd p = spec.init_params(12);
  std::vector<NetSample> batch;
  std::vector<Eigen::VectorXd> targets;
  for (int i = 0; i < 6; ++i) {
    batch.push_back({0.1 + 0.1 * i, rng.normal_vec(2), 0});
    targets.push_back(rng.normal_vec(2));
  }
  OutputLoss loss = [&](int i, const Eigen::VectorXd& out, Eigen::VectorXd& dout) {
    dout = 2.0 * (out - targets[i]);
    return (out - targets[i]).squaredNorm();
  };
  Eigen::VectorXd grad;
  const double val = mlp_value_and_grad(spec, p, batch, loss, grad);
  CHECK(testutil::rel_err(val, mlp_batch_loss(spec, p, batch, loss)) <= 1e-12);

  auto f = [&](const Eigen::VectorXd& q) { return mlp_batch_loss(spec, q, batch, loss); };
  Rng dir_rng(13);
  for (int k = 0; k < 40; ++k) {
    Eigen::VectorXd d = dir_rng.normal_vec(spec.n_params());
    d /= d.norm();
    const double fd = testutil::fd_dir(f, p, d, 1e-5);
    CHECK(std::abs(fd - grad.dot(d)) <= 1e-3 * std::max({std::abs(fd), std::abs(grad.dot(d)), 1e-8}));
  }
}

TEST_CASE("optimizers descend a quadratic") {
  const Eigen::VectorXd target = Eigen::Vector3d(1.0, -2.0, 0.5);
  auto run = [&](Optimizer opt, int steps) {
    Eigen::VectorXd p = Eigen::Vector3d(5.0, 5.0, 5.0);
    for (int i = 0; i < steps; ++i) opt.step(p, p - target);
    return (p - target).norm();
  };
  CHECK(run(Optimizer::sgd(0.1), 200) <= 1e-6);
  CHECK(run(Optimizer::adam(0.05), 2000) <= 1e-4);
}

TEST_CASE("optimizer state round-trips exactly") {
  Optimizer a = Optimizer::adam(1e-2);
  const Eigen::VectorXd target = Eigen::Vector2d(0.3, -0.7);
  Eigen::VectorXd pa = Eigen::Vector2d(2.0, 2.0);
  for (int i = 0; i < 10; ++i) a.step(pa, pa - target);

  std::stringstream buf;
  a.save_state(buf);
  Optimizer b = Optimizer::adam(1e-2);
  b.load_state(buf);
  Eigen::VectorXd pb = pa;

  for (int i = 0; i < 7; ++i) {
    a.step(pa, pa - target);
    b.step(pb, pb - target);
  }
  CHECK(pa == pb);
}

TEST_CASE("checkpoints round-trip through f32 and reject corruption") {
  const std::string dir = testutil::scratch_dir("ckpt");
  MLPSpec spec = small_spec(Activation::Tanh, 1, 2);
  Checkpoint ck;
  ck.role = CkptRole::ValueResidual;
  ck.spec = spec;
  ck.denoiser_checksum = 0xabcdef12u;
  ck.params = spec.init_params(77);

  const std::string path = dir + "/net.ckpt";
  save_checkpoint(path, ck);
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.role == CkptRole::ValueResidual);
  CHECK(back.denoiser_checksum == ck.denoiser_checksum);
  CHECK(back.spec.x_dim == spec.x_dim);
  CHECK(back.spec.hidden == spec.hidden);
  CHECK(back.spec.n_contexts == 2);
  CHECK(back.params.size() == ck.params.size());
  for (int i = 0; i < ck.params.size(); ++i) {
    CHECK(back.params(i) == static_cast<double>(static_cast<float>(ck.params(i))));
  }
  CHECK(checkpoint_checksum(back) == checkpoint_checksum(ck));

  // Saving the loaded copy again is byte-stable (f32 quantization is idempotent).
  save_checkpoint(dir + "/net2.ckpt", back);
  CHECK(load_checkpoint(dir + "/net2.ckpt").params == back.params);

  // Flip one payload byte; the trailing checksum must catch it.
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(40);
    char b;
    f.seekg(40);
    f.read(&b, 1);
    b = static_cast<char>(b ^ 0x40);
    f.seekp(40);
    f.write(&b, 1);
  }
  CHECK_THROWS_AS(load_checkpoint(path), ConfigError);
}

TEST_CASE("parameter checksums are order-sensitive") {
  Eigen::VectorXd a = Eigen::Vector3d(1.0, 2.0, 3.0);
  Eigen::VectorXd b = Eigen::Vector3d(3.0, 2.0, 1.0);
  CHECK(params_checksum(a) == params_checksum(a));
  CHECK(params_checksum(a) != params_checksum(b));
}
