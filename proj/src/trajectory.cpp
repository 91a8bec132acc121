#include "scorl/trajectory.hpp"

#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <thread>

#include "scorl/checkpoint.hpp"  // fnv1a64
#include "scorl/errors.hpp"
#include "scorl/sde.hpp"

namespace scorl {

void Trajectory::compute_returns() {
  const int n = steps();
  returns.resize(n + 1);
  returns[n] = h;
  for (int i = n - 1; i >= 0; --i) returns[i] = r[i] + returns[i + 1];
}

Trajectory rollout(const NoiseSchedule& sched, const TimeGrid& grid, const GaussianPolicy& pol,
                   int ctx, uint64_t seed, const RunningReward* rr) {
  const int n = grid.steps();
  const int d = pol.mean_model->dim();
  Rng rng(seed);

  Trajectory traj;
  traj.ctx = ctx;
  traj.t = grid.nodes;
  traj.x.resize(n + 1, d);
  traj.a.resize(n, d);
  traj.logp.resize(n);
  traj.r.setZero(n);

  SDEState s;
  s.t = 0.0;
  s.x = rng.normal_vec(d);
  traj.x.row(0) = s.x.transpose();

  for (int i = 0; i < n; ++i) {
    const double ti = grid.nodes[i];
    const double dt = grid.dt(i);
    const ActionSample as = sample_action(pol, ti, s.x, ctx, rng);
    if (rr) traj.r[i] = (*rr)(ti, s.x, ctx) * dt;
    const Eigen::VectorXd z = rng.normal_vec(d);
    s = em_step(sched, s, as.a, dt, z);
    if (!s.x.allFinite())
      throw NumericError("rollout: non-finite state after step " + std::to_string(i));
    traj.a.row(i) = as.a.transpose();
    traj.logp[i] = as.logp;
    traj.x.row(i + 1) = s.x.transpose();
  }
  traj.compute_returns();
  return traj;
}

Trajectory rollout_ddpm(const NoiseSchedule& sched, const TimeGrid& grid, const MeanModel& mean,
                        int ctx, uint64_t seed) {
  const int n = grid.steps();
  const int d = mean.dim();
  Rng rng(seed);

  Trajectory traj;
  traj.ctx = ctx;
  traj.t = grid.nodes;
  traj.x.resize(n + 1, d);
  traj.a.resize(n, d);
  traj.logp.resize(n);
  traj.r.setZero(n);

  SDEState s;
  s.t = 0.0;
  s.x = rng.normal_vec(d);
  traj.x.row(0) = s.x.transpose();

  for (int i = 0; i < n; ++i) {
    const double ti = grid.nodes[i];
    const double dt = grid.dt(i);
    const Eigen::VectorXd mu = mean.mean(ti, s.x, ctx);
    const double beta_i = sched.beta(sched.T - ti) * dt;
    const Eigen::VectorXd m = (s.x + beta_i * mu) / std::sqrt(1.0 - beta_i);
    const Eigen::VectorXd z = rng.normal_vec(d);
    s = ddpm_step(sched, s, mu, dt, z);
    if (!s.x.allFinite())
      throw NumericError("rollout_ddpm: non-finite state after step " + std::to_string(i));
    // Store the mean-model output, not the transition mean; the latter is
    // recoverable from x_i and beta_i when needed.
    traj.a.row(i) = mu.transpose();
    traj.logp[i] = gaussian_logp(s.x, m, std::sqrt(beta_i));
    traj.x.row(i + 1) = s.x.transpose();
  }
  traj.compute_returns();
  return traj;
}

std::vector<Trajectory> collect_round(const NoiseSchedule& sched, const TimeGrid& grid,
                                      const GaussianPolicy& pol, int ctx, int n_traj,
                                      uint64_t base_seed, int n_threads,
                                      const RunningReward* rr) {
  std::vector<Trajectory> out(n_traj);
  auto run_range = [&](int lo, int hi) {
    for (int i = lo; i < hi; ++i)
      out[i] = rollout(sched, grid, pol, ctx, derive_seed(base_seed, 0x7261, i), rr);
  };
  if (n_threads <= 1 || n_traj < 2) {
    run_range(0, n_traj);
    return out;
  }
  const int workers = std::min(n_threads, n_traj);
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (int w = 0; w < workers; ++w) {
    const int lo = n_traj * w / workers;
    const int hi = n_traj * (w + 1) / workers;
    pool.emplace_back([&, w, lo, hi] {
      try {
        run_range(lo, hi);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

namespace {
template <typename T>
void put(std::ofstream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::ifstream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}
constexpr char kTrajMagic[8] = {'S', 'C', 'O', 'R', 'L', 'T', 'R', 'J'};
}  // namespace

void save_trajectory(const std::string& path, const Trajectory& traj) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("trajectory: cannot open for writing: " + path);
  os.write(kTrajMagic, sizeof(kTrajMagic));
  put(os, static_cast<uint32_t>(1));
  const int n = traj.steps();
  const int d = traj.dim();
  put(os, static_cast<int32_t>(d));
  put(os, static_cast<int32_t>(n));
  put(os, static_cast<int32_t>(traj.ctx));
  put(os, traj.h);
  // one column at a time: times, states, actions, log densities, rewards
  os.write(reinterpret_cast<const char*>(traj.t.data()), (n + 1) * sizeof(double));
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j < d; ++j) put(os, traj.x(i, j));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) put(os, traj.a(i, j));
  os.write(reinterpret_cast<const char*>(traj.logp.data()), n * sizeof(double));
  os.write(reinterpret_cast<const char*>(traj.r.data()), n * sizeof(double));
  if (!os) throw ConfigError("trajectory: write failed: " + path);
}

Trajectory load_trajectory(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("trajectory: cannot open: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kTrajMagic, sizeof(kTrajMagic)) != 0)
    throw ConfigError("trajectory: bad magic: " + path);
  if (get<uint32_t>(is) != 1) throw ConfigError("trajectory: unsupported version");
  const int d = get<int32_t>(is);
  const int n = get<int32_t>(is);
  if (d <= 0 || n <= 0 || d > 4096 || n > (1 << 24))
    throw ConfigError("trajectory: implausible dimensions");
  Trajectory traj;
  traj.ctx = get<int32_t>(is);
  traj.h = get<double>(is);
  traj.t.resize(n + 1);
  is.read(reinterpret_cast<char*>(traj.t.data()), (n + 1) * sizeof(double));
  traj.x.resize(n + 1, d);
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j < d; ++j) traj.x(i, j) = get<double>(is);
  traj.a.resize(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) traj.a(i, j) = get<double>(is);
  traj.logp.resize(n);
  is.read(reinterpret_cast<char*>(traj.logp.data()), n * sizeof(double));
  traj.r.resize(n);
  is.read(reinterpret_cast<char*>(traj.r.data()), n * sizeof(double));
  if (!is) throw ConfigError("trajectory: truncated file: " + path);
  traj.compute_returns();
  return traj;
}

}  // namespace scorl
