#include "scorl/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <tuple>

#include "scorl/checkpoint.hpp"
#include "scorl/ddpo.hpp"
#include "scorl/errors.hpp"
#include "scorl/metrics.hpp"
#include "scorl/oracles.hpp"
#include "scorl/policy.hpp"
#include "scorl/ppo.hpp"
#include "scorl/rng.hpp"
#include "scorl/run_io.hpp"
#include "scorl/train.hpp"
#include "scorl/trajectory.hpp"
#include "scorl/value_net.hpp"

namespace scorl {

namespace fs = std::filesystem;

namespace {

struct StageTimer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

uint64_t write_config_json(const AppConfig& cfg, const std::string& out_dir) {
  write_text_file(out_dir + "/config.json", config_to_text(cfg));
  return file_checksum(out_dir + "/config.json");
}

Checkpoint load_sampler_ckpt(const std::string& path, int want_dim) {
  if (path.empty()) throw ConfigError("a --checkpoint path is required for this command");
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.role == CkptRole::ValueResidual)
    throw ConfigError(path + ": holds a value residual, not a sampler");
  if (want_dim > 0 && ckpt.spec.x_dim != want_dim)
    throw ConfigError(path + ": checkpoint dimension does not match the configured data");
  return ckpt;
}

std::pair<double, double> mean_and_se(const Eigen::VectorXd& v) {
  const double m = v.mean();
  if (v.size() < 2) return {m, 0.0};
  const double var = (v.array() - m).square().sum() / static_cast<double>(v.size() - 1);
  return {m, std::sqrt(var / static_cast<double>(v.size()))};
}

Eigen::VectorXd reward_per_row(const RewardModel& rm, const Eigen::MatrixXd& x, int ctx) {
  Eigen::VectorXd r(x.rows());
  for (int i = 0; i < x.rows(); ++i) r(i) = rm.eval(x.row(i).transpose(), ctx);
  return r;
}

std::string round_ckpt_name(int k) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "policy_round_%03d.ckpt", k);
  return buf;
}

}  // namespace

int cmd_pretrain(const AppConfig& cfg, const std::string& out_dir) {
  StageTimer timer;
  ensure_dir(out_dir);
  const uint64_t cfg_sum = write_config_json(cfg, out_dir);

  Dataset data;
  data.x0 = cfg.data.sample(cfg.n_train, derive_seed(cfg.seed, 0xda7a));
  std::cout << "[pretrain] fitting score net on " << data.n() << " points, " << cfg.pretrain.steps
            << " steps\n";
  const PretrainResult res = pretrain(cfg.schedule, cfg.score_spec, data, cfg.pretrain);
  if (res.diverged) throw NumericError("pretrain: loss diverged; lower the learning rate");

  save_checkpoint(out_dir + "/score.ckpt",
                  Checkpoint{CkptRole::Score, cfg.score_spec, 0, res.params});

  std::vector<std::vector<double>> loss_rows;
  for (size_t i = 0; i < res.loss_curve.size(); ++i)
    loss_rows.push_back(
        {static_cast<double>((i + 1) * cfg.pretrain.curve_stride), res.loss_curve[i]});
  write_csv(out_dir + "/loss_curve.csv", {"step", "loss"}, loss_rows);
  {
    SvgSeries s{"train loss", {}, {}};
    for (const auto& row : loss_rows) {
      s.x.push_back(row[0]);
      s.y.push_back(row[1]);
    }
    write_svg_lines(out_dir + "/loss_curve.svg", "denoising objective", "step", "loss", {s});
  }

  std::vector<std::pair<std::string, uint64_t>> artifacts = {
      {"config.json", cfg_sum},
      {"score.ckpt", file_checksum(out_dir + "/score.ckpt")},
      {"loss_curve.csv", file_checksum(out_dir + "/loss_curve.csv")}};

  if (cfg.data.dim() == 2) {
    const double T = cfg.schedule.T;
    const ScoreNet net{cfg.score_spec, res.params};
    const ScoreFn fn = [&](double t, const Eigen::VectorXd& x, int c) { return net.eval(t, x, c); };
    const ScoreGridReport rep =
        score_grid_error(cfg.schedule, fn, cfg.data, {0.02 * T, 0.25 * T, 0.5 * T, 0.75 * T, T});
    std::vector<std::vector<double>> rows;
    for (size_t i = 0; i < rep.times.size(); ++i) rows.push_back({rep.times[i], rep.rel_error[i]});
    write_csv(out_dir + "/score_error.csv", {"t", "rel_error"}, rows);
    artifacts.emplace_back("score_error.csv", file_checksum(out_dir + "/score_error.csv"));
    std::cout << "[pretrain] score grid error: max relative L2 = " << rep.max_rel_error << "\n";
  }

  append_manifest(out_dir, "pretrain", "ok", timer.seconds(), cfg_sum, artifacts);
  std::cout << "[pretrain] done in " << timer.seconds() << "s\n";
  return 0;
}

int cmd_finetune(const AppConfig& cfg, const std::string& checkpoint_path,
                 const std::string& out_dir) {
  if (!cfg.has_reward) throw ConfigError("finetune: the config has no reward section");
  StageTimer timer;
  ensure_dir(out_dir);
  const uint64_t cfg_sum = write_config_json(cfg, out_dir);
  const Checkpoint ckpt = load_sampler_ckpt(checkpoint_path, cfg.data.dim());

  const TimeGrid grid = TimeGrid::uniform(cfg.schedule.T, cfg.finetune_steps);
  const std::string state_path = out_dir + "/run_state.bin";
  const std::string metrics_path = out_dir + "/metrics.csv";
  const std::vector<std::string> header = {"round",     "mean_terminal_reward", "kl_estimate",
                                           "value_mse", "surrogate",            "wallclock"};
  std::vector<std::vector<double>> rows;

  auto save_policy = [&](const NetMean& mean, const std::string& name) {
    save_checkpoint(out_dir + "/" + name,
                    Checkpoint{CkptRole::PolicyMean, mean.spec, 0, mean.params});
  };

  auto run_loop = [&](auto& trainer, int rounds) {
    if (file_exists(state_path)) {
      trainer.load_run_state(state_path);
      if (trainer.round() > 0 && file_exists(metrics_path)) {
        for (auto& row : read_csv(metrics_path).rows)
          if (row[0] < trainer.round()) rows.push_back(row);
      }
      std::cout << "[finetune] resuming at round " << trainer.round() << "\n";
    }
    while (trainer.round() < rounds) {
      save_policy(trainer.policy_mean(), round_ckpt_name(trainer.round()));
      const RoundMetrics row = trainer.run_round();
      rows.push_back({static_cast<double>(row.round), row.mean_terminal_reward, row.kl_path,
                      row.value_mse, row.surrogate, row.wallclock_s});
      write_csv(metrics_path, header, rows);
      trainer.save_run_state(state_path);
      std::cout << "[finetune] round " << row.round << " reward=" << row.mean_terminal_reward
                << " kl=" << row.kl_path << " value_mse=" << row.value_mse << " ("
                << row.wallclock_s << "s)\n";
    }
    save_policy(trainer.policy_mean(), round_ckpt_name(rounds));
    save_policy(trainer.policy_mean(), "policy_final.ckpt");
  };

  if (cfg.algo == "ddpo") {
    DDPOConfig dcfg;
    dcfg.rounds = cfg.finetune.rounds;
    dcfg.n_traj = cfg.finetune.n_traj;
    dcfg.ctx = cfg.finetune.ctx;
    dcfg.seed = cfg.seed;
    dcfg.ppo = cfg.finetune.ppo;
    DDPOTrainer trainer(cfg.schedule, grid, ckpt.spec, ckpt.params, cfg.reward, dcfg);
    run_loop(trainer, dcfg.rounds);
  } else {
    CTRLConfig tcfg = cfg.finetune;
    tcfg.seed = cfg.seed;
    MLPSpec vspec = cfg.value_spec;
    vspec.x_dim = ckpt.spec.x_dim;
    vspec.out_dim = 1;
    vspec.t_scale = cfg.schedule.T;
    CTRLTrainer trainer(cfg.schedule, grid, ckpt.spec, ckpt.params, cfg.reward, vspec, tcfg);
    trainer.value().predictor_input = cfg.value_predictor_input;
    trainer.value().corrector_input = cfg.value_corrector_input;
    trainer.value().c_out_kind = cfg.value_c_out;
    run_loop(trainer, tcfg.rounds);
    save_checkpoint(out_dir + "/value_final.ckpt",
                    Checkpoint{CkptRole::ValueResidual, trainer.value().fspec,
                               params_checksum(trainer.policy_mean().params),
                               trainer.value().phi});
  }

  SvgSeries reward{"mean terminal reward", {}, {}};
  SvgSeries kl{"path KL vs reference", {}, {}};
  for (const auto& row : rows) {
    reward.x.push_back(row[0]);
    reward.y.push_back(row[1]);
    kl.x.push_back(row[0]);
    kl.y.push_back(row[2]);
  }
  write_svg_lines(out_dir + "/reward.svg", "fine-tuning progress", "round", "reward", {reward});
  write_svg_lines(out_dir + "/kl.svg", "divergence from the pretrained sampler", "round", "KL",
                  {kl});

  std::vector<std::pair<std::string, uint64_t>> artifacts = {
      {"config.json", cfg_sum},
      {"metrics.csv", file_checksum(metrics_path)},
      {"policy_final.ckpt", file_checksum(out_dir + "/policy_final.ckpt")},
      {"run_state.bin", file_checksum(state_path)}};
  if (cfg.algo != "ddpo")
    artifacts.emplace_back("value_final.ckpt", file_checksum(out_dir + "/value_final.ckpt"));
  append_manifest(out_dir, "finetune", "ok", timer.seconds(), cfg_sum, artifacts);
  std::cout << "[finetune] done in " << timer.seconds() << "s\n";
  return 0;
}

int cmd_eval(const AppConfig& cfg, const std::string& checkpoint_path, const std::string& out_dir,
             const std::vector<int>& steps_override) {
  StageTimer timer;
  ensure_dir(out_dir);
  const uint64_t cfg_sum = write_config_json(cfg, out_dir);
  const Checkpoint ckpt = load_sampler_ckpt(checkpoint_path, cfg.data.dim());
  const NetMean mean(ckpt.spec, ckpt.params, cfg.schedule.T);

  const std::vector<int> steps = steps_override.empty() ? cfg.eval.step_counts : steps_override;
  const int n_data = std::max(2000, cfg.eval.n_samples);
  const Eigen::MatrixXd data = cfg.data.sample(n_data, derive_seed(cfg.seed, 0xe7a0));
  const double nan = std::numeric_limits<double>::quiet_NaN();

  std::vector<std::vector<double>> rows;
  std::vector<std::pair<std::string, uint64_t>> artifacts = {{"config.json", cfg_sum}};
  SvgSeries mmd_series{"mmd^2", {}, {}};
  SvgSeries null_series{"permutation null q95", {}, {}};

  for (int s : steps) {
    const TimeGrid grid = TimeGrid::uniform(cfg.schedule.T, s);
    const uint64_t sample_seed = derive_seed(cfg.seed, 0xe7a1, s);
    const Eigen::MatrixXd x = cfg.eval.sampler == "em"
                                  ? sample_em(cfg.schedule, grid, mean, 0, cfg.eval.n_samples,
                                              sample_seed)
                                  : sample_ddpm(cfg.schedule, grid, mean, 0, cfg.eval.n_samples,
                                                sample_seed);
    const std::string sample_name = "samples_" + std::to_string(s) + ".bin";
    save_samples(out_dir + "/" + sample_name, x);
    artifacts.emplace_back(sample_name, file_checksum(out_dir + "/" + sample_name));

    const MMDResult mmd =
        mmd_gaussian(x, data, cfg.eval.n_perm, derive_seed(cfg.seed, 0xe7a2, s));
    const double mkl = moment_kl(x, data);
    double mkl_true = nan;
    if (cfg.data.comps.size() == 1) {
      const auto& comp = cfg.data.comps.front();
      oracle::GaussianMoments ref;
      ref.mean = comp.mean;
      ref.cov = comp.std * comp.std *
                Eigen::MatrixXd::Identity(comp.mean.size(), comp.mean.size());
      mkl_true = oracle::gaussian_kl(empirical_moments(x), ref);
    }
    double mr = nan, se = nan;
    if (cfg.has_reward) std::tie(mr, se) = mean_and_se(reward_per_row(cfg.reward, x, 0));

    rows.push_back({static_cast<double>(s), mr, se, mmd.mmd2, mmd.null_q95, mkl, mkl_true});
    mmd_series.x.push_back(s);
    mmd_series.y.push_back(mmd.mmd2);
    null_series.x.push_back(s);
    null_series.y.push_back(mmd.null_q95);
    std::cout << "[eval] steps=" << s << " mmd2=" << mmd.mmd2 << " (null q95 " << mmd.null_q95
              << ") moment_kl=" << mkl;
    if (cfg.has_reward) std::cout << " reward=" << mr << " +- " << se;
    std::cout << "\n";
  }

  write_csv(out_dir + "/eval_metrics.csv",
            {"steps", "mean_reward", "se_reward", "mmd2", "mmd_null_q95", "moment_kl",
             "moment_kl_true"},
            rows);
  write_svg_lines(out_dir + "/eval.svg", "sample fidelity by step count", "sampler steps",
                  "mmd^2", {mmd_series, null_series});
  artifacts.emplace_back("eval_metrics.csv", file_checksum(out_dir + "/eval_metrics.csv"));
  append_manifest(out_dir, "eval", "ok", timer.seconds(), cfg_sum, artifacts);
  return 0;
}

int cmd_robustness(const AppConfig& cfg, const std::string& checkpoint_path,
                   const std::string& out_dir, const std::vector<int>& steps_override) {
  if (!cfg.has_reward) throw ConfigError("robustness: the config has no reward section");
  if (checkpoint_path.empty()) throw ConfigError("a --checkpoint path is required");
  StageTimer timer;
  ensure_dir(out_dir);
  const uint64_t cfg_sum = write_config_json(cfg, out_dir);

  std::vector<std::pair<int, std::string>> ckpts;
  if (fs::is_directory(checkpoint_path)) {
    for (const auto& entry : fs::directory_iterator(checkpoint_path)) {
      const std::string name = entry.path().filename().string();
      const std::string prefix = "policy_round_", suffix = ".ckpt";
      if (name.rfind(prefix, 0) != 0 || name.size() <= prefix.size() + suffix.size()) continue;
      if (name.substr(name.size() - suffix.size()) != suffix) continue;
      const std::string digits =
          name.substr(prefix.size(), name.size() - prefix.size() - suffix.size());
      try {
        ckpts.emplace_back(std::stoi(digits), entry.path().string());
      } catch (const std::exception&) {
        continue;
      }
    }
    std::sort(ckpts.begin(), ckpts.end());
    if (ckpts.empty())
      throw ConfigError("robustness: no policy_round checkpoints under " + checkpoint_path);
  } else {
    ckpts.emplace_back(0, checkpoint_path);
  }

  const std::vector<int> steps = steps_override.empty() ? cfg.eval.step_counts : steps_override;
  std::vector<std::vector<double>> rows;
  std::vector<SvgSeries> series;
  for (int s : steps) series.push_back({std::to_string(s) + " steps", {}, {}});

  for (const auto& [round, path] : ckpts) {
    const Checkpoint ckpt = load_sampler_ckpt(path, cfg.data.dim());
    const NetMean mean(ckpt.spec, ckpt.params, cfg.schedule.T);
    for (size_t si = 0; si < steps.size(); ++si) {
      const int s = steps[si];
      const TimeGrid grid = TimeGrid::uniform(cfg.schedule.T, s);
      const Eigen::MatrixXd x = sample_ddpm(cfg.schedule, grid, mean, 0, cfg.eval.n_samples,
                                            derive_seed(cfg.seed, 0x40b5, round, s));
      const auto [mr, se] = mean_and_se(reward_per_row(cfg.reward, x, 0));
      rows.push_back({static_cast<double>(round), static_cast<double>(s), mr, se});
      series[si].x.push_back(round);
      series[si].y.push_back(mr);
    }
    std::cout << "[robustness] round " << round << " done\n";
  }

  write_csv(out_dir + "/robustness.csv", {"round", "steps", "mean_reward", "se_reward"}, rows);
  write_svg_lines(out_dir + "/robustness.svg", "reward by sampling grid", "round",
                  "mean terminal reward", series);
  append_manifest(out_dir, "robustness", "ok", timer.seconds(), cfg_sum,
                  {{"config.json", cfg_sum},
                   {"robustness.csv", file_checksum(out_dir + "/robustness.csv")},
                   {"robustness.svg", file_checksum(out_dir + "/robustness.svg")}});
  return 0;
}

namespace {

struct CheckLine {
  std::string name;
  bool pass = false;
  std::string detail;
};

}  // namespace

int cmd_gradcheck(const AppConfig& cfg, const std::string& out_dir, bool corrupt_q) {
  StageTimer timer;
  ensure_dir(out_dir);
  const uint64_t cfg_sum = write_config_json(cfg, out_dir);
  const NoiseSchedule& sched = cfg.schedule;
  std::vector<CheckLine> checks;

  // 1) Score-function gradient against common-random-number central
  //    differences, on Gaussian data where the value used by the estimator is
  //    exactly linear and known in closed form through the fundamental matrix.
  {
    oracle::GaussianMixture mix;
    {
      oracle::MixtureComponent comp;
      comp.w = 1.0;
      comp.mean = Eigen::Vector2d(0.5, -0.3);
      comp.std = 0.7;
      mix.comps = {comp};
    }
    const oracle::MixtureScoreMean base(&mix, &sched);
    Eigen::VectorXd theta(2);
    theta << 0.15, -0.1;
    const ShiftedMean shifted(&base, theta);
    const double sigma_expl = 0.4, beta_kl = 0.3;
    const RewardModel rm =
        RewardModel::mode_logistic(Eigen::Vector2d(0.6, 0.8), 0.1, 1.2, 1e6);
    const TimeGrid grid = TimeGrid::uniform(sched.T, 50);
    const int n_traj = 800, n_rep = 800;

    // Everything here is linear: the single-Gaussian score is affine in x,
    // the reward is linear to ~1e-12, so w . E[x_T | x_i] has an exact
    // coefficient given by the backward product of the per-step maps. The
    // probe at a step's start must see the value carried from the step's
    // end, hence the i + 1 lookup below; with that convention the estimator
    // expectation matches the simulated objective's gradient exactly and the
    // comparison is pure Monte Carlo noise against Monte Carlo noise.
    const double std0 = mix.comps[0].std;
    const Eigen::VectorXd w = rm.grad(Eigen::VectorXd::Zero(2), 0);
    std::vector<Eigen::VectorXd> coefs(grid.steps() + 1);
    coefs[grid.steps()] = w;
    for (int i = grid.steps() - 1; i >= 0; --i) {
      const double tau = sched.T - grid.nodes[i];
      const double al = sched.alpha(tau), sig = sched.sigma(tau);
      const double rho2 = al * al * std0 * std0 + sig * sig;
      const double step = 1.0 + grid.dt(i) * sched.beta(tau) * (0.5 - 1.0 / rho2);
      coefs[i] = step * coefs[i + 1];
    }
    const double dt = grid.dt(0);
    ValueFn value = [&, corrupt_q](double t, const Eigen::VectorXd& x, int) {
      const int i = static_cast<int>(std::lround(t / dt));
      if (i < 0 || i >= grid.steps() || std::abs(grid.nodes[i] - t) > 1e-9)
        throw NumericError("gradcheck: value probed off the grid");
      const double v = coefs[i + 1].dot(x);
      return corrupt_q ? -v : v;
    };

    const GaussianPolicy pol{&shifted, sigma_expl};
    const std::vector<Trajectory> trajs =
        collect_round(sched, grid, pol, 0, n_traj, derive_seed(cfg.seed, 0x6c01));
    AdvantageConfig acfg;
    acfg.raw_action_dir = true;  // executed-action records keep the estimator unbiased
    acfg.eta = 1e-3;
    acfg.beta_kl = beta_kl;
    acfg.reference = &base;
    Eigen::MatrixXd pg_rows;
    const Eigen::VectorXd pg = policy_gradient_estimate(sched, trajs, pol, value, acfg, &pg_rows);

    const Eigen::MatrixXd fd_rows = oracle::fd_shift_gradient_samples(
        sched, grid, base, theta, sigma_expl, rm, 0, beta_kl, 0.05, n_rep,
        derive_seed(cfg.seed, 0x6c02));
    double worst = 0.0;
    std::string detail;
    for (int j = 0; j < 2; ++j) {
      const auto [pg_m, pg_se] = mean_and_se(pg_rows.col(j));
      const auto [fd_m, fd_se] = mean_and_se(fd_rows.col(j));
      const double budget = 3.0 * std::sqrt(pg_se * pg_se + fd_se * fd_se);
      worst = std::max(worst, std::abs(pg_m - fd_m) / budget);
      detail += (j ? "; " : "") + std::string("coord ") + std::to_string(j) + ": pg=" +
                std::to_string(pg_m) + " fd=" + std::to_string(fd_m);
    }
    (void)pg;
    checks.push_back({"pg_fd_agreement", worst <= 1.0,
                      detail + "; max gap = " + std::to_string(worst) + " of the 3-sigma budget"});
  }

  // 2) Performance-difference identity on a linear-quadratic ladder: the
  //    deterministic value-recursion difference must match the simulated
  //    advantage sum of the target policy along behavior-policy states.
  {
    const int n = 8;
    oracle::LQStep step;
    step.f = -0.3;
    step.b = 1.0;
    step.noise = 0.5;
    step.dt = 0.05;
    step.rx2 = -0.4;
    step.rx = 0.3;
    step.ra2 = -0.25;
    step.ra = 0.2;
    const std::vector<oracle::LQStep> steps(n, step);
    const oracle::LQTerminal term{-0.6, 0.5, 0.2};
    const oracle::LQPolicyLin target{0.1, -0.1, 0.3};
    const oracle::LQPolicyLin behavior{-0.3, 0.2, 0.35};
    const double mu0 = 0.4, s0 = 0.8;

    const std::vector<oracle::LQValue> v_target = lq_policy_values(steps, target, term);
    const std::vector<oracle::LQValue> v_behavior = lq_policy_values(steps, behavior, term);
    auto init_mean = [&](const oracle::LQValue& v) {
      return v.P * (mu0 * mu0 + s0 * s0) + v.Q * mu0 + v.R;
    };
    const double lhs = init_mean(v_target[0]) - init_mean(v_behavior[0]);

    const int n_chain = 3000;
    Rng rng(derive_seed(cfg.seed, 0x6c03));
    Eigen::VectorXd samples(n_chain);
    for (int m = 0; m < n_chain; ++m) {
      double x = mu0 + s0 * rng.normal();
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        const double a = behavior.k * x + behavior.c + behavior.sigma * rng.normal();
        acc += step.dt * oracle::lq_q_rate(steps[i], v_target[i + 1], v_target[i], x, a);
        x += (step.f * x + step.b * a) * step.dt + step.noise * std::sqrt(step.dt) * rng.normal();
      }
      samples(m) = -acc;
    }
    const auto [rhs, se] = mean_and_se(samples);
    const double gap = std::abs(lhs - rhs);
    checks.push_back({"pdl_identity", gap <= 3.0 * se,
                      "lhs=" + std::to_string(lhs) + " rhs=" + std::to_string(rhs) +
                          " |gap|=" + std::to_string(gap) + " vs 3se=" + std::to_string(3.0 * se)});
  }

  // 3) Path-KL quadrature against the closed form for a constant shift, and
  //    the terminal-vs-path ordering from the moment ODEs.
  {
    const Eigen::Vector2d m0(0.5, 0.1), delta(0.3, -0.2);
    const double s0 = 0.7;
    oracle::GaussianMixture mix;
    {
      oracle::MixtureComponent comp;
      comp.w = 1.0;
      comp.mean = m0;
      comp.std = s0;
      mix.comps = {comp};
    }
    const oracle::MixtureScoreMean base(&mix, &sched);
    const ShiftedMean shifted(&base, delta);
    const GaussianPolicy pol{&shifted, 0.25};
    const TimeGrid grid = TimeGrid::uniform(sched.T, 100);
    const std::vector<Trajectory> trajs =
        collect_round(sched, grid, pol, 0, 16, derive_seed(cfg.seed, 0x6c04));
    const double est = kl_path_estimate(sched, pol, base, trajs);
    const double closed = oracle::shift_path_kl(sched, delta);
    const double rel = std::abs(est - closed) / closed;
    checks.push_back({"kl_path_quadrature", rel <= 0.02,
                      "estimate=" + std::to_string(est) + " closed=" + std::to_string(closed) +
                          " rel_err=" + std::to_string(rel)});

    const oracle::ShiftKlReport rep = oracle::gaussian_shift_kl(sched, m0, s0, delta, 2000);
    checks.push_back({"kl_terminal_le_path", rep.terminal_kl <= rep.path_kl + 1e-9,
                      "terminal=" + std::to_string(rep.terminal_kl) +
                          " path=" + std::to_string(rep.path_kl)});
  }

  bool all_pass = true;
  std::string report;
  for (const auto& check : checks) {
    all_pass = all_pass && check.pass;
    const std::string line =
        std::string(check.pass ? "PASS" : "FAIL") + " " + check.name + ": " + check.detail;
    report += line + "\n";
    std::cout << line << "\n";
  }
  write_text_file(out_dir + "/gradcheck_report.txt", report);
  append_manifest(out_dir, "gradcheck", all_pass ? "ok" : "check_failed", timer.seconds(),
                  cfg_sum,
                  {{"config.json", cfg_sum},
                   {"gradcheck_report.txt", file_checksum(out_dir + "/gradcheck_report.txt")}});
  return all_pass ? 0 : 3;
}

}  // namespace scorl
