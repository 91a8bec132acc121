#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "doctest.h"
#include "scorl/checkpoint.hpp"
#include "scorl/commands.hpp"
#include "scorl/config.hpp"
#include "scorl/errors.hpp"
#include "scorl/metrics.hpp"
#include "scorl/rng.hpp"
#include "scorl/run_io.hpp"
#include "support/testutil.hpp"

using namespace scorl;

namespace {

int run_cli(const std::string& args) {
  const int status = std::system((std::string(SCORL_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

// Small but complete run configuration used by the command smoke tests.
std::string tiny_config(int rounds) {
  return std::string(R"({
    "seed": 3,
    "schedule": {"beta_min": 0.1, "beta_max": 6.0, "horizon": 1.0},
    "data": {"kind": "gaussian", "mean": [0.5, -0.5], "std": 0.8},
    "n_train": 600,
    "score_net": {"hidden": [16, 16], "time_freqs": 4},
    "pretrain": {"steps": 400, "batch": 64, "lr": 0.002},
    "reward": {"kind": "target_distance", "target": [0.8, 0.0], "bound": 25.0},
    "finetune": {"algo": "ctrl", "steps": 12, "rounds": )") +
         std::to_string(rounds) + R"(, "n_traj": 6, "sigma_expl": 0.15, "n_pseudo": 2,
      "value": {"hidden": [8], "epochs": 4, "batch": 64},
      "ppo": {"epochs": 3, "batch": 64, "lr": 0.001}},
    "eval": {"n_samples": 64, "steps": [8], "sampler": "ddpm", "n_perm": 50}
  })";
}

}  // namespace

TEST_CASE("defaults survive a serialization round trip") {
  const AppConfig cfg = default_config();
  const std::string text = config_to_text(cfg);
  const AppConfig back = parse_config_text(text);
  CHECK(config_to_text(back) == text);
  CHECK(back.seed == cfg.seed);
  CHECK(back.schedule.beta_max == cfg.schedule.beta_max);
  CHECK(back.eval.step_counts == cfg.eval.step_counts);
  CHECK(back.has_reward == cfg.has_reward);
}

TEST_CASE("a full config round-trips through text") {
  const AppConfig cfg = parse_config_text(tiny_config(2));
  CHECK(cfg.has_reward);
  CHECK(cfg.finetune.rounds == 2);
  CHECK(cfg.finetune_steps == 12);
  CHECK(cfg.data.comps.size() == 1);
  CHECK(cfg.data.comps[0].std == 0.8);
  CHECK(cfg.score_spec.hidden == std::vector<int>{16, 16});
  const std::string text = config_to_text(cfg);
  CHECK(config_to_text(parse_config_text(text)) == text);
}

TEST_CASE("unknown keys fail loudly with their path") {
  auto msg_of = [](const std::string& text) {
    try {
      parse_config_text(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(contains(msg_of(R"({"scheduel": {}})"), "scheduel"));
  CHECK(contains(msg_of(R"({"schedule": {"beta_mni": 1.0}})"), "schedule.beta_mni"));
  CHECK(contains(msg_of(R"({"finetune": {"value": {"foo": 1}}})"), "finetune.value.foo"));
  CHECK(contains(msg_of(R"({"eval": {"stepz": [5]}})"), "eval.stepz"));
}

TEST_CASE("validation rejects out-of-range settings") {
  CHECK_THROWS_AS(parse_config_text(R"({"schedule": {"horizon": 0.0}})"), ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"finetune": {"n_traj": 1}})"), ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"finetune": {"sigma_expl": 0.0}})"), ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"eval": {"sampler": "leapfrog"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"pretrain": {"lr": -1.0}})"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("not json"), ConfigError);
  // Reward dimension must match the data dimension.
  CHECK_THROWS_AS(parse_config_text(
                      R"({"data": {"kind": "gaussian", "mean": [0, 0], "std": 1},
                          "reward": {"kind": "target_distance", "target": [1, 2, 3]}})"),
                  ConfigError);
}

TEST_CASE("the master seed override re-derives stage seeds") {
  AppConfig cfg = parse_config_text(R"({"seed": 5})");
  CHECK(cfg.seed == 5);
  CHECK(cfg.finetune.seed == 5);
  const uint64_t pre5 = cfg.pretrain.seed;
  apply_seed(cfg, 6);
  CHECK(cfg.seed == 6);
  CHECK(cfg.finetune.seed == 6);
  CHECK(cfg.pretrain.seed != pre5);
  apply_seed(cfg, 5);
  CHECK(cfg.pretrain.seed == pre5);
}

TEST_CASE("csv files round-trip including non-finite cells") {
  const std::string dir = testutil::scratch_dir("csv");
  const std::vector<std::vector<double>> rows = {
      {1.0, 0.1234567890123456789, std::nan("")}, {2.0, -5.5, 7.0}};
  write_csv(dir + "/t.csv", {"a", "b", "c"}, rows);
  const CsvTable table = read_csv(dir + "/t.csv");
  CHECK(table.header == std::vector<std::string>{"a", "b", "c"});
  REQUIRE(table.rows.size() == 2);
  CHECK(table.rows[1][1] == -5.5);
  CHECK(table.rows[0][1] == rows[0][1]);  // full precision
  CHECK(std::isnan(table.rows[0][2]));
  CHECK(table.column("a") == std::vector<double>{1.0, 2.0});
  CHECK_THROWS(table.column("missing"));
}

TEST_CASE("sample binaries round-trip bit-exactly") {
  const std::string dir = testutil::scratch_dir("smp");
  Rng rng(3);
  Eigen::MatrixXd m(7, 3);
  for (int i = 0; i < 7; ++i) m.row(i) = rng.normal_vec(3).transpose();
  save_samples(dir + "/s.bin", m);
  CHECK(load_samples(dir + "/s.bin") == m);

  // Breaking the magic must be detected rather than misparsed.
  {
    std::fstream f(dir + "/s.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XX", 2);
  }
  CHECK_THROWS_AS(load_samples(dir + "/s.bin"), ConfigError);
}

TEST_CASE("state blobs round-trip and verify their checksum") {
  const std::string dir = testutil::scratch_dir("blob");
  Rng rng(5);
  const std::vector<Eigen::VectorXd> vecs = {rng.normal_vec(10), rng.normal_vec(4)};
  save_state_blob(dir + "/st.bin", 7, vecs);
  const StateBlob back = load_state_blob(dir + "/st.bin");
  CHECK(back.round == 7);
  REQUIRE(back.vecs.size() == 2);
  CHECK(back.vecs[0] == vecs[0]);
  CHECK(back.vecs[1] == vecs[1]);

  {
    std::fstream f(dir + "/st.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(30);
    char b;
    f.seekg(30);
    f.read(&b, 1);
    b = static_cast<char>(b ^ 0x08);
    f.seekp(30);
    f.write(&b, 1);
  }
  CHECK_THROWS_AS(load_state_blob(dir + "/st.bin"), ConfigError);
  CHECK_THROWS_AS(load_state_blob(dir + "/absent.bin"), ConfigError);
}

TEST_CASE("plots and manifests are written as advertised") {
  const std::string dir = testutil::scratch_dir("svg");
  SvgSeries s{"loss", {0, 1, 2, 3}, {1.0, 0.5, std::nan(""), 0.2}};
  write_svg_lines(dir + "/p.svg", "title", "step", "loss", {s});
  const std::string svg = read_text_file(dir + "/p.svg");
  CHECK(contains(svg, "<svg"));
  CHECK(contains(svg, "polyline"));
  CHECK(contains(svg, "loss"));

  append_manifest(dir, "pretrain", "ok", 1.5, 42, {{"a.csv", 7}});
  append_manifest(dir, "eval", "ok", 0.5, 42, {});
  const std::string manifest = read_text_file(dir + "/manifest.jsonl");
  CHECK(contains(manifest, "\"pretrain\""));
  CHECK(contains(manifest, "\"eval\""));
  CHECK(std::count(manifest.begin(), manifest.end(), '\n') == 2);

  write_text_file(dir + "/x.txt", "abc");
  write_text_file(dir + "/y.txt", "abd");
  CHECK(file_checksum(dir + "/x.txt") != file_checksum(dir + "/y.txt"));
}

TEST_CASE("kernel two-sample statistic separates what it should") {
  Rng rng(11);
  auto draw = [&](int n, double shift) {
    Eigen::MatrixXd m(n, 2);
    for (int i = 0; i < n; ++i) m.row(i) = (rng.normal_vec(2).array() + shift).transpose();
    return m;
  };
  const Eigen::MatrixXd x = draw(400, 0.0), y = draw(400, 0.0), z = draw(400, 1.5);

  const MMDResult same = mmd_gaussian(x, y, 100, 7);
  CHECK(same.mmd2 <= same.null_q95);
  CHECK(same.bandwidth > 0.0);

  const MMDResult diff = mmd_gaussian(x, z, 100, 7);
  CHECK(diff.mmd2 > diff.null_q95);
  CHECK(diff.mmd2 > 0.01);

  // Determinism and subsampling.
  const MMDResult again = mmd_gaussian(x, z, 100, 7);
  CHECK(again.mmd2 == diff.mmd2);
  CHECK(again.null_q95 == diff.null_q95);
  const Eigen::MatrixXd big = draw(2500, 0.0);
  const MMDResult sub = mmd_gaussian(big, x, 20, 9);
  CHECK(sub.n_x == 1000);
  CHECK(sub.n_y == 400);
}

TEST_CASE("moment summaries") {
  // Points chosen non-collinear so the sample covariance is invertible.
  Eigen::MatrixXd m(3, 2);
  m << 1.0, 0.0, 3.0, 1.0, 2.0, 2.0;
  const oracle::GaussianMoments mom = empirical_moments(m);
  CHECK((mom.mean - Eigen::Vector2d(2.0, 1.0)).norm() <= 1e-14);
  CHECK(std::abs(mom.cov(0, 0) - 1.0) <= 1e-14);  // n-1 denominator
  CHECK(std::abs(mom.cov(0, 1) - 0.5) <= 1e-14);
  CHECK(moment_kl(m, m) <= 1e-12);
}

TEST_CASE("score grid comparison is exact for the truth and flags offsets") {
  const NoiseSchedule sched;
  oracle::GaussianMixture mix = oracle::two_modes(1.0, 0.4);
  const ScoreFn truth = [&](double t, const Eigen::VectorXd& x, int) {
    return mix.diffused(sched, t).score(x);
  };
  const ScoreGridReport exact = score_grid_error(sched, truth, mix, {0.1, 0.5, 1.0});
  CHECK(exact.max_rel_error <= 1e-10);

  const ScoreFn off = [&](double t, const Eigen::VectorXd& x, int) {
    return mix.diffused(sched, t).score(x) + Eigen::Vector2d(0.4, 0.0);
  };
  CHECK(score_grid_error(sched, off, mix, {0.5}).max_rel_error > 0.05);

  oracle::GaussianMixture flat;
  flat.comps.push_back({1.0, Eigen::VectorXd::Zero(3), 1.0});
  CHECK_THROWS_AS(score_grid_error(sched, truth, flat, {0.5}), NumericError);
}

TEST_CASE("command pipeline runs end to end and resumes exactly") {
  const AppConfig cfg2 = parse_config_text(tiny_config(2));
  const AppConfig cfg4 = parse_config_text(tiny_config(4));

  const std::string pre = testutil::scratch_dir("cmd_pre");
  REQUIRE(cmd_pretrain(cfg2, pre) == 0);
  CHECK(file_exists(pre + "/score.ckpt"));
  CHECK(file_exists(pre + "/config.json"));
  CHECK(file_exists(pre + "/loss_curve.csv"));
  CHECK(file_exists(pre + "/score_error.csv"));
  CHECK(contains(read_text_file(pre + "/manifest.jsonl"), "\"pretrain\""));
  CHECK(read_csv(pre + "/loss_curve.csv").rows.size() == 8);  // 400 steps / 50 stride
  const Checkpoint score = load_checkpoint(pre + "/score.ckpt");
  CHECK(score.role == CkptRole::Score);
  CHECK(score.spec.x_dim == 2);

  // Uninterrupted four-round run.
  const std::string full = testutil::scratch_dir("cmd_full");
  REQUIRE(cmd_finetune(cfg4, pre + "/score.ckpt", full) == 0);
  const CsvTable want = read_csv(full + "/metrics.csv");
  REQUIRE(want.rows.size() == 4);
  for (int r = 0; r <= 4; ++r) {
    char name[64];
    std::snprintf(name, sizeof name, "/policy_round_%03d.ckpt", r);
    CHECK(file_exists(full + name));
  }
  CHECK(file_exists(full + "/policy_final.ckpt"));
  CHECK(file_exists(full + "/value_final.ckpt"));
  CHECK(file_exists(full + "/run_state.bin"));
  CHECK(file_exists(full + "/reward.svg"));
  CHECK(file_exists(full + "/kl.svg"));

  // The value checkpoint must record which denoiser parameters it pairs with.
  const Checkpoint vck = load_checkpoint(full + "/value_final.ckpt");
  const Checkpoint pck = load_checkpoint(full + "/policy_final.ckpt");
  CHECK(vck.role == CkptRole::ValueResidual);
  CHECK(vck.denoiser_checksum == params_checksum(pck.params));

  // Two rounds now, two more later; metrics must match the one-shot run.
  const std::string split = testutil::scratch_dir("cmd_split");
  REQUIRE(cmd_finetune(cfg2, pre + "/score.ckpt", split) == 0);
  REQUIRE(read_csv(split + "/metrics.csv").rows.size() == 2);
  REQUIRE(cmd_finetune(cfg4, pre + "/score.ckpt", split) == 0);
  const CsvTable got = read_csv(split + "/metrics.csv");
  REQUIRE(got.rows.size() == 4);
  for (const char* col : {"round", "mean_terminal_reward", "kl_estimate", "value_mse", "surrogate"}) {
    CHECK(got.column(col) == want.column(col));
  }

  // Evaluation of the pretrained sampler.
  const std::string ev = testutil::scratch_dir("cmd_eval");
  REQUIRE(cmd_eval(cfg2, pre + "/score.ckpt", ev, {8}) == 0);
  const CsvTable em = read_csv(ev + "/eval_metrics.csv");
  REQUIRE(em.rows.size() == 1);
  CHECK(em.column("steps")[0] == 8.0);
  CHECK(std::isfinite(em.column("mmd2")[0]));
  CHECK(std::isfinite(em.column("moment_kl")[0]));
  CHECK(std::isfinite(em.column("moment_kl_true")[0]));  // single-component data
  CHECK(load_samples(ev + "/samples_8.bin").rows() == 64);

  // Robustness sweep over the numbered checkpoints of the split run.
  const std::string rob = testutil::scratch_dir("cmd_rob");
  REQUIRE(cmd_robustness(cfg4, split, rob, {8}) == 0);
  CHECK(read_csv(rob + "/robustness.csv").rows.size() == 5);  // rounds 0..4

  // Checkpoint-shape mismatches are user errors, not crashes.
  CHECK_THROWS_AS(cmd_finetune(cfg2, pre + "/score.ckpt.missing", testutil::scratch_dir("cmd_x")),
                  ConfigError);
  CHECK_THROWS_AS(cmd_finetune(cfg2, full + "/value_final.ckpt", testutil::scratch_dir("cmd_y")),
                  ConfigError);
}

TEST_CASE("estimator diagnostics pass clean and fail when sabotaged") {
  AppConfig cfg = default_config();
  apply_seed(cfg, 12);
  const std::string clean = testutil::scratch_dir("gc_ok");
  CHECK(cmd_gradcheck(cfg, clean, false) == 0);
  CHECK(contains(read_text_file(clean + "/gradcheck_report.txt"), "PASS"));

  const std::string bad = testutil::scratch_dir("gc_bad");
  CHECK(cmd_gradcheck(cfg, bad, true) == 3);
  CHECK(contains(read_text_file(bad + "/gradcheck_report.txt"), "FAIL"));
}

TEST_CASE("binary exit codes") {
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("") == 1);                                  // missing subcommand
  CHECK(run_cli("pretrain") == 1);                          // missing --out
  CHECK(run_cli("pretrain --out /tmp/x --config /nonexistent.json") == 1);
  const std::string dir = testutil::scratch_dir("cli_eval");
  CHECK(run_cli("eval --out " + dir) == 1);                 // checkpoint required
}
