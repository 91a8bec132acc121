#pragma once
#include <string>
#include <vector>

#include "scorl/config.hpp"

namespace scorl {

// Command layer behind the CLI verbs. Every command materializes its
// artifacts under out_dir (creating it if needed), appends one line to the
// run manifest, and returns the process exit code: 0 on success, 3 when a
// gradcheck assertion fails. Validation problems throw ConfigError and
// numeric failures throw NumericError; the CLI maps those to 1 and 2.

// Fits the score network on freshly drawn training data, then reports its
// grid error against the analytic data score. Artifacts: score.ckpt,
// loss_curve.csv, score_error.csv, config.json.
int cmd_pretrain(const AppConfig& cfg, const std::string& out_dir);

// Runs the configured fine-tuning loop from a score or policy checkpoint.
// Writes metrics.csv (one row per round), a numbered policy checkpoint per
// round, run_state.bin for exact resume, and final policy/value checkpoints.
// If out_dir already holds a run_state.bin the run continues from it.
int cmd_finetune(const AppConfig& cfg, const std::string& checkpoint_path,
                 const std::string& out_dir);

// Samples the checkpointed sampler at each step count and scores the output
// against fresh data: terminal reward, kernel two-sample distance with its
// permutation null, and moment-matched KL. steps_override, when non-empty,
// replaces the configured step counts.
int cmd_eval(const AppConfig& cfg, const std::string& checkpoint_path, const std::string& out_dir,
             const std::vector<int>& steps_override);

// Step-count robustness sweep: evaluates terminal reward for every numbered
// policy checkpoint in checkpoint_path (a finetune output directory, or a
// single checkpoint file) across sampler grids.
int cmd_robustness(const AppConfig& cfg, const std::string& checkpoint_path,
                   const std::string& out_dir, const std::vector<int>& steps_override);

// Self-contained estimator diagnostics on analytic setups (only the schedule
// and master seed are taken from the config): score-function gradient vs
// common-random-number finite differences, the performance-difference
// identity on a linear-quadratic ladder, and path-KL quadrature against the
// closed form. corrupt_q flips the sign of the value probe, which must flip
// the gradient agreement check to FAIL; that wiring is itself under test.
int cmd_gradcheck(const AppConfig& cfg, const std::string& out_dir, bool corrupt_q);

}  // namespace scorl
