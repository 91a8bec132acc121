#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "scorl/mlp.hpp"
#include "scorl/oracles.hpp"
#include "scorl/reward.hpp"
#include "scorl/schedule.hpp"
#include "scorl/score_model.hpp"
#include "scorl/train.hpp"
#include "scorl/value_net.hpp"

namespace scorl {

// Resolved run configuration. Parsing is strict: unknown keys anywhere in the
// JSON tree are hard errors naming the offending path, so typos never degrade
// silently into defaults.

struct EvalConfig {
  int n_samples = 512;
  std::vector<int> step_counts = {25, 50, 100};
  std::string sampler = "ddpm";  // ddpm | em
  int n_perm = 200;
};

struct AppConfig {
  uint64_t seed = 1;
  NoiseSchedule schedule;
  oracle::GaussianMixture data;
  int n_train = 10000;

  MLPSpec score_spec;  // x_dim/out_dim filled from the data dimension
  PretrainConfig pretrain;

  bool has_reward = false;
  RewardModel reward;

  std::string algo = "ctrl";  // ctrl | ddpo
  int finetune_steps = 50;    // sampling-grid steps during fine-tuning
  CTRLConfig finetune;
  MLPSpec value_spec;
  ValueInput value_predictor_input = ValueInput::Denoised;
  ValueInput value_corrector_input = ValueInput::Raw;
  COutKind value_c_out = COutKind::Sin;

  EvalConfig eval;
};

AppConfig default_config();

// Re-derives every stage seed from a new master seed (the --seed override).
void apply_seed(AppConfig& cfg, uint64_t seed);

// Parses strict JSON; `origin` names the source in error messages.
AppConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");
AppConfig load_config(const std::string& path);

// Serializes the resolved configuration; parse_config_text round-trips it.
std::string config_to_text(const AppConfig& cfg);

}  // namespace scorl
