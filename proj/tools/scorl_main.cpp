#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "scorl/commands.hpp"
#include "scorl/config.hpp"
#include "scorl/errors.hpp"

int main(int argc, char** argv) {
  CLI::App app{"scorl: train, fine-tune and probe small diffusion samplers"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint;
  std::vector<int> steps;
  std::uint64_t seed = 0;
  bool corrupt_q = false;

  auto add_common = [&](CLI::App* sub, bool wants_ckpt, bool wants_steps) {
    sub->add_option("--config", config_path, "JSON run configuration")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "master seed override");
    sub->add_option("--out", out_dir, "output directory")->required();
    if (wants_ckpt)
      sub->add_option("--checkpoint", checkpoint, "input checkpoint file (or run directory)");
    if (wants_steps)
      sub->add_option("--steps", steps, "sampler step counts, e.g. --steps 25,50,100")
          ->delimiter(',');
  };

  CLI::App* p_pre = app.add_subcommand("pretrain", "fit the score net on freshly drawn data");
  add_common(p_pre, false, false);
  CLI::App* p_fin = app.add_subcommand("finetune", "reward fine-tuning from a checkpoint");
  add_common(p_fin, true, false);
  CLI::App* p_eval = app.add_subcommand("eval", "sample a checkpoint and score the output");
  add_common(p_eval, true, true);
  CLI::App* p_rob =
      app.add_subcommand("robustness", "reward across round checkpoints and step counts");
  add_common(p_rob, true, true);
  CLI::App* p_gc = app.add_subcommand("gradcheck", "estimator and identity diagnostics");
  add_common(p_gc, false, false);
  p_gc->add_flag("--corrupt-q", corrupt_q,
                 "negate the value probe; the gradient check must then fail");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    scorl::AppConfig cfg =
        config_path.empty() ? scorl::default_config() : scorl::load_config(config_path);
    CLI::App* sub = app.get_subcommands().front();
    if (sub->count("--seed")) scorl::apply_seed(cfg, seed);

    if (sub == p_pre) return scorl::cmd_pretrain(cfg, out_dir);
    if (sub == p_fin) return scorl::cmd_finetune(cfg, checkpoint, out_dir);
    if (sub == p_eval) return scorl::cmd_eval(cfg, checkpoint, out_dir, steps);
    if (sub == p_rob) return scorl::cmd_robustness(cfg, checkpoint, out_dir, steps);
    return scorl::cmd_gradcheck(cfg, out_dir, corrupt_q);
  } catch (const scorl::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const scorl::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
