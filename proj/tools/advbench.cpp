// advbench: command-line driver for the attack/detection experiments.
//
// Exit codes: 0 success, 1 usage error, 2 configuration error, 3 runtime failure.

#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "advbench/config.hpp"
#include "advbench/error.hpp"
#include "advbench/experiment.hpp"
#include "advbench/kernels.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kConfig = 2, kRuntime = 3 };

std::vector<double> list_flag(const std::string& text, const char* flag) {
  try {
    return advbench::parse_double_list(text, flag);
  } catch (const advbench::ConfigError& e) {
    throw advbench::UsageError(e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"advbench: adversarial attacks and logit-based detectors at desk scale"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir, detector, attack, eps_text, fpr_text;
  std::uint64_t seed = 0;
  int workers = 0;
  bool force = false;
  std::vector<std::uint64_t> ids;

  auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides the config)");
  app.add_option("--config", config_path, "experiment config file (INI)");
  app.add_option("--out", out_dir, "output directory (overrides the config)");
  app.add_flag("--force", force, "overwrite existing outputs");
  app.add_option("--detector", detector, "stat, classifier, or a detector checkpoint path");
  app.add_option("--attack", attack, "cw, cw-noisy, lma or adaptive");
  app.add_option("--eps", eps_text, "comma-separated noise levels");
  app.add_option("--fpr", fpr_text, "comma-separated FPR targets");
  app.add_option("--workers", workers, "worker threads (default: $ADVBENCH_WORKERS or 1)");

  auto* train = app.add_subcommand("train", "train the classifier on the configured dataset");
  auto* attack_cmd = app.add_subcommand("attack", "craft adversarial examples for the test split");
  auto* detect = app.add_subcommand("detect", "evaluate a detector against an attack manifest");
  auto* race = app.add_subcommand("armsrace", "adaptive detector, adaptive attack and iterative retraining");
  auto* curves = app.add_subcommand("curves", "probability-versus-noise curves for sample ids");
  auto* cone = app.add_subcommand("cone", "adversarial-cone grid for one sample id");
  curves->add_option("ids", ids, "sample ids")->required();
  cone->add_option("id", ids, "sample id")->required()->expected(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (workers == 0) {
      if (const char* env = std::getenv("ADVBENCH_WORKERS")) {
        try {
          workers = std::stoi(env);
        } catch (const std::exception&) {
          throw advbench::UsageError(std::string("ADVBENCH_WORKERS is not a number: ") + env);
        }
      }
    }
    if (workers < 0) throw advbench::UsageError("--workers must be >= 1");
    advbench::kernels::set_workers(workers == 0 ? 1 : workers);

    advbench::ExperimentConfig cfg =
        config_path.empty() ? advbench::default_config() : advbench::load_config(config_path);
    if (*seed_opt) cfg.apply_seed(seed);
    if (!out_dir.empty()) cfg.out = out_dir;
    cfg.validate();

    advbench::CommandOptions opt;
    opt.force = force;
    if (!detector.empty()) opt.detector = detector;
    if (!attack.empty()) opt.attack = attack;
    if (!eps_text.empty()) opt.epsilons = list_flag(eps_text, "--eps");
    if (!fpr_text.empty()) opt.fprs = list_flag(fpr_text, "--fpr");
    opt.sample_ids = ids;

    std::string summary;
    if (train->parsed()) summary = advbench::cmd_train(cfg, opt);
    else if (attack_cmd->parsed()) summary = advbench::cmd_attack(cfg, opt);
    else if (detect->parsed()) summary = advbench::cmd_detect(cfg, opt);
    else if (race->parsed()) summary = advbench::cmd_armsrace(cfg, opt);
    else if (curves->parsed()) summary = advbench::cmd_curves(cfg, opt);
    else if (cone->parsed()) summary = advbench::cmd_cone(cfg, opt);
    std::cout << summary;
    if (!summary.empty() && summary.back() != '\n') std::cout << '\n';
    return kOk;
  } catch (const advbench::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const advbench::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
}
