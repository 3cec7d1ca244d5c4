#include <cstdio>
#include <exception>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedinv/config.hpp"
#include "fedinv/errors.hpp"
#include "fedinv/runner.hpp"

using namespace fedinv;

int main(int argc, char** argv) {
  CLI::App app{"fedinv: reconstruct client training data from federated weight updates"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir, master_seed, workers, repeats;
  app.add_option("--config", config_path,
                 "experiment config file ([section] headers over key = value lines)");
  app.add_option("--set", overrides,
                 "override one config key, e.g. --set run.repeats=5 (repeatable)");
  app.add_option("--out", out_dir, "shorthand for --set run.out_dir=...");
  app.add_option("--seed", master_seed, "shorthand for --set run.master_seed=...");
  app.add_option("--workers", workers, "shorthand for --set run.workers=...");
  app.add_option("--repeats", repeats, "shorthand for --set run.repeats=...");

  CLI::App* train = app.add_subcommand(
      "train-client", "train one client per repeat and persist the rounds");
  train->fallthrough();

  std::string attack_update, method;
  CLI::App* attack =
      app.add_subcommand("attack", "reconstruct training data from a persisted round");
  attack->fallthrough();
  attack->add_option("--update", attack_update, "persisted round to attack")->required();
  attack->add_option("--method", method, "ig | sme | sim")->required();

  std::string diag_update, mode;
  CLI::App* diagnose =
      app.add_subcommand("diagnose", "emit analysis series for a persisted round");
  diagnose->fallthrough();
  diagnose->add_option("--update", diag_update,
                       "persisted round to analyze (not needed for flow2d)");
  diagnose->add_option("--mode", mode, "ratio | sweep | bounds | flow2d")->required();

  CLI::App* compare = app.add_subcommand(
      "compare", "run every configured method on matched rounds and summarize");
  compare->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }

  try {
    std::map<std::string, std::string> kv;
    if (!config_path.empty()) kv = read_config_file(config_path);
    std::vector<std::string> all;
    if (!out_dir.empty()) all.push_back("run.out_dir=" + out_dir);
    if (!master_seed.empty()) all.push_back("run.master_seed=" + master_seed);
    if (!workers.empty()) all.push_back("run.workers=" + workers);
    if (!repeats.empty()) all.push_back("run.repeats=" + repeats);
    all.insert(all.end(), overrides.begin(), overrides.end());
    const ExperimentConfig cfg = make_config(kv, all);

    if (train->parsed()) {
      for (const std::string& p : cmd_train_client(cfg)) std::printf("%s\n", p.c_str());
    } else if (attack->parsed()) {
      std::printf("%s\n", cmd_attack(attack_update, method, cfg).c_str());
    } else if (diagnose->parsed()) {
      if (mode != "flow2d" && diag_update.empty())
        throw ConfigError("diagnose mode '" + mode + "' needs --update");
      std::printf("%s\n", cmd_diagnose(diag_update, mode, cfg).c_str());
    } else if (compare->parsed()) {
      std::printf("%s\n", cmd_compare(cfg).c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
