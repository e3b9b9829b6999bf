#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "liftdig/experiments.hpp"

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitMissingDependency = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lifted-linear excavation models and contouring control experiments"};
  app.require_subcommand(1, 1);
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> threads;

  const char* names[] = {"terrain", "collect", "train", "eval", "dig", "sweep"};
  const char* help[] = {"Generate the dig terrain",
                        "Collect training and test datasets",
                        "Regress the model variants",
                        "Multi-horizon prediction error of every variant",
                        "Closed-loop digging runs (q_theta list or consecutive scoops)",
                        "Training-size sweep of prediction and tracking error"};
  for (int i = 0; i < 6; ++i) {
    CLI::App* sub = app.add_subcommand(names[i], help[i]);
    sub->add_option("--config", config_file, "Experiment config (JSON)")->required();
    sub->add_option("--seed", seed, "Override the master seed");
    sub->add_option("--out", out, "Override the output directory");
    sub->add_option("--threads", threads, "Worker threads (0: all cores)");
  }
  CLI11_PARSE(app, argc, argv);

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    liftdig::ExperimentConfig cfg = liftdig::load_config(config_file);
    if (seed) cfg.seed = *seed;
    if (out) cfg.out = *out;
    if (threads) cfg.threads = *threads;
    nlohmann::json summary;
    if (cmd == "terrain") summary = liftdig::cmd_terrain(cfg);
    else if (cmd == "collect") summary = liftdig::cmd_collect(cfg);
    else if (cmd == "train") summary = liftdig::cmd_train(cfg);
    else if (cmd == "eval") summary = liftdig::cmd_eval(cfg);
    else if (cmd == "dig") summary = liftdig::cmd_dig(cfg);
    else summary = liftdig::cmd_sweep(cfg);
    std::cout << summary.dump(2) << "\n";
    if (summary.value("partial", false)) {
      std::cerr << "liftdig " << cmd << ": completed with flagged partial outputs\n";
      return kExitFailure;
    }
    return 0;
  } catch (const liftdig::MissingDependency& e) {
    std::cerr << "liftdig " << cmd << ": " << e.what() << "\n";
    return kExitMissingDependency;
  } catch (const std::exception& e) {
    std::cerr << "liftdig " << cmd << ": error: " << e.what() << "\n";
    return kExitFailure;
  }
}
