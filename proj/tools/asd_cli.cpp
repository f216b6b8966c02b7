#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "asd/runner.hpp"

namespace {

struct CliArgs {
  std::string config_path;
  std::string out;
  std::uint64_t seed = 0;
  bool resume = false;
  std::string kind = "all";
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training-time defense against backdoor poisoning via adaptive pool splitting"};
  app.require_subcommand(1);

  CliArgs args;
  const std::vector<std::pair<std::string, std::string>> modes = {
      {"poison", "Build the poisoned dataset and persist it as an on-disk artifact"},
      {"train-asd", "Train with the adaptive splitting defense"},
      {"train-nodefense", "Equal-budget supervised baseline (no defense)"},
      {"eval", "Evaluate the latest checkpoint in the run directory"},
      {"plot", "Render plots from recorded run artifacts"},
  };
  for (const auto& [name, desc] : modes) {
    CLI::App* sub = app.add_subcommand(name, desc);
    CLI::Option* config_opt = sub->add_option("--config", args.config_path,
                                              "Experiment config file (for eval/plot, defaults "
                                              "to config.txt inside the run directory)");
    if (name != "eval" && name != "plot") config_opt->required();
    sub->add_option("--out", args.out, "Run directory (overrides the config's output setting)");
    sub->add_option("--seed", args.seed, "Master seed override (sets every seed field)");
    if (name == "train-asd" || name == "train-nodefense")
      sub->add_flag("--resume", args.resume, "Continue from the latest checkpoint in the run directory");
    if (name == "plot")
      sub->add_option("--kind", args.kind, "Plot kind: loss-dist | curves | purity | all")
          ->default_val("all");
  }

  CLI11_PARSE(app, argc, argv);

  try {
    CLI::App* sub = app.get_subcommands().front();
    const std::string mode = sub->get_name();

    std::string config_path = args.config_path;
    if (config_path.empty()) {
      if (args.out.empty())
        throw std::runtime_error(mode + " needs --config or --out (to find the run's config.txt)");
      config_path =
          (std::filesystem::path(asd::resolve_output_dir(args.out)) / "config.txt").string();
    }

    asd::ExperimentConfig cfg = asd::parse_config(config_path);
    cfg.mode = mode;
    if (!args.out.empty()) cfg.output_dir = args.out;
    if (sub->count("--seed") > 0) asd::override_master_seed(cfg, args.seed);

    asd::RunOptions opts;
    opts.resume = args.resume;
    opts.plot_kind = args.kind;

    const asd::RunSummary s = asd::run_experiment(cfg, opts);

    std::printf("run dir: %s\n", s.run_dir.c_str());
    if (mode == "train-asd" || mode == "train-nodefense" || mode == "eval")
      std::printf("epochs: %d  acc: %.4f  asr: %.4f\n", s.epochs_completed, s.final_acc,
                  s.final_asr);
    for (const auto& path : s.outputs) std::printf("wrote %s\n", path.c_str());
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
