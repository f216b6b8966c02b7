#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "asd/config.hpp"

namespace asd {

/// When this environment variable is set, relative output directories resolve
/// under it instead of the working directory. Absolute paths are unaffected.
extern const char* const kOutputRootEnv;

std::string resolve_output_dir(const std::string& configured);

/// Sets every seed field from one master value. Named derived streams keep
/// the generators distinct, so sharing the raw value is safe.
void override_master_seed(ExperimentConfig& cfg, std::uint64_t seed);

struct RunOptions {
  bool resume = false;           // training modes: continue from the latest checkpoint
  std::string plot_kind = "all";  // plot mode: loss-dist | curves | purity | all
};

struct RunSummary {
  std::string run_dir;
  std::string mode;
  int epochs_completed = 0;
  double final_acc = 0.0;
  double final_asr = 0.0;
  std::vector<std::string> outputs;  // notable files written
};

/// Orchestrates one experiment per cfg.mode:
///   poison           build the poisoned dataset and persist it as an artifact
///   train-asd        adaptive-split defense training
///   train-nodefense  equal-budget supervised baseline
///   eval             metrics for the latest checkpoint; writes a summary only
///   plot             render images from recorded artifacts
/// Training modes write metrics.tsv, losses.tsv + pools.tsv (defense only),
/// checkpoints, summary.txt, and persist the resolved config verbatim as
/// config.txt. A second run into a populated directory requires resume.
RunSummary run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

}  // namespace asd
