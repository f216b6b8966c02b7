#pragma once

#include <cstdint>
#include <string>

#include "asd/poison.hpp"
#include "asd/trainer.hpp"

namespace asd {

struct DatasetConfig {
  std::string source = "synthetic";  // synthetic | cifar10
  std::string cifar_root;
  double subset_fraction = 1.0;
  int train_size = 5000;     // synthetic
  int test_size = 1000;      // synthetic
  double hard_fraction = 0.1;  // synthetic
  std::uint64_t seed = 1;
};

struct AttackConfig {
  std::string trigger = "badnets-patch";  // badnets-patch | blend | none
  int target_label = 3;
  double poison_rate = 0.05;
  std::uint64_t seed = 1;
  int patch_side = 2;
  double patch_value = 1.0;
  int anchor_row = 0;
  int anchor_col = 0;
  double blend_ratio = 0.1;
  std::uint64_t pattern_seed = 7;
};

struct ExperimentConfig {
  std::string mode = "train-asd";  // set by the CLI subcommand, not the file
  DatasetConfig dataset;
  AttackConfig attack;
  TrainerConfig trainer;          // schedule + split + mixmatch + model + lr + seed
  std::uint64_t seed_draw = 11;   // clean-seed sampling stream
  int eval_every = 1;
  int checkpoint_every = 0;  // 0: final checkpoint only
  std::string output_dir = "runs/out";
};

/// Parse and fully validate; unknown keys and constraint violations throw
/// with the offending key named. Absent keys keep their defaults.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config(const std::string& path);

void validate(const ExperimentConfig& cfg);

/// Round-trips: parse(serialize(c)) == c.
std::string serialize_config(const ExperimentConfig& cfg);

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

/// Assemble the attack TriggerSpec for the configured image geometry.
TriggerSpec trigger_from_config(const AttackConfig& attack, int channels, int height, int width);

PoisonPolicy policy_from_config(const AttackConfig& attack);

}  // namespace asd
