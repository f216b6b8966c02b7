#pragma once

#include <optional>
#include <string>

#include "asd/trainer.hpp"

namespace asd {

/// Writes checkpoint-<epoch>.bin (parameters + optimizer state) and
/// checkpoint-<epoch>.manifest (epoch, model spec, RNG streams) into dir.
/// Returns the manifest path.
std::string save_checkpoint(const std::string& dir, TrainState& state, const TrainerConfig& cfg);

/// Rebuilds a TrainState from a manifest written by save_checkpoint. The
/// config must describe the same model; resume is bit-compatible.
TrainState load_checkpoint(const std::string& manifest_path, const TrainerConfig& cfg);

/// Highest-epoch manifest in dir, if any checkpoint exists.
std::optional<std::string> latest_checkpoint(const std::string& dir);

}  // namespace asd
